"""Reference segmenters honouring the external segmenter contract.

The pipeline calls ``<command> ... {manifest} {output_dir}`` and expects one
single-channel class-id PNG per manifest row, named like the face image.

    python -m firescan.segmenters null MANIFEST OUTDIR
    python -m firescan.segmenters replay --source DIR MANIFEST OUTDIR

``null`` writes all-background masks.  ``replay`` serves precomputed
equirect label masks (``DIR/<frame_id>.png``) by rendering each requested
face from them with nearest-neighbour sampling.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .geometry import equirect_to_face


def run_null(manifest, out_dir: Path):
    for _, spec, _, _, name in manifest:
        fio.write_mask(out_dir / name, np.zeros((spec.resolution, spec.resolution), np.uint8))


def run_replay(manifest, out_dir: Path, source: Path):
    cache = {}
    for frame_id, spec, _, _, name in manifest:
        if frame_id not in cache:
            cache = {frame_id: fio.read_mask(source / f"{frame_id}.png")}
        fio.write_mask(out_dir / name, equirect_to_face(cache[frame_id], spec, "nearest"))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m firescan.segmenters", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kind", choices=("null", "replay"))
    ap.add_argument("manifest", type=Path)
    ap.add_argument("output_dir", type=Path)
    ap.add_argument("--source", type=Path, help="directory of equirect masks (replay)")
    args = ap.parse_args(argv)
    manifest = fio.read_face_manifest(args.manifest)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    if args.kind == "null":
        run_null(manifest, args.output_dir)
    else:
        if args.source is None:
            ap.error("replay needs --source")
        run_replay(manifest, args.output_dir, args.source)
    return 0


if __name__ == "__main__":
    sys.exit(main())
