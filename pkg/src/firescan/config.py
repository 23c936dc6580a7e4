"""Pipeline configuration (YAML) and its validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .evaluation import DEFAULT_MAX_DIST
from .projection import DEFAULT_RADIUS

PATH_FIELDS = (
    "frames_dir", "masks_dir", "suppression_dir", "cloud", "poses", "mesh",
    "pairs", "ground_truth", "output_dir", "class_table",
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    output_dir: str = "out"
    frames_dir: str | None = None
    masks_dir: str | None = None  # defaults to <output_dir>/face_masks
    suppression_dir: str | None = None
    cloud: str | None = None
    poses: str | None = None
    mesh: str | None = None
    pairs: str | None = None
    ground_truth: str | None = None
    class_table: str | None = None  # default 15-class table when unset
    segmenter: list[str] = field(default_factory=list)
    nb_splits: int = 6
    face_resolution: int = 512
    radius: float = DEFAULT_RADIUS
    max_dist: float = DEFAULT_MAX_DIST
    sample_points: int = 1_000_000
    seed: int = 0
    workers: int = 1
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.segmenter, str):
            self.segmenter = self.segmenter.split()
        checks = [
            (self.nb_splits >= 1, "nb_splits must be >= 1"),
            (self.face_resolution > 0, "face_resolution must be positive"),
            (self.radius > 0, "radius must be positive"),
            (self.max_dist > 0, "max_dist must be positive"),
            (self.sample_points > 0, "sample_points must be positive"),
            (self.workers >= 1, "workers must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def path(self, name: str) -> Path | None:
        """Resolve a path field against the config file's directory."""
        value = getattr(self, name)
        if value is None:
            if name == "masks_dir":
                return self.path("output_dir") / "face_masks"
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def require(self, name: str) -> Path:
        p = self.path(name)
        if p is None:
            raise ConfigError(f"config parameter '{name}' is required for this stage")
        if not p.exists():
            raise ConfigError(f"config parameter '{name}': {p} does not exist")
        return p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return PipelineConfig.from_dict(data, base_dir=path.parent)
