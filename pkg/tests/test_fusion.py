import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firescan.fusion import ClassTable, cpv_labels, merge_faces_cpv, stack_counts, suppress_regions
from firescan.geometry import FaceSpec, face_specs

FIRE_ALARM, SPRINKLER, HOSE_REEL = 4, 9, 7
# pixels exactly on a frustum edge need a shared tolerance to agree
EDGE = 1 + 1e-9


def cpv_oracle(votes):
    """Both CPV rules on an explicit vote list, lowest id on ties."""
    counts = Counter(votes)
    if not counts:
        return 0
    top = max(counts.values())
    best = min(c for c, n in counts.items() if n == top)
    assets = {c: n for c, n in counts.items() if c != 0}
    if best == 0 and assets:
        top = max(assets.values())
        best = min(c for c, n in assets.items() if n == top)
    return best


def face_hits(w, h, specs):
    """Per equirect pixel: [(face index, face x, face y)] via scalar trig."""
    table = {}
    for v in range(h):
        for u in range(w):
            lon = u / w * 2 * math.pi - math.pi
            lat = v / h * math.pi - math.pi / 2
            d = (math.cos(lat) * math.sin(lon), math.sin(lat), math.cos(lat) * math.cos(lon))
            hits = []
            for k, s in enumerate(specs):
                # undo yaw (about y) then pitch (about x)
                cy, sy = math.cos(s.yaw), math.sin(s.yaw)
                x1, y1, z1 = cy * d[0] - sy * d[2], d[1], sy * d[0] + cy * d[2]
                cp, sp = math.cos(s.pitch), math.sin(s.pitch)
                x2, y2, z2 = x1, cp * y1 + sp * z1, -sp * y1 + cp * z1
                if z2 <= 0 or abs(x2 / z2) > EDGE or abs(y2 / z2) > EDGE:
                    continue
                f = s.resolution / 2
                fx = min(max(math.floor(x2 / z2 * f + f + 0.5), 0), s.resolution - 1)
                fy = min(max(math.floor(y2 / z2 * f + f + 0.5), 0), s.resolution - 1)
                hits.append((k, fx, fy))
            table[v, u] = hits
    return table


def brute_force_merge(faces, hits, w, h):
    out = np.zeros((h, w), dtype=np.uint8)
    for (v, u), hs in hits.items():
        out[v, u] = cpv_oracle([int(faces[k][1][fy, fx]) for k, fx, fy in hs])
    return out


class TestClassTable:
    def test_default_has_15_classes_in_order(self):
        t = ClassTable.default()
        assert t.num_classes == 15
        assert t.name(1) == "fire extinguisher"
        assert t.name(9) == "sprinkler"
        assert t.name(15) == "hidden fire equipment"
        assert t.name(0) == "background"
        assert t.weights()[0] == 1.0 and np.all(t.weights()[1:] == 2.0)

    def test_rejects_gaps(self):
        from firescan.fusion import AssetClass
        with pytest.raises(ValueError):
            ClassTable((AssetClass(1, "a"), AssetClass(3, "b")))


class TestSuppress:
    def test_full_suppression(self):
        mask = np.full((8, 8), HOSE_REEL, np.uint8)
        assert np.all(suppress_regions(mask, np.ones((8, 8), np.uint8)) == 0)

    def test_identity(self):
        mask = np.random.default_rng(1).integers(0, 16, (8, 8)).astype(np.uint8)
        np.testing.assert_array_equal(suppress_regions(mask, np.zeros((8, 8), np.uint8)), mask)

    def test_person_half_covers_blob(self):
        mask = np.zeros((20, 20), np.uint8)
        mask[5:15, 5:15] = HOSE_REEL
        person = np.zeros_like(mask)
        person[:, :10] = 1
        out = suppress_regions(mask, person)
        np.testing.assert_array_equal(out, mask * (1 - person))
        assert np.all(out[5:15, 10:15] == HOSE_REEL)
        assert np.all(out[:, :10] == 0)

    def test_nonzero_means_suppress(self):
        mask = np.full((2, 2), 3, np.uint8)
        supp = np.array([[0, 255], [7, 0]], np.uint8)
        np.testing.assert_array_equal(suppress_regions(mask, supp), [[3, 0], [0, 3]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            suppress_regions(np.zeros((4, 4)), np.zeros((4, 5)))


class TestCPVRule:
    @pytest.mark.parametrize("votes, expected", [
        ([0, 0, SPRINKLER], SPRINKLER),
        ([0, 0], 0),
        ([FIRE_ALARM, FIRE_ALARM, SPRINKLER], FIRE_ALARM),
        ([SPRINKLER, FIRE_ALARM], FIRE_ALARM),  # tie -> lowest id
        ([0, 0, 0, SPRINKLER, FIRE_ALARM, SPRINKLER], SPRINKLER),
        ([], 0),
    ])
    def test_examples(self, votes, expected):
        assert cpv_labels(stack_counts([votes], 15))[0] == expected
        assert cpv_oracle(votes) == expected

    @given(st.lists(st.lists(st.integers(0, 15), max_size=18), min_size=1, max_size=40))
    def test_matches_oracle(self, vote_lists):
        got = cpv_labels(stack_counts(vote_lists, 15))
        assert list(got) == [cpv_oracle(v) for v in vote_lists]


W, H, RES = 64, 32, 12
SPECS = face_specs(6, RES)


@pytest.fixture(scope="module")
def hits():
    return face_hits(W, H, SPECS)


def random_faces(rng, n_labels=16, p_bg=0.6):
    faces = []
    for s in SPECS:
        lab = rng.integers(1, n_labels, (RES, RES))
        lab[rng.random((RES, RES)) < p_bg] = 0
        faces.append((s, lab.astype(np.uint8)))
    return faces


class TestMerge:
    def test_matches_brute_force(self, hits):
        rng = np.random.default_rng(11)
        for _ in range(10):
            faces = random_faces(rng)
            np.testing.assert_array_equal(merge_faces_cpv(faces, 15, W, H),
                                          brute_force_merge(faces, hits, W, H))

    @settings(max_examples=15, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_order_independent(self, rnd):
        rng = np.random.default_rng(rnd.randint(0, 2**32 - 1))
        faces = random_faces(rng, n_labels=4)
        perm = list(faces)
        rnd.shuffle(perm)
        np.testing.assert_array_equal(merge_faces_cpv(faces, 15, W, H), merge_faces_cpv(perm, 15, W, H))

    def test_output_ids_subset_of_inputs(self):
        rng = np.random.default_rng(5)
        faces = random_faces(rng, n_labels=4)
        present = {0} | set(np.unique(np.concatenate([f.ravel() for _, f in faces])))
        assert set(np.unique(merge_faces_cpv(faces, 15, W, H))) <= present

    def test_absent_faces_cast_no_votes(self):
        faces = [(s, np.full((RES, RES), 3, np.uint8)) for s in SPECS if s.ring == "horizontal"]
        out = merge_faces_cpv(faces, 15, W, H)
        assert out[H // 2].tolist() == [3] * W
        assert out[0].tolist() == [0] * W

    def test_rejects_bad_face(self):
        with pytest.raises(ValueError):
            merge_faces_cpv([(SPECS[0], np.zeros((RES, RES + 1), np.uint8))], 15, W, H)
        with pytest.raises(ValueError):
            merge_faces_cpv([(SPECS[0], np.full((RES, RES), 99, np.uint8))], 15, W, H)
        with pytest.raises(ValueError):
            merge_faces_cpv([], 15, 10, 10)

    def test_single_face_unused_spec(self):
        spec = FaceSpec("top", 2, 6, RES)
        out = merge_faces_cpv([(spec, np.full((RES, RES), 5, np.uint8))], 15, W, H)
        assert 0 < np.count_nonzero(out) < out.size
