import numpy as np
import pytest

from seqreg.errors import DimensionMismatch, InsufficientPairs, TemplateTooLarge
from seqreg.features import FeatureSet
from seqreg.geometry import CorrespondenceSet, TranslationModel, apply
from seqreg.matching import (
    GateConfig,
    MatchSet,
    candidate_mask,
    match_gated,
    match_lowest_ssd,
    ncc_map,
    ransac_homography,
    ssd,
    ssd_matrix_loop,
    ssd_matrix_vectorized,
    write_ncc_map,
)
from conftest import random_homography


def ssd_loop_oracle(a, b):
    """Direct componentwise definition, scalar python arithmetic."""
    return sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))


def feature_set(positions, descriptors):
    return FeatureSet(np.asarray(positions, dtype=float), np.asarray(descriptors, dtype=float))


class TestSsd:
    def test_identical_rows(self, rng):
        a = rng.normal(size=16)
        assert ssd(a, a) == 0.0

    def test_three_four_five(self):
        assert ssd(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 25.0

    def test_expansion_identity(self, rng):
        # the expanded |a|^2+|b|^2-2ab form must agree with the direct sum
        for _ in range(10):
            a = rng.normal(size=128)
            b = rng.normal(size=128)
            direct = ssd_loop_oracle(a, b)
            expanded = float(a @ a) + float(b @ b) - 2.0 * float(a @ b)
            assert ssd(a, b) == pytest.approx(direct, abs=1e-9)
            assert expanded == pytest.approx(direct, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ssd(np.zeros(4), np.zeros(5))


class TestSsdMatrices:
    def test_zero_diagonal(self, rng):
        v = rng.normal(size=(8, 16))
        s = ssd_matrix_loop(v, v)
        assert np.allclose(np.diag(s), 0.0)

    def test_one_by_one_reduces_to_ssd(self, rng):
        a = rng.normal(size=(1, 32))
        b = rng.normal(size=(1, 32))
        assert ssd_matrix_loop(a, b)[0, 0] == pytest.approx(ssd(a[0], b[0]))

    def test_loop_elementwise_oracle(self, rng):
        vp = rng.normal(size=(10, 12))
        vc = rng.normal(size=(13, 12))
        s = ssd_matrix_loop(vp, vc)
        for j in range(10):
            for k in range(13):
                assert s[j, k] == pytest.approx(ssd(vp[j], vc[k]), abs=1e-12)

    def test_vectorized_equals_loop(self, rng):
        vp = rng.normal(size=(100, 128))
        vc = rng.normal(size=(100, 128))
        a = ssd_matrix_loop(vp, vc)
        b = ssd_matrix_vectorized(vp, vc)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_vectorized_orthonormal_rows(self):
        vp = np.eye(4)
        vc = np.eye(4)
        s = ssd_matrix_vectorized(vp, vc)
        dots = vp @ vc.T
        assert np.allclose(s, 2.0 - 2.0 * dots, atol=1e-12)
        assert np.allclose(np.diag(s), 0.0)

    def test_zero_targets_gives_row_norms(self, rng):
        vp = rng.normal(size=(6, 20))
        vc = np.zeros((3, 20))
        s = ssd_matrix_vectorized(vp, vc)
        for j in range(6):
            assert np.allclose(s[j], float(vp[j] @ vp[j]), atol=1e-9)

    def test_candidate_mask_restriction(self, rng):
        vp = rng.normal(size=(7, 8))
        vc = rng.normal(size=(9, 8))
        mask = rng.random((7, 9)) < 0.4
        for kernel in (ssd_matrix_loop, ssd_matrix_vectorized):
            s = kernel(vp, vc, candidates=mask)
            assert np.all(np.isnan(s[~mask]))
            full = ssd_matrix_loop(vp, vc)
            assert np.allclose(s[mask], full[mask], atol=1e-9)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            ssd_matrix_vectorized(rng.normal(size=(2, 4)), rng.normal(size=(2, 5)))


class TestMatchLowestSsd:
    def test_single_identical_keypoint(self, rng):
        d = rng.normal(size=8)
        d /= np.linalg.norm(d)
        fs_prev = feature_set([[10.0, 10.0]], [d])
        fs_curr = feature_set([[40.0, 40.0], [80.0, 10.0]], [rng.normal(size=8), d])
        ms = match_lowest_ssd(fs_prev, fs_curr, threshold=0.5)
        assert len(ms) == 1
        assert ms.dst_idx[0] == 1
        assert ms.ssd[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_threshold_distinct(self, rng):
        fs_prev = feature_set(rng.uniform(0, 50, (4, 2)), rng.normal(size=(4, 8)))
        fs_curr = feature_set(rng.uniform(0, 50, (4, 2)), rng.normal(size=(4, 8)))
        assert len(match_lowest_ssd(fs_prev, fs_curr, threshold=0.0)) == 0

    def test_replica_ambiguity(self, rng):
        # two identical target descriptors at different positions: the
        # global minimum is non-unique and binds to the first replica
        d = rng.normal(size=8)
        fs_prev = feature_set([[100.0, 0.0]], [d])
        fs_curr = feature_set([[40.0, 0.0], [100.0, 0.0]], [d, d])
        s = ssd_matrix_vectorized(fs_prev.descriptors, fs_curr.descriptors)
        assert s[0, 0] == s[0, 1]  # ambiguous by construction
        ms = match_lowest_ssd(fs_prev, fs_curr, threshold=np.inf)
        assert ms.dst_idx[0] == 0  # binds to the wrong replica

    def test_infinite_threshold_matches_every_source(self, rng):
        fs_prev = feature_set(rng.uniform(0, 50, (9, 2)), rng.normal(size=(9, 6)))
        fs_curr = feature_set(rng.uniform(0, 50, (5, 2)), rng.normal(size=(5, 6)))
        ms = match_lowest_ssd(fs_prev, fs_curr, threshold=np.inf)
        assert len(ms) == 9
        assert np.array_equal(np.sort(ms.src_idx), np.arange(9))


class TestMatchGated:
    def test_single_in_gate_target(self, rng):
        d = rng.normal(size=8)
        fs_prev = feature_set([[100.0, 100.0]], [d])
        fs_curr = feature_set([[40.0, 40.0]], [d])
        ms = match_gated(fs_prev, fs_curr, TranslationModel(60.0, 60.0), GateConfig(10.0))
        assert len(ms) == 1 and ms.ssd[0] == 0.0

    def test_out_of_gate_replica_excluded(self, rng):
        d = rng.normal(size=8)
        # identical descriptors 60 px apart; only the in-gate one is eligible
        fs_prev = feature_set([[100.0, 0.0]], [d])
        fs_curr = feature_set([[40.0, 0.0], [100.0, 0.0]], [d, d])
        prior = TranslationModel(60.0, 0.0)
        ms = match_gated(fs_prev, fs_curr, prior, GateConfig(10.0, np.inf))
        assert len(ms) == 1
        assert ms.dst_idx[0] == 0

    def test_empty_gate_unmatched(self, rng):
        d = rng.normal(size=8)
        fs_prev = feature_set([[100.0, 0.0]], [d])
        fs_curr = feature_set([[100.0, 0.0]], [d])
        ms = match_gated(fs_prev, fs_curr, TranslationModel(60.0, 0.0), GateConfig(5.0))
        assert len(ms) == 0

    def test_gating_is_a_restriction(self, rng):
        dim = 16
        n = 40
        pos_curr = rng.uniform(0, 200, (n, 2))
        desc = rng.normal(size=(n, dim))
        desc /= np.linalg.norm(desc, axis=1, keepdims=True)
        true = TranslationModel(25.0, -10.0)
        pos_prev = pos_curr + np.array([true.dx, true.dy]) + rng.normal(0, 1.0, (n, 2))
        fs_prev = feature_set(pos_prev, desc + rng.normal(0, 0.01, (n, dim)))
        fs_curr = feature_set(pos_curr, desc)
        gate = GateConfig(radius=6.0, threshold=0.5)
        gated = match_gated(fs_prev, fs_curr, true, gate)
        assert len(gated) > 0
        low = match_lowest_ssd(fs_prev, fs_curr, threshold=gate.threshold)
        low_pairs = set(zip(low.src_idx, low.dst_idx))
        for i in range(len(gated)):
            assert gated.ssd[i] <= gate.threshold
            proj = gated.src_xy[i] - np.array([true.dx, true.dy])
            assert np.linalg.norm(gated.dst_xy[i] - proj) <= gate.radius
            # every gated pair is SSD-feasible for the ungated matcher too
            assert (gated.src_idx[i], gated.dst_idx[i]) in low_pairs or gated.ssd[
                i
            ] >= low.ssd[list(low.src_idx).index(gated.src_idx[i])]

    def test_tie_breaks_by_distance_then_index(self):
        d = np.ones(4)
        fs_prev = feature_set([[50.0, 50.0]], [d])
        # two identical candidates, the second closer to the projection
        fs_curr = feature_set([[58.0, 50.0], [52.0, 50.0]], [d, d])
        ms = match_gated(fs_prev, fs_curr, TranslationModel(0.0, 0.0), GateConfig(10.0, np.inf))
        assert ms.dst_idx[0] == 1
        # equidistant candidates fall back to the lower index
        fs_curr = feature_set([[54.0, 50.0], [46.0, 50.0]], [d, d])
        ms = match_gated(fs_prev, fs_curr, TranslationModel(0.0, 0.0), GateConfig(10.0, np.inf))
        assert ms.dst_idx[0] == 0

    def test_kernels_agree(self, rng):
        n = 30
        pos = rng.uniform(0, 100, (n, 2))
        desc = rng.normal(size=(n, 8))
        fs_prev = feature_set(pos + [5.0, 0.0], desc + rng.normal(0, 0.05, (n, 8)))
        fs_curr = feature_set(pos, desc)
        prior = TranslationModel(5.0, 0.0)
        a = match_gated(fs_prev, fs_curr, prior, GateConfig(8.0, 1.0), kernel="loop")
        b = match_gated(fs_prev, fs_curr, prior, GateConfig(8.0, 1.0), kernel="vectorized")
        assert np.array_equal(a.src_idx, b.src_idx)
        assert np.array_equal(a.dst_idx, b.dst_idx)

    def test_candidate_counts_shrink_with_gate(self, rng):
        pos_prev = rng.uniform(0, 300, (50, 2))
        pos_curr = rng.uniform(0, 300, (60, 2))
        prior = TranslationModel(0.0, 0.0)
        tight = candidate_mask(pos_prev, pos_curr, prior, 10.0).sum()
        assert tight < 50 * 60


class TestRansac:
    def test_all_consistent(self, rng):
        h = random_homography(rng)
        curr = rng.uniform(0, 100, (30, 2))
        prev = apply(h, curr)
        got, mask = ransac_homography(CorrespondenceSet(prev, curr), seed=3)
        assert mask.all()
        assert np.allclose(got.m, h.m, atol=1e-6)

    def test_outlier_rejection(self, rng):
        n = 100
        curr = rng.uniform(0, 400, (n, 2))
        prev = curr + np.array([60.0, 60.0])
        n_out = 30
        out_idx = rng.choice(n, n_out, replace=False)
        prev = prev.copy()
        prev[out_idx] += rng.uniform(20, 150, (n_out, 2))
        inlier_truth = np.ones(n, dtype=bool)
        inlier_truth[out_idx] = False
        _, mask = ransac_homography(
            CorrespondenceSet(prev, curr), iterations=2000, inlier_tol=2.0, seed=7
        )
        recovered = (mask & inlier_truth).sum() / inlier_truth.sum()
        assert recovered >= 0.95

    def test_too_few_pairs(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(InsufficientPairs):
            ransac_homography(CorrespondenceSet(pts, pts))

    def test_deterministic_for_seed(self, rng):
        curr = rng.uniform(0, 200, (40, 2))
        prev = curr + np.array([10.0, 5.0]) + rng.normal(0, 0.5, (40, 2))
        c = CorrespondenceSet(prev, curr)
        h1, m1 = ransac_homography(c, seed=11)
        h2, m2 = ransac_homography(c, seed=11)
        assert np.array_equal(m1, m2)
        assert np.array_equal(h1.m, h2.m)


class TestNcc:
    def test_subwindow_peak_is_one(self, rng):
        target = rng.random((50, 70))
        tpl = target[12:30, 20:45]
        out = ncc_map(tpl, target)
        assert out[12, 20] == pytest.approx(1.0, abs=1e-6)

    def test_constant_template_zero(self, rng):
        out = ncc_map(np.full((5, 5), 0.7), rng.random((20, 20)))
        assert np.all(out == 0.0)

    def test_zero_variance_window_zero(self, rng):
        target = np.zeros((20, 20))
        target[10:, :] = rng.random((10, 20))
        tpl = rng.random((4, 4))
        out = ncc_map(tpl, target)
        assert out[0, 0] == 0.0  # flat window contributes nothing

    def test_template_too_large(self, rng):
        with pytest.raises(TemplateTooLarge):
            ncc_map(rng.random((20, 20)), rng.random((20, 30)))

    def test_bounded(self, rng):
        out = ncc_map(rng.random((6, 6)), rng.random((40, 40)))
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_write_map(self, tmp_path, rng):
        out = ncc_map(rng.random((6, 6)), rng.random((30, 30)))
        pgm = tmp_path / "ncc.pgm"
        write_ncc_map(out, pgm)
        assert pgm.exists()
        sidecar = tmp_path / "ncc.pgm.extrema.txt"
        assert "max" in sidecar.read_text()


class TestMatchSet:
    def test_csv_roundtrip(self, rng, tmp_path):
        ms = MatchSet(
            np.arange(5),
            rng.integers(0, 9, 5),
            rng.random(5),
            rng.uniform(0, 400, (5, 2)),
            rng.uniform(0, 400, (5, 2)),
        )
        path = tmp_path / "matches.csv"
        ms.save(path)
        back = MatchSet.load(path)
        assert np.array_equal(back.src_idx, ms.src_idx)
        assert np.array_equal(back.dst_idx, ms.dst_idx)
        assert np.max(np.abs(back.ssd - ms.ssd)) < 1e-15
        assert np.max(np.abs(back.src_xy - ms.src_xy)) < 1e-15

    def test_duplicate_source_rejected(self):
        with pytest.raises(ValueError):
            MatchSet(
                np.array([1, 1]),
                np.array([0, 2]),
                np.zeros(2),
                np.zeros((2, 2)),
                np.zeros((2, 2)),
            )
