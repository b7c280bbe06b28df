import numpy as np
import pytest

from seqreg.errors import EmptyBaseline, InsufficientPairs
from seqreg.evaluation import (
    CenterReport,
    bench_matchers,
    count_report,
    detected_centers,
    rmse_report,
    sequence_center_report,
)
from seqreg.features import FeatureSet
from seqreg.geometry import CorrespondenceSet, TranslationModel
from seqreg.matching import GateConfig, MatchSet


def matchset_at(src_pts, dst_pts=None):
    src = np.asarray(src_pts, dtype=float)
    dst = src - 60.0 if dst_pts is None else np.asarray(dst_pts, dtype=float)
    n = len(src)
    return MatchSet(np.arange(n), np.arange(n), np.zeros(n), src, dst)


class TestDetectedCenters:
    def test_exact_hits(self, rng):
        gt = rng.uniform(50, 350, (20, 2))
        ms = matchset_at(gt[:12])
        rep = detected_centers(ms, gt, n_gt_pairs=20)
        assert rep.error == pytest.approx(0.0, abs=1e-12)
        assert rep.ratio == pytest.approx(12 / 20)
        assert rep.n_detected == 12

    def test_all_beyond_gate_absent(self, rng):
        gt = rng.uniform(50, 350, (10, 2))
        ms = matchset_at(gt + 8.0)  # 8*sqrt(2) > 5 px away
        rep = detected_centers(ms, gt, n_gt_pairs=10)
        assert np.isnan(rep.error)
        assert rep.ratio == 0.0

    def test_error_equals_mean_perturbation(self, rng):
        gt = np.stack(
            [np.linspace(50, 350, 9), np.linspace(50, 350, 9)], axis=1
        )  # well separated
        offsets = rng.uniform(-2, 2, (9, 2))
        ms = matchset_at(gt + offsets)
        rep = detected_centers(ms, gt, n_gt_pairs=9)
        want = float(np.mean(np.linalg.norm(offsets, axis=1)))
        assert rep.error == pytest.approx(want, abs=1e-9)
        assert rep.n_detected == 9

    def test_greedy_unique_assignment(self):
        gt = np.array([[100.0, 100.0]])
        src = np.array([[101.0, 100.0], [100.0, 102.0]])  # both near the one center
        ms = matchset_at(src)
        rep = detected_centers(ms, gt, n_gt_pairs=1)
        assert rep.n_detected == 1
        assert rep.error == pytest.approx(1.0)  # the closer one wins

    def test_ratio_monotone_in_gate(self, rng):
        gt = np.stack([np.linspace(50, 350, 8), np.full(8, 200.0)], axis=1)
        ms = matchset_at(gt + rng.uniform(-4, 4, (8, 2)))
        ratios = [
            detected_centers(ms, gt, n_gt_pairs=8, gate=g).ratio for g in (6.0, 4.0, 2.0, 1.0)
        ]
        assert all(a >= b for a, b in zip(ratios, ratios[1:]))


class TestRmseReport:
    def gt_pair(self, rng, n=12):
        curr = rng.uniform(0, 400, (n, 2))
        prev = curr + np.array([60.0, 60.0])
        return CorrespondenceSet(prev, curr)

    def test_matches_equal_ground_truth(self, rng):
        gt = self.gt_pair(rng)
        ms = matchset_at(gt.prev, gt.curr)
        assert rmse_report(ms, gt) < 1e-6

    def test_single_outlier_closed_form(self, rng):
        gt = self.gt_pair(rng, n=8)
        src = np.vstack([gt.prev, [[900.0, 900.0]]])
        dst = np.vstack([gt.curr, [[900.0 - 60.0 + 100.0, 900.0 - 60.0]]])  # 100 px off
        ms = matchset_at(src, dst)
        # eight exact pairs plus one 100 px outlier
        want = np.sqrt(100.0**2 / 9.0)
        assert rmse_report(ms, gt) == pytest.approx(want, rel=1e-6)

    def test_needs_four_gt_pairs(self, rng):
        pts = rng.uniform(0, 100, (3, 2))
        gt = CorrespondenceSet(pts + 60.0, pts)
        with pytest.raises(InsufficientPairs):
            rmse_report(matchset_at(pts + 60.0, pts), gt)


class TestCountReport:
    def make(self, n):
        if n == 0:
            return MatchSet.empty()
        pts = np.stack([np.linspace(0, 400, n), np.zeros(n)], axis=1)
        return matchset_at(pts)

    def test_baseline_is_hundred(self):
        base = self.make(40)
        rep = count_report(base, {"ours": self.make(40)})
        assert rep["baseline"] == 100.0
        assert rep["ours"] == 100.0

    def test_empty_other_zero(self):
        rep = count_report(self.make(10), {"ours": self.make(0)})
        assert rep["ours"] == 0.0

    def test_half_subset(self):
        rep = count_report(self.make(40), {"ransac": self.make(20)})
        assert rep["ransac"] == 50.0

    def test_scale_free(self):
        a = count_report(self.make(10), {"m": self.make(4)})
        b = count_report(self.make(30), {"m": self.make(12)})
        assert a["m"] == pytest.approx(b["m"])

    def test_empty_baseline_raises(self):
        with pytest.raises(EmptyBaseline):
            count_report(MatchSet.empty(), {})


class TestBenchMatchers:
    def make_features(self, rng, n, dim=32, span=800.0):
        pos = rng.uniform(0, span, (n, 2))
        desc = rng.normal(size=(n, dim))
        desc /= np.linalg.norm(desc, axis=1, keepdims=True)
        return (
            FeatureSet(pos + np.array([20.0, 0.0]), desc),
            FeatureSet(pos, desc),
        )

    def test_counts_and_methods(self, rng):
        fs_prev, fs_curr = self.make_features(rng, 120)
        report = bench_matchers(
            fs_prev, fs_curr, TranslationModel(20.0, 0.0), GateConfig(10.0, 0.5), repetitions=3
        )
        full = 120 * 120
        assert report.ssd_evals["loop-lowest-ssd"] == full
        assert report.ssd_evals["vec-lowest-ssd"] == full
        assert report.ssd_evals["loop-ransac"] == full
        assert report.ssd_evals["loop-gated"] == report.ssd_evals["vec-gated"]
        assert 0 < report.ssd_evals["loop-gated"] < full
        for name, secs in report.seconds.items():
            assert secs > 0
        # an exact-prior gate matches everything the baseline does
        assert report.match_counts["vec-gated"] >= 0.9 * report.match_counts["vec-lowest-ssd"]

    def test_gate_bounds_candidates(self, rng):
        # sparse field: <= a handful of candidates per source
        fs_prev, fs_curr = self.make_features(rng, 300, span=4000.0)
        report = bench_matchers(
            fs_prev, fs_curr, TranslationModel(20.0, 0.0), GateConfig(10.0, 0.5), repetitions=3
        )
        assert report.ssd_evals["vec-gated"] <= 10 * 300

    def test_repetition_floor(self, rng):
        fs_prev, fs_curr = self.make_features(rng, 10)
        with pytest.raises(ValueError):
            bench_matchers(
                fs_prev, fs_curr, TranslationModel(0.0, 0.0), GateConfig(5.0), repetitions=2
            )

    def test_report_csv(self, rng, tmp_path):
        fs_prev, fs_curr = self.make_features(rng, 60)
        report = bench_matchers(
            fs_prev, fs_curr, TranslationModel(20.0, 0.0), GateConfig(10.0, 0.5), repetitions=3
        )
        path = tmp_path / "timing.csv"
        report.save(path)
        text = path.read_text()
        assert text.startswith("method,median_seconds,ssd_evals,n_matches")
        assert "vec-gated" in text


class TestSequenceReport:
    def test_csv_and_summary(self, tmp_path):
        rep = CenterReport(
            errors=np.array([0.5, np.nan]),
            ratios=np.array([0.7, 0.0]),
            rmses=np.array([2.0, np.nan]),
        )
        path = tmp_path / "report.csv"
        rep.save(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "pair,center_error,center_ratio,rmse"
        assert len(lines) == 3
        assert "nan" in lines[2]
        assert "mean" in rep.summary()
