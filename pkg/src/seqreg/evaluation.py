"""Benchmark metrics: detected-center accuracy, RMSE against ground truth,
matching-count percentages and matcher timing/operation-count comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBaseline, InsufficientPairs
from .geometry import CorrespondenceSet, estimate_homography_dlt, rmse
from .matching import (
    GateConfig,
    MatchSet,
    candidate_mask,
    match_gated,
    match_lowest_ssd,
    ransac_homography,
)

DETECTED_CENTER_GATE = 5.0  # px


@dataclass(frozen=True)
class CenterPairReport:
    """Detected-center metrics for one consecutive pair.

    ``error`` is NaN when no match landed within the gate of any
    ground-truth center (the absent marker).
    """

    error: float
    ratio: float
    n_detected: int


@dataclass(frozen=True)
class CenterReport:
    """Per-pair detected-center error/ratio plus RMSE for a whole sequence."""

    errors: np.ndarray
    ratios: np.ndarray
    rmses: np.ndarray

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("pair,center_error,center_ratio,rmse\n")
            for k in range(len(self.errors)):
                fh.write(
                    f"{k},{float(self.errors[k])!r},{float(self.ratios[k])!r},"
                    f"{float(self.rmses[k])!r}\n"
                )

    def summary(self) -> str:
        lines = ["pair  center_error  center_ratio   rmse"]
        for k in range(len(self.errors)):
            lines.append(
                f"{k:4d}  {self.errors[k]:12.4f}  {self.ratios[k]:12.4f}  {self.rmses[k]:6.3f}"
            )
        lines.append(
            "mean  {:12.4f}  {:12.4f}  {:6.3f}".format(
                float(np.nanmean(self.errors)),
                float(np.mean(self.ratios)),
                float(np.nanmean(self.rmses)),
            )
        )
        return "\n".join(lines)


def _as_correspondences(matches) -> CorrespondenceSet:
    if isinstance(matches, MatchSet):
        return matches.to_correspondences()
    return matches


def detected_centers(matches, gt_centers: np.ndarray, n_gt_pairs: int, gate: float = DETECTED_CENTER_GATE) -> CenterPairReport:
    """Match sources against ground-truth centers within a pixel gate.

    A matched source point is a detected center when it lies within the
    gate of some ground-truth center; assignment is unique greedy by
    ascending distance so one center cannot be counted twice.  The ratio
    is detected centers over ground-truth correspondences.
    """
    corr = _as_correspondences(matches)
    gt = np.asarray(gt_centers, dtype=float).reshape(-1, 2)
    if len(corr) == 0 or len(gt) == 0 or n_gt_pairs == 0:
        return CenterPairReport(float("nan"), 0.0, 0)
    src = corr.prev
    d = np.sqrt(
        (src[:, 0, None] - gt[None, :, 0]) ** 2 + (src[:, 1, None] - gt[None, :, 1]) ** 2
    )
    ii, jj = np.nonzero(d <= gate)
    if len(ii) == 0:
        return CenterPairReport(float("nan"), 0.0, 0)
    order = np.lexsort((jj, ii, d[ii, jj]))
    used_src = np.zeros(len(src), dtype=bool)
    used_gt = np.zeros(len(gt), dtype=bool)
    dists = []
    for idx in order:
        i, j = ii[idx], jj[idx]
        if used_src[i] or used_gt[j]:
            continue
        used_src[i] = True
        used_gt[j] = True
        dists.append(d[i, j])
    n_det = len(dists)
    return CenterPairReport(float(np.mean(dists)), n_det / n_gt_pairs, n_det)


def rmse_report(matches, gt_pair: CorrespondenceSet) -> float:
    """RMSE of candidate matches under the transform fitted to ground truth.

    The reference transform is estimated by DLT on the ground-truth
    correspondences of the same pair, then the matches are scored by
    reprojection error under it.
    """
    if len(gt_pair) < 4:
        raise InsufficientPairs("need >= 4 ground-truth pairs to fit the reference transform")
    t = estimate_homography_dlt(gt_pair)
    corr = _as_correspondences(matches)
    if len(corr) == 0:
        return float("nan")
    return rmse(corr, t)


def sequence_center_report(match_sets, gt, gate: float = DETECTED_CENTER_GATE) -> CenterReport:
    """Per-pair detected-center metrics and RMSE over a registered sequence."""
    errors, ratios, rmses = [], [], []
    for k, ms in enumerate(match_sets):
        gt_pair = gt.pairs[k]
        rep = detected_centers(ms, gt.frames[k].deformed, len(gt_pair), gate)
        errors.append(rep.error)
        ratios.append(rep.ratio)
        if len(gt_pair) >= 4 and len(_as_correspondences(ms)):
            rmses.append(rmse_report(ms, gt_pair))
        else:
            rmses.append(float("nan"))
    return CenterReport(np.array(errors), np.array(ratios), np.array(rmses))


def count_report(baseline: MatchSet, others: dict) -> dict:
    """Matching-point percentages relative to the lowest-SSD baseline."""
    if len(baseline) == 0:
        raise EmptyBaseline("baseline match set is empty")
    out = {"baseline": 100.0}
    for name, ms in others.items():
        out[name] = 100.0 * len(ms) / len(baseline)
    return out


@dataclass(frozen=True)
class TimingReport:
    """Median wall-clock per method plus exact SSD-evaluation counts."""

    n_prev: int
    n_curr: int
    dim: int
    seconds: dict = field(default_factory=dict)
    ssd_evals: dict = field(default_factory=dict)
    match_counts: dict = field(default_factory=dict)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("method,median_seconds,ssd_evals,n_matches\n")
            for name in self.seconds:
                fh.write(
                    f"{name},{self.seconds[name]!r},{self.ssd_evals[name]},"
                    f"{self.match_counts[name]}\n"
                )

    def summary(self) -> str:
        lines = [
            f"descriptors: {self.n_prev} x {self.n_curr}, dim {self.dim}",
            f"{'method':<18} {'median_s':>10} {'ssd_evals':>12} {'matches':>8}",
        ]
        for name in self.seconds:
            lines.append(
                f"{name:<18} {self.seconds[name]:>10.4f} "
                f"{self.ssd_evals[name]:>12d} {self.match_counts[name]:>8d}"
            )
        return "\n".join(lines)


def _median_time(fn, repetitions: int):
    times = []
    result = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), result


def bench_matchers(
    fs_prev,
    fs_curr,
    prior,
    gate: GateConfig,
    repetitions: int = 5,
    ransac_iterations: int = 2000,
) -> TimingReport:
    """Time the matcher variants and count their SSD evaluations.

    Methods: loop and vectorized lowest-SSD, loop and vectorized gated,
    and lowest-SSD followed by RANSAC filtering.  Evaluation counts are
    architecture independent; wall-clock numbers are informational.
    """
    if repetitions < 3:
        raise ValueError("need >= 3 repetitions for a stable median")
    m, n = len(fs_prev), len(fs_curr)
    full_evals = m * n
    gated_evals = int(
        candidate_mask(fs_prev.positions, fs_curr.positions, prior, gate.radius).sum()
    )

    report = TimingReport(n_prev=m, n_curr=n, dim=fs_prev.descriptor_dim)

    def run(name, fn, evals):
        secs, ms = _median_time(fn, repetitions)
        report.seconds[name] = secs
        report.ssd_evals[name] = evals
        report.match_counts[name] = len(ms)

    run("loop-lowest-ssd", lambda: match_lowest_ssd(fs_prev, fs_curr, gate.threshold, kernel="loop"), full_evals)
    run("vec-lowest-ssd", lambda: match_lowest_ssd(fs_prev, fs_curr, gate.threshold, kernel="vectorized"), full_evals)
    run("loop-gated", lambda: match_gated(fs_prev, fs_curr, prior, gate, kernel="loop"), gated_evals)
    run("vec-gated", lambda: match_gated(fs_prev, fs_curr, prior, gate, kernel="vectorized"), gated_evals)

    baseline = match_lowest_ssd(fs_prev, fs_curr, gate.threshold, kernel="loop")

    def ransac_run():
        if len(baseline) < 4:
            return baseline
        ms = match_lowest_ssd(fs_prev, fs_curr, gate.threshold, kernel="loop")
        try:
            _, mask = ransac_homography(
                ms.to_correspondences(), iterations=ransac_iterations, seed=0
            )
        except InsufficientPairs:
            return ms
        return ms.subset(mask)

    run("loop-ransac", ransac_run, full_evals)
    return report
