"""Descriptor matching kernels and baselines.

The SSD matrix between two descriptor sets can be computed two ways with
identical results: a per-pair loop (the reference path) and a vectorized
form that expands the squared difference into precomputed row norms plus
one matrix product.  Entries outside the candidate mask are NaN, which is
the explicit "not evaluated" marker throughout (serialization writes the
literal token ``nan``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DimensionMismatch, InsufficientPairs, TemplateTooLarge
from .features import FeatureSet
from .geometry import (
    CorrespondenceSet,
    TranslationModel,
    apply,
    estimate_homography_dlt,
)


@dataclass(frozen=True)
class GateConfig:
    """Spatial gate (disc of radius r) plus the descriptor SSD threshold."""

    radius: float
    threshold: float = 0.5

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("gate radius must be positive")
        if self.threshold <= 0:
            raise ValueError("SSD threshold must be positive")


@dataclass(frozen=True)
class MatchSet:
    """Accepted correspondences: indices into both feature sets plus their SSD."""

    src_idx: np.ndarray
    dst_idx: np.ndarray
    ssd: np.ndarray
    src_xy: np.ndarray
    dst_xy: np.ndarray

    def __post_init__(self):
        si = np.asarray(self.src_idx, dtype=int).reshape(-1)
        di = np.asarray(self.dst_idx, dtype=int).reshape(-1)
        ss = np.asarray(self.ssd, dtype=float).reshape(-1)
        sp = np.asarray(self.src_xy, dtype=float).reshape(-1, 2)
        dp = np.asarray(self.dst_xy, dtype=float).reshape(-1, 2)
        n = len(si)
        if not (len(di) == len(ss) == len(sp) == len(dp) == n):
            raise ValueError("match columns disagree in length")
        if n and len(np.unique(si)) != n:
            raise ValueError("a source index appears more than once")
        if np.any(ss < 0):
            raise ValueError("negative SSD")
        for name, arr in (
            ("src_idx", si),
            ("dst_idx", di),
            ("ssd", ss),
            ("src_xy", sp),
            ("dst_xy", dp),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.src_idx)

    @classmethod
    def empty(cls) -> "MatchSet":
        z = np.empty(0)
        return cls(z, z, z, np.empty((0, 2)), np.empty((0, 2)))

    @classmethod
    def from_indices(cls, fs_prev: FeatureSet, fs_curr: FeatureSet, src, dst, ssd) -> "MatchSet":
        src = np.asarray(src, dtype=int)
        dst = np.asarray(dst, dtype=int)
        return cls(src, dst, ssd, fs_prev.positions[src], fs_curr.positions[dst])

    def subset(self, mask) -> "MatchSet":
        mask = np.asarray(mask)
        return MatchSet(
            self.src_idx[mask],
            self.dst_idx[mask],
            self.ssd[mask],
            self.src_xy[mask],
            self.dst_xy[mask],
        )

    def to_correspondences(self) -> CorrespondenceSet:
        return CorrespondenceSet(self.src_xy, self.dst_xy)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("src_idx,dst_idx,src_x,src_y,dst_x,dst_y,ssd\n")
            for i in range(len(self)):
                sx, sy = self.src_xy[i]
                dx, dy = self.dst_xy[i]
                fh.write(
                    f"{self.src_idx[i]},{self.dst_idx[i]},"
                    f"{float(sx)!r},{float(sy)!r},{float(dx)!r},{float(dy)!r},"
                    f"{float(self.ssd[i])!r}\n"
                )

    @classmethod
    def load(cls, path) -> "MatchSet":
        rows = []
        with open(path) as fh:
            next(fh)  # header
            for line in fh:
                line = line.strip()
                if line:
                    rows.append([float(t) for t in line.split(",")])
        if not rows:
            return cls.empty()
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 6], arr[:, 2:4], arr[:, 4:6])


def _check_dims(v_prev: np.ndarray, v_curr: np.ndarray):
    v_prev = np.atleast_2d(np.asarray(v_prev, dtype=float))
    v_curr = np.atleast_2d(np.asarray(v_curr, dtype=float))
    if v_prev.shape[1] != v_curr.shape[1]:
        raise DimensionMismatch(
            f"descriptor dims differ: {v_prev.shape[1]} vs {v_curr.shape[1]}"
        )
    return v_prev, v_curr


def ssd(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squared componentwise differences between two descriptor rows."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"descriptor dims differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def ssd_matrix_loop(v_prev, v_curr, candidates=None) -> np.ndarray:
    """Per-pair SSD matrix computed one candidate pair at a time.

    candidates is an optional (m, n) boolean mask; entries outside it stay
    NaN.  This is the reference kernel the vectorized form is checked
    against.
    """
    v_prev, v_curr = _check_dims(v_prev, v_curr)
    m, n = len(v_prev), len(v_curr)
    out = np.full((m, n), np.nan)
    for j in range(m):
        row = v_prev[j]
        if candidates is None:
            ks = range(n)
        else:
            ks = np.nonzero(candidates[j])[0]
        for k in ks:
            d = row - v_curr[k]
            out[j, k] = d @ d
    return out


def ssd_matrix_vectorized(v_prev, v_curr, candidates=None) -> np.ndarray:
    """SSD matrix via the expanded identity: |a|^2 + |b|^2 - 2 a.b.

    With a candidate mask only the masked pairs are evaluated (the norm
    terms are precomputed per row; dot products are gathered per pair).
    """
    v_prev, v_curr = _check_dims(v_prev, v_curr)
    m, n = len(v_prev), len(v_curr)
    sq_prev = np.sum(v_prev * v_prev, axis=1)
    sq_curr = np.sum(v_curr * v_curr, axis=1)
    if candidates is None:
        out = sq_prev[:, None] + sq_curr[None, :] - 2.0 * (v_prev @ v_curr.T)
        np.maximum(out, 0.0, out=out)
        return out
    out = np.full((m, n), np.nan)
    jj, kk = np.nonzero(candidates)
    if len(jj):
        dots = np.einsum("ij,ij->i", v_prev[jj], v_curr[kk])
        vals = sq_prev[jj] + sq_curr[kk] - 2.0 * dots
        out[jj, kk] = np.maximum(vals, 0.0)
    return out


def candidate_mask(
    src_xy: np.ndarray, dst_xy: np.ndarray, prior: TranslationModel, radius: float
) -> np.ndarray:
    """Boolean (m, n) mask of targets inside the gate disc of each projected source.

    Sources are projected into the current frame by the inverse of the
    translation prior before the distance test.
    """
    proj = np.asarray(src_xy, dtype=float) - np.array([prior.dx, prior.dy])
    dst = np.asarray(dst_xy, dtype=float)
    dx = proj[:, 0, None] - dst[None, :, 0]
    dy = proj[:, 1, None] - dst[None, :, 1]
    return dx * dx + dy * dy <= radius * radius


_KERNELS = {"loop": ssd_matrix_loop, "vectorized": ssd_matrix_vectorized}


def match_lowest_ssd(
    fs_prev: FeatureSet, fs_curr: FeatureSet, threshold: float = 0.5, kernel: str = "vectorized"
) -> MatchSet:
    """Global nearest-descriptor baseline: argmin SSD over all targets per source.

    A pair is kept only when its SSD is at or below the threshold; ties go
    to the lowest target index.  This is the quadratic-cost baseline the
    gated matcher is compared against.
    """
    if len(fs_prev) == 0 or len(fs_curr) == 0:
        return MatchSet.empty()
    s = _KERNELS[kernel](fs_prev.descriptors, fs_curr.descriptors)
    best = np.argmin(s, axis=1)
    best_ssd = s[np.arange(len(fs_prev)), best]
    keep = best_ssd <= threshold
    return MatchSet.from_indices(
        fs_prev, fs_curr, np.nonzero(keep)[0], best[keep], best_ssd[keep]
    )


def match_gated(
    fs_prev: FeatureSet,
    fs_curr: FeatureSet,
    prior: TranslationModel,
    gate: GateConfig,
    kernel: str = "vectorized",
) -> MatchSet:
    """Motion-prior gated matcher.

    Each source keypoint is projected by the inverse translation prior;
    only targets within the gate radius of the projection are candidate
    matches.  Among candidates the lowest SSD wins (ties: nearer to the
    projection, then lower index) and is kept iff SSD <= threshold.
    Sources with an empty gate stay unmatched.
    """
    if len(fs_prev) == 0 or len(fs_curr) == 0:
        return MatchSet.empty()
    mask = candidate_mask(fs_prev.positions, fs_curr.positions, prior, gate.radius)
    s = _KERNELS[kernel](fs_prev.descriptors, fs_curr.descriptors, candidates=mask)
    proj = fs_prev.positions - np.array([prior.dx, prior.dy])
    src_out, dst_out, ssd_out = [], [], []
    for j in range(len(fs_prev)):
        ks = np.nonzero(mask[j])[0]
        if not len(ks):
            continue
        row = s[j, ks]
        lo = row.min()
        if lo > gate.threshold:
            continue
        tied = ks[row == lo]
        if len(tied) > 1:
            d = fs_curr.positions[tied] - proj[j]
            d2 = d[:, 0] ** 2 + d[:, 1] ** 2
            tied = tied[d2 == d2.min()]
        k = int(tied.min())
        src_out.append(j)
        dst_out.append(k)
        ssd_out.append(lo)
    if not src_out:
        return MatchSet.empty()
    return MatchSet.from_indices(fs_prev, fs_curr, src_out, dst_out, np.array(ssd_out))


def ransac_homography(
    c: CorrespondenceSet,
    iterations: int = 2000,
    inlier_tol: float = 3.0,
    seed: int = 0,
):
    """Robust homography fit used as the outlier-removal baseline.

    Repeatedly fits 4-point hypotheses, scores them by reprojection-error
    inlier count, then refits by DLT on the best inlier set.  Returns the
    refit homography and the boolean inlier mask.  Deterministic for a
    fixed seed.
    """
    n = len(c)
    if n < 4:
        raise InsufficientPairs(f"RANSAC needs >= 4 pairs, got {n}")
    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = 0
    tol2 = inlier_tol * inlier_tol
    for _ in range(iterations):
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography_dlt(
                CorrespondenceSet(c.prev[idx], c.curr[idx])
            )
            res = apply(h, c.curr) - c.prev
        except Exception:
            continue
        err2 = np.sum(res * res, axis=1)
        mask = err2 < tol2
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 4:
        raise InsufficientPairs("no 4-point hypothesis produced >= 4 inliers")
    h = estimate_homography_dlt(CorrespondenceSet(c.prev[best_mask], c.curr[best_mask]))
    return h, best_mask


def ransac_filter(
    matches: MatchSet, iterations: int = 2000, inlier_tol: float = 3.0, seed: int = 0
):
    """Apply ransac_homography to a MatchSet, returning (Homography, inlier MatchSet)."""
    h, mask = ransac_homography(
        matches.to_correspondences(), iterations=iterations, inlier_tol=inlier_tol, seed=seed
    )
    return h, matches.subset(mask)


def ncc_map(template: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of a template at every valid offset.

    Each target window is zero-meaned and variance-normalized; windows (or
    templates) without variance contribute 0 by convention.  Output values
    lie in [-1, 1] with shape (H - h + 1, W - w + 1).
    """
    template = np.asarray(template, dtype=float)
    target = np.asarray(target, dtype=float)
    th, tw = template.shape
    gh, gw = target.shape
    if th >= gh or tw >= gw:
        raise TemplateTooLarge(
            f"template {tw}x{th} must be strictly smaller than target {gw}x{gh}"
        )
    t0 = template - template.mean()
    t_energy = float(np.sum(t0 * t0))
    out_shape = (gh - th + 1, gw - tw + 1)
    if t_energy <= 1e-12:
        return np.zeros(out_shape)

    cross = signal.correlate(target, t0, mode="valid")

    # Window sums via integral images (exact, no FFT roundoff).
    pad = np.zeros((gh + 1, gw + 1))
    pad[1:, 1:] = np.cumsum(np.cumsum(target, axis=0), axis=1)
    win_sum = pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw]
    pad[1:, 1:] = np.cumsum(np.cumsum(target * target, axis=0), axis=1)
    win_sq = pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw]

    npix = th * tw
    var_term = np.maximum(win_sq - win_sum * win_sum / npix, 0.0)
    denom = np.sqrt(var_term * t_energy)
    out = np.zeros(out_shape)
    ok = denom > 1e-12
    out[ok] = cross[ok] / denom[ok]
    np.clip(out, -1.0, 1.0, out=out)
    return out


def write_ncc_map(ncc: np.ndarray, pgm_path) -> None:
    """Render an NCC map to PGM ([-1, 1] -> [0, 255]) plus a sidecar extrema file."""
    from .image_io import write_pgm

    img = (np.clip(ncc, -1.0, 1.0) + 1.0) / 2.0
    write_pgm(pgm_path, img)
    iy, ix = np.unravel_index(np.argmax(ncc), ncc.shape)
    jy, jx = np.unravel_index(np.argmin(ncc), ncc.shape)
    sidecar = str(pgm_path) + ".extrema.txt"
    with open(sidecar, "w") as fh:
        fh.write(f"max {float(ncc[iy, ix])!r} at x={ix} y={iy}\n")
        fh.write(f"min {float(ncc[jy, jx])!r} at x={jx} y={jy}\n")
