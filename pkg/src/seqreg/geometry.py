"""Homogeneous 2-D transforms, DLT estimation and the RMSE metric.

Conventions used throughout the package:

* points are ``(x, y)`` pixel coordinates stored as float arrays, a single
  point is shape ``(2,)`` and a point list is shape ``(N, 2)``;
* a homography maps points of the *current* image into the coordinate
  system of the *previous* image, matching the direction of the pairwise
  transform chain used for stitching;
* a pure-translation transform carries ``(dx, dy)`` such that
  ``x_prev = x_curr + dx``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateProjection,
    EmptyCorrespondences,
    InsufficientPairs,
    SingularMatrix,
)

DET_TOL = 1e-12
_W_TOL = 1e-12


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so that m[2,2] == 1 when possible."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        if abs(np.linalg.det(m)) <= DET_TOL:
            raise SingularMatrix("matrix determinant below tolerance")
        if abs(m[2, 2]) > _W_TOL:
            m = m / m[2, 2]
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def to_flat(self) -> str:
        """Nine whitespace-separated values, row major."""
        return " ".join(repr(float(v)) for v in self.m.ravel())

    @classmethod
    def from_flat(cls, text: str) -> "Homography":
        vals = [float(t) for t in text.split()]
        if len(vals) != 9:
            raise ValueError(f"expected 9 values, got {len(vals)}")
        return cls(np.array(vals).reshape(3, 3))


@dataclass(frozen=True)
class TranslationModel:
    """Pure-translation specialization: x_prev = x_curr + dx, y likewise."""

    dx: float
    dy: float = 0.0

    def to_homography(self) -> Homography:
        m = np.eye(3)
        m[0, 2] = self.dx
        m[1, 2] = self.dy
        return Homography(m)


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired point lists (prev-frame, curr-frame), one row per pair."""

    prev: np.ndarray
    curr: np.ndarray

    def __post_init__(self):
        prev = np.atleast_2d(np.asarray(self.prev, dtype=float))
        curr = np.atleast_2d(np.asarray(self.curr, dtype=float))
        if prev.size == 0:
            prev = prev.reshape(0, 2)
        if curr.size == 0:
            curr = curr.reshape(0, 2)
        if prev.shape[1] != 2 or curr.shape[1] != 2:
            raise ValueError("correspondence points must be (N, 2)")
        if prev.shape[0] != curr.shape[0]:
            raise ValueError("prev/curr lists differ in length")
        if not (np.all(np.isfinite(prev)) and np.all(np.isfinite(curr))):
            raise ValueError("correspondence points must be finite")
        if len(prev) and len(np.unique(prev, axis=0)) != len(prev):
            raise ValueError("duplicate source points in correspondence set")
        for name, arr in (("prev", prev), ("curr", curr)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.prev.shape[0]

    def save(self, path) -> None:
        """One pair per line: x_prev,y_prev,x_curr,y_curr at full precision."""
        with open(path, "w") as fh:
            for (xp, yp), (xc, yc) in zip(self.prev, self.curr):
                fh.write(f"{float(xp)!r},{float(yp)!r},{float(xc)!r},{float(yc)!r}\n")

    @classmethod
    def load(cls, path) -> "CorrespondenceSet":
        prev, curr = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                xp, yp, xc, yc = (float(t) for t in line.split(","))
                prev.append((xp, yp))
                curr.append((xc, yc))
        if not prev:
            return cls(np.empty((0, 2)), np.empty((0, 2)))
        return cls(np.array(prev), np.array(curr))


def apply(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Project points through a homography (multiply then dehomogenize).

    Accepts a single ``(2,)`` point or an ``(N, 2)`` array and returns the
    same shape.  Raises DegenerateProjection when any homogeneous scale
    vanishes.
    """
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    p = np.atleast_2d(pts)
    m = h.m
    w = p @ m[2, :2] + m[2, 2]
    if np.any(np.abs(w) <= _W_TOL):
        raise DegenerateProjection("homogeneous scale vanished")
    xy = (p @ m[:2, :2].T + m[:2, 2]) / w[:, None]
    return xy[0] if single else xy


def compose(a: Homography, b: Homography) -> Homography:
    """Transform equivalent to applying b first, then a."""
    m = a.m @ b.m
    if abs(np.linalg.det(m)) <= DET_TOL:
        raise DegenerateProjection("composed transform is singular")
    return Homography(m)


def invert(h: Homography) -> Homography:
    if abs(np.linalg.det(h.m)) <= DET_TOL:
        raise SingularMatrix("matrix determinant below tolerance")
    return Homography(np.linalg.inv(h.m))


def _normalize_points(pts: np.ndarray):
    """Hartley conditioning: centroid to origin, mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    scale = np.sqrt(2.0) / d if d > 0 else 1.0
    t = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    normalized = (pts - centroid) * scale
    return normalized, t


def estimate_homography_dlt(c: CorrespondenceSet) -> Homography:
    """Least-squares homography mapping curr-frame points onto prev-frame points.

    Uses normalized DLT: both point sets are conditioned (translated to
    their centroid and scaled to mean distance sqrt(2)) before assembling
    the 2N x 9 system, which is solved by SVD.
    """
    n = len(c)
    if n < 4:
        raise InsufficientPairs(f"DLT needs >= 4 pairs, got {n}")
    src, t_src = _normalize_points(c.curr)
    dst, t_dst = _normalize_points(c.prev)

    a = np.zeros((2 * n, 9))
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v

    _, s, vt = np.linalg.svd(a)
    # A unique projective solution needs rank 8; collinear-degenerate input
    # drops the rank further and leaves more than one null direction.
    if s[7] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("rank-deficient correspondence geometry")
    h_norm = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(np.linalg.det(m)) <= DET_TOL:
        raise DegenerateConfiguration("estimated transform is singular")
    return Homography(m)


def estimate_translation(c: CorrespondenceSet) -> TranslationModel:
    """Average displacement over all pairs: dx = mean(x_prev - x_curr)."""
    if len(c) == 0:
        raise EmptyCorrespondences("translation estimate needs >= 1 pair")
    delta = c.prev - c.curr
    return TranslationModel(float(delta[:, 0].mean()), float(delta[:, 1].mean()))


def rmse(c: CorrespondenceSet, t: Homography) -> float:
    """Root mean squared reprojection error of curr points mapped onto prev."""
    if len(c) == 0:
        raise EmptyCorrespondences("rmse needs >= 1 pair")
    res = apply(t, c.curr) - c.prev
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))
