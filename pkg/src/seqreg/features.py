"""Keypoint detection and patch descriptors.

The reference extractor is deliberately dependency-light and fully
deterministic.  It runs two response channels over the (optionally
median-denoised) image:

* a Harris corner channel: 3x3 Sobel gradients, structure tensor smoothed
  with a Gaussian window, response ``det(M) - k * trace(M)^2``;
* a blob channel: scale-normalized Laplacian-of-Gaussian magnitude at a
  few fixed scales, with an edge-rejection test on the response Hessian,
  so repeated pattern centers become keypoints as well as their corners.

Every keypoint is described by a 16x16 intensity patch sampled at the
keypoint's detection scale (step 1 px for corners, proportional to sigma
for blobs), mean-subtracted and unit-normalized.  Keypoints whose patch
has no variance are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall
from .image_io import validate_image

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

# Reject blob candidates whose response Hessian is edge-like (principal
# curvature ratio above r); noise turns edge lobes into sliding keypoints.
_EDGE_R = 4.0
_EDGE_RATIO = (_EDGE_R + 1.0) ** 2 / _EDGE_R


@dataclass(frozen=True)
class ExtractorConfig:
    """Detector and descriptor parameters for the reference extractor."""

    corner_threshold: float = 0.01  # fraction of the peak corner response
    corner_quality: float = 0.12  # min det/trace^2 of the structure tensor
    nms_radius: float = 5.0
    border_margin: int = 10
    patch_half_width: int = 8
    harris_k: float = 0.04
    tensor_sigma: float = 1.5
    blob_scales: tuple = (7.0, 14.0)
    blob_threshold: float = 0.05  # fraction of the peak blob response
    median_prefilter: int = 3  # 0 disables impulse denoising

    def __post_init__(self):
        if self.patch_half_width < 1:
            raise ValueError("patch half-width must be >= 1")
        if self.border_margin < self.patch_half_width:
            raise ValueError("border margin must be >= patch half-width")
        if self.nms_radius <= 0 or self.corner_threshold <= 0:
            raise ValueError("nms radius and thresholds must be positive")
        if any(s <= 0 for s in self.blob_scales):
            raise ValueError("blob scales must be positive")

    @property
    def descriptor_dim(self) -> int:
        return (2 * self.patch_half_width) ** 2


@dataclass(frozen=True)
class FeatureSet:
    """Keypoint positions (x, y) and one descriptor row per position."""

    positions: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        desc = np.asarray(self.descriptors, dtype=float)
        if desc.ndim != 2:
            desc = desc.reshape(len(pos), -1)
        if len(pos) != len(desc):
            raise ValueError("positions and descriptor rows disagree in count")
        for name, arr in (("positions", pos), ("descriptors", desc)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def descriptor_dim(self) -> int:
        return self.descriptors.shape[1]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{len(self)} {self.descriptor_dim}\n")
            for (x, y), d in zip(self.positions, self.descriptors):
                row = " ".join("%.17g" % v for v in d)
                fh.write(f"{float(x)!r} {float(y)!r} {row}\n")

    @classmethod
    def load(cls, path) -> "FeatureSet":
        with open(path) as fh:
            n, dim = (int(t) for t in fh.readline().split())
            pos = np.zeros((n, 2))
            desc = np.zeros((n, dim))
            for i in range(n):
                vals = [float(t) for t in fh.readline().split()]
                pos[i] = vals[:2]
                desc[i] = vals[2:]
        return cls(pos, desc)


def _disc_footprint(radius: float) -> np.ndarray:
    r = int(np.ceil(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= radius * radius


def _local_maxima(field: np.ndarray, threshold: float, radius: float):
    """Positions (y, x) where field is a local max over a disc and above threshold."""
    foot = _disc_footprint(radius)
    peak = ndimage.maximum_filter(field, footprint=foot, mode="constant", cval=-np.inf)
    mask = (field > threshold) & (field == peak)
    ys, xs = np.nonzero(mask)
    return ys, xs


def _subpixel_offset(field: np.ndarray, y: int, x: int):
    """Per-axis quadratic peak interpolation, offsets clamped to [-0.5, 0.5]."""
    h, w = field.shape
    ox = oy = 0.0
    if 1 <= x < w - 1:
        num = field[y, x - 1] - field[y, x + 1]
        den = 2.0 * (field[y, x - 1] - 2.0 * field[y, x] + field[y, x + 1])
        if den < 0:
            ox = float(np.clip(num / den, -0.5, 0.5))
    if 1 <= y < h - 1:
        num = field[y - 1, x] - field[y + 1, x]
        den = 2.0 * (field[y - 1, x] - 2.0 * field[y, x] + field[y + 1, x])
        if den < 0:
            oy = float(np.clip(num / den, -0.5, 0.5))
    return ox, oy


def _nms_greedy(cands: list, radius: float) -> list:
    """Keep strongest candidates first, dropping any within radius of a kept one.

    Candidates are (response, x, y, step); ordering is deterministic.
    """
    cands = sorted(cands, key=lambda c: (-c[0], c[2], c[1], c[3]))
    kept: list = []
    kx = np.empty(len(cands))
    ky = np.empty(len(cands))
    r2 = radius * radius
    for resp, x, y, step in cands:
        n = len(kept)
        if n:
            d2 = (kx[:n] - x) ** 2 + (ky[:n] - y) ** 2
            if d2.min() < r2:
                continue
        kx[n] = x
        ky[n] = y
        kept.append((resp, x, y, step))
    return kept


def _harris_candidates(img: np.ndarray, cfg: ExtractorConfig) -> list:
    gx = ndimage.convolve(img, SOBEL_X, mode="nearest")
    gy = ndimage.convolve(img, SOBEL_Y, mode="nearest")
    s = cfg.tensor_sigma
    ixx = ndimage.gaussian_filter(gx * gx, s, mode="nearest")
    iyy = ndimage.gaussian_filter(gy * gy, s, mode="nearest")
    ixy = ndimage.gaussian_filter(gx * gy, s, mode="nearest")
    det = ixx * iyy - ixy * ixy
    trace = ixx + iyy
    resp = det - cfg.harris_k * trace * trace
    top = resp.max()
    if top <= 0:
        return []
    ys, xs = _local_maxima(resp, cfg.corner_threshold * top, cfg.nms_radius)
    out = []
    for y, x in zip(ys, xs):
        # An isolated eigenvalue (edge-like tensor) localizes only across
        # the edge; require a genuinely 2-D corner.
        tr2 = trace[y, x] * trace[y, x]
        if tr2 <= 0 or det[y, x] < cfg.corner_quality * tr2:
            continue
        ox, oy = _subpixel_offset(resp, y, x)
        out.append((float(resp[y, x]), x + ox, y + oy, 1.0))
    return out


def _blob_candidates(img: np.ndarray, cfg: ExtractorConfig) -> list:
    fields = [s * s * ndimage.gaussian_laplace(img, s, mode="nearest") for s in cfg.blob_scales]
    top = max((np.abs(f).max() for f in fields), default=0.0)
    if top <= 0:
        return []
    cands = []
    for sigma, f in zip(cfg.blob_scales, fields):
        mag = np.abs(f)
        ys, xs = _local_maxima(mag, cfg.blob_threshold * top, cfg.nms_radius)
        h, w = f.shape
        step = max(1.0, sigma / 4.0)
        for y, x in zip(ys, xs):
            if not (1 <= x < w - 1 and 1 <= y < h - 1):
                continue
            # Edge rejection on the signed response Hessian.
            fxx = f[y, x - 1] - 2.0 * f[y, x] + f[y, x + 1]
            fyy = f[y - 1, x] - 2.0 * f[y, x] + f[y + 1, x]
            fxy = 0.25 * (f[y + 1, x + 1] + f[y - 1, x - 1] - f[y + 1, x - 1] - f[y - 1, x + 1])
            det = fxx * fyy - fxy * fxy
            if det <= 0 or (fxx + fyy) ** 2 >= _EDGE_RATIO * det:
                continue
            ox, oy = _subpixel_offset(mag, y, x)
            cands.append((float(mag[y, x]), x + ox, y + oy, step))
    return _nms_greedy(cands, cfg.nms_radius)


def _sample_descriptors(img: np.ndarray, kps: np.ndarray, step: float, phw: int) -> np.ndarray:
    """Bilinear 2*phw x 2*phw patches centered on each keypoint, spaced by step."""
    src = ndimage.gaussian_filter(img, 0.5 * step, mode="nearest") if step > 1.0 else img
    offs = (np.arange(2 * phw) - (phw - 0.5)) * step
    xs = kps[:, 0, None, None] + offs[None, None, :]
    ys = kps[:, 1, None, None] + offs[None, :, None]
    ys = np.broadcast_to(ys, (len(kps), 2 * phw, 2 * phw))
    xs = np.broadcast_to(xs, (len(kps), 2 * phw, 2 * phw))
    vals = ndimage.map_coordinates(src, [ys.ravel(), xs.ravel()], order=1, mode="nearest")
    return vals.reshape(len(kps), (2 * phw) ** 2)


def extract(img: np.ndarray, cfg: ExtractorConfig = ExtractorConfig()) -> FeatureSet:
    """Detect keypoints and compute normalized patch descriptors.

    Deterministic for a fixed image and config.  Returns an empty
    FeatureSet on featureless (e.g. constant) images.
    """
    img = validate_image(img)
    h, w = img.shape
    need = 2 * cfg.patch_half_width + 1
    if h < need or w < need:
        raise ImageTooSmall(f"image {w}x{h} smaller than descriptor footprint {need}")

    base = img
    if cfg.median_prefilter >= 2:
        base = ndimage.median_filter(img, size=cfg.median_prefilter, mode="nearest")

    cands = _harris_candidates(base, cfg) + _blob_candidates(base, cfg)
    if not cands:
        return FeatureSet(np.empty((0, 2)), np.empty((0, cfg.descriptor_dim)))

    phw = cfg.patch_half_width
    positions, descriptors = [], []
    for step in sorted({c[3] for c in cands}):
        kps = np.array([(x, y) for _, x, y, s in cands if s == step])
        # The sampling footprint must stay inside the raster.
        reach = max(cfg.border_margin, int(np.ceil((phw - 0.5) * step)) + 1)
        ok = (
            (kps[:, 0] >= reach)
            & (kps[:, 0] <= w - 1 - reach)
            & (kps[:, 1] >= reach)
            & (kps[:, 1] <= h - 1 - reach)
        )
        kps = kps[ok]
        if not len(kps):
            continue
        desc = _sample_descriptors(base, kps, step, phw)
        desc = desc - desc.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(desc, axis=1)
        keep = norms > 1e-10
        positions.append(kps[keep])
        descriptors.append(desc[keep] / norms[keep, None])

    if not positions:
        return FeatureSet(np.empty((0, 2)), np.empty((0, cfg.descriptor_dim)))
    pos = np.vstack(positions)
    desc = np.vstack(descriptors)
    # Deterministic output order; drop exact positional duplicates.
    order = np.lexsort((pos[:, 0], pos[:, 1]))
    pos, desc = pos[order], desc[order]
    _, first = np.unique(pos, axis=0, return_index=True)
    first.sort()
    return FeatureSet(pos[first], desc[first])


def descriptor_distance_pre(fs) -> np.ndarray:
    """Per-row sums of squared descriptor components.

    These are the precomputed norm terms of the expanded SSD identity;
    accepts a FeatureSet or a raw descriptor matrix.
    """
    v = np.asarray(getattr(fs, "descriptors", fs), dtype=float)
    return np.sum(v * v, axis=1)
