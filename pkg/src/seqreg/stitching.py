"""Chain pairwise homographies into frame-0 coordinates and blend a panorama.

Warping is inverse-mapped with bilinear sampling into shared accumulation
buffers (weighted intensity sum and weight sum); the final panorama is the
weight-normalized average.  Misaligned chains show up as ghosting, which
``overlap_disagreement`` quantifies per consecutive pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Homography, apply, compose, invert


@dataclass
class PanoramaCanvas:
    """Accumulation buffers in a shifted integer pixel frame."""

    x0: int
    y0: int
    weighted_sum: np.ndarray
    weight_sum: np.ndarray

    @classmethod
    def from_bounds(cls, x0: float, y0: float, x1: float, y1: float) -> "PanoramaCanvas":
        x0i, y0i = int(np.floor(x0)), int(np.floor(y0))
        x1i, y1i = int(np.ceil(x1)), int(np.ceil(y1))
        w, h = x1i - x0i + 1, y1i - y0i + 1
        return cls(x0i, y0i, np.zeros((h, w)), np.zeros((h, w)))

    @property
    def shape(self):
        return self.weight_sum.shape

    def resolve(self) -> np.ndarray:
        """Average-blended image; pixels never written stay 0."""
        out = np.zeros_like(self.weighted_sum)
        ok = self.weight_sum > 0
        out[ok] = self.weighted_sum[ok] / self.weight_sum[ok]
        return np.clip(out, 0.0, 1.0)


def accumulate_to_frame0(homographies) -> list:
    """Prefix products of the pairwise chain; element 0 is the identity.

    Input element i maps frame i+1 into frame i, so the k-th output maps
    frame k all the way into frame 0.
    """
    chain = [Homography.identity()]
    acc = chain[0]
    for h in homographies:
        acc = compose(acc, h)
        chain.append(acc)
    return chain


def warped_corners(img: np.ndarray, h: Homography) -> np.ndarray:
    hh, ww = img.shape
    corners = np.array(
        [[0.0, 0.0], [ww - 1.0, 0.0], [0.0, hh - 1.0], [ww - 1.0, hh - 1.0]]
    )
    return apply(h, corners)


def _feather_weights(hh: int, ww: int) -> np.ndarray:
    y = np.minimum(np.arange(hh), np.arange(hh)[::-1]) + 1.0
    x = np.minimum(np.arange(ww), np.arange(ww)[::-1]) + 1.0
    w = np.outer(y, x)
    return w / w.max()


def warp(img: np.ndarray, h: Homography, canvas: PanoramaCanvas, feather: bool = False) -> PanoramaCanvas:
    """Accumulate one frame into the canvas under the frame-to-canvas transform.

    Inverse mapping with bilinear sampling; samples falling outside the
    source contribute zero weight.
    """
    img = np.asarray(img, dtype=float)
    hh, ww = img.shape
    ch, cw = canvas.shape

    corners = warped_corners(img, h)
    x_lo = max(0, int(np.floor(corners[:, 0].min())) - canvas.x0)
    x_hi = min(cw - 1, int(np.ceil(corners[:, 0].max())) - canvas.x0)
    y_lo = max(0, int(np.floor(corners[:, 1].min())) - canvas.y0)
    y_hi = min(ch - 1, int(np.ceil(corners[:, 1].max())) - canvas.y0)
    if x_lo > x_hi or y_lo > y_hi:
        return canvas

    yy, xx = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    world = np.stack([(xx + canvas.x0).ravel(), (yy + canvas.y0).ravel()], axis=1).astype(float)
    src = apply(invert(h), world)
    sx, sy = src[:, 0], src[:, 1]

    valid = (sx >= 0) & (sx <= ww - 1) & (sy >= 0) & (sy <= hh - 1)
    if not np.any(valid):
        return canvas
    sx, sy = sx[valid], sy[valid]
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x0 = np.minimum(x0, ww - 2).clip(0)
    y0 = np.minimum(y0, hh - 2).clip(0)
    fx = sx - x0
    fy = sy - y0
    vals = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x0 + 1] * fx * (1 - fy)
        + img[y0 + 1, x0] * (1 - fx) * fy
        + img[y0 + 1, x0 + 1] * fx * fy
    )
    if feather:
        fw = _feather_weights(hh, ww)
        weights = (
            fw[y0, x0] * (1 - fx) * (1 - fy)
            + fw[y0, x0 + 1] * fx * (1 - fy)
            + fw[y0 + 1, x0] * (1 - fx) * fy
            + fw[y0 + 1, x0 + 1] * fx * fy
        )
    else:
        weights = np.ones_like(vals)

    flat_idx = (yy.ravel()[valid] * cw + xx.ravel()[valid]).astype(int)
    canvas.weighted_sum.ravel()[flat_idx] += vals * weights
    canvas.weight_sum.ravel()[flat_idx] += weights
    return canvas


def canvas_for(images, chain) -> PanoramaCanvas:
    """Canvas covering the exact warped-corner bounding box of every frame."""
    xs, ys = [], []
    for img, h in zip(images, chain):
        c = warped_corners(np.asarray(img), h)
        xs.extend([c[:, 0].min(), c[:, 0].max()])
        ys.extend([c[:, 1].min(), c[:, 1].max()])
    return PanoramaCanvas.from_bounds(min(xs), min(ys), max(xs), max(ys))


def stitch(images, pair_homographies, feather: bool = False) -> np.ndarray:
    """Blend a full sequence into frame-0 coordinates.

    ``pair_homographies`` holds one transform per consecutive pair, each
    mapping its later frame into the earlier one.
    """
    images = [np.asarray(im, dtype=float) for im in images]
    if len(pair_homographies) != len(images) - 1:
        raise ValueError("need exactly one homography per consecutive pair")
    chain = accumulate_to_frame0(pair_homographies)
    canvas = canvas_for(images, chain)
    for img, h in zip(images, chain):
        warp(img, h, canvas, feather=feather)
    return canvas.resolve()


def overlap_disagreement(images, pair_homographies) -> list:
    """Mean absolute intensity disagreement in each consecutive overlap.

    Warps each frame of a pair separately into frame-0 coordinates and
    compares them where both contribute; the ghosting observable.
    """
    images = [np.asarray(im, dtype=float) for im in images]
    chain = accumulate_to_frame0(pair_homographies)
    out = []
    for k in range(len(images) - 1):
        canvas_a = canvas_for(images[k : k + 2], chain[k : k + 2])
        canvas_b = PanoramaCanvas(
            canvas_a.x0,
            canvas_a.y0,
            np.zeros_like(canvas_a.weighted_sum),
            np.zeros_like(canvas_a.weight_sum),
        )
        warp(images[k], chain[k], canvas_a)
        warp(images[k + 1], chain[k + 1], canvas_b)
        both = (canvas_a.weight_sum > 0) & (canvas_b.weight_sum > 0)
        if not np.any(both):
            out.append(float("nan"))
            continue
        a = canvas_a.weighted_sum[both] / canvas_a.weight_sum[both]
        b = canvas_b.weighted_sum[both] / canvas_b.weight_sum[both]
        out.append(float(np.mean(np.abs(a - b))))
    return out
