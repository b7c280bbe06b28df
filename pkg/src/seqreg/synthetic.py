"""Ground-truthed synthetic benchmark: deformable grid-pattern sequences.

Frames contain a regular lattice of dark patterns (squares, circles or
hexagons) on a light background.  The lattice phase advances by the motion
vector each frame, every cell gets an independent random local affine
deformation whose ranges scale linearly with a distortion factor, and each
frame is corrupted by Gaussian blur, salt-and-pepper noise and additive
white Gaussian noise.  Deformed pattern centers are recorded as ground
truth, and consecutive frames are linked by pairing centers whose
undistorted lattice positions differ by exactly the motion vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import SpecInvalid
from .geometry import CorrespondenceSet

# Local affine ranges per unit distortion factor.  The ranges themselves
# are declared constants, not measured values.
TRANSLATION_PER_FACTOR = 2.0  # px, each axis
ROTATION_PER_FACTOR = 5.0  # degrees
SCALE_PER_FACTOR = 0.05
SHEAR_PER_FACTOR = 0.05

BACKGROUND = 0.9
FOREGROUND = 0.1

_DEFAULT_CELL = {"square": 41.0, "circle": 20.0, "hexagon": 20.0}


@dataclass(frozen=True)
class GridSpec:
    shape: str = "square"
    cell_param: float | None = None  # square side, or circle/hexagon radius
    pitch: float = 60.0
    image_size: tuple = (400, 400)  # (width, height)
    frames: int = 20
    motion: tuple = (60.0, 60.0)  # (dx, dy) pixels per frame

    def __post_init__(self):
        if self.shape not in _DEFAULT_CELL:
            raise SpecInvalid(f"unknown shape {self.shape!r}")
        if self.cell_param is None:
            object.__setattr__(self, "cell_param", _DEFAULT_CELL[self.shape])
        if self.cell_param <= 0:
            raise SpecInvalid("cell_param must be positive")
        if self.pitch <= self.cell_extent:
            raise SpecInvalid("pitch must exceed the cell extent")
        if self.frames < 2:
            raise SpecInvalid("need at least 2 frames")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise SpecInvalid("image size must be positive")

    @property
    def cell_extent(self) -> float:
        """Full width of the undeformed pattern."""
        if self.shape == "square":
            return float(self.cell_param)
        return 2.0 * float(self.cell_param)

    @property
    def base_radius(self) -> float:
        """Circumradius of the undeformed pattern."""
        if self.shape == "square":
            return float(self.cell_param) / 2.0 * math.sqrt(2.0)
        return float(self.cell_param)


@dataclass(frozen=True)
class DistortionSpec:
    factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.factor < 0:
            raise SpecInvalid("distortion factor must be >= 0")
        if self.seed < 0:
            raise SpecInvalid("seed must be >= 0")


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_blur_mask: int = 7
    blur_sigma: float = 1.0
    sp_density: float = 0.05
    awgn_variance: float = 0.02
    seed: int = 0

    def __post_init__(self):
        m = self.gaussian_blur_mask
        if m < 1 or m % 2 == 0:
            raise SpecInvalid("blur mask must be odd and >= 1")
        if not (0.0 <= self.sp_density <= 1.0):
            raise SpecInvalid("salt-and-pepper density must lie in [0, 1]")
        if self.awgn_variance < 0:
            raise SpecInvalid("noise variance must be >= 0")
        if self.seed < 0:
            raise SpecInvalid("seed must be >= 0")

    @classmethod
    def none(cls, seed: int = 0) -> "NoiseSpec":
        return cls(gaussian_blur_mask=1, sp_density=0.0, awgn_variance=0.0, seed=seed)


@dataclass(frozen=True)
class FrameCenters:
    """Per-frame pattern centers, before and after local deformation."""

    nominal: np.ndarray
    deformed: np.ndarray

    def __len__(self) -> int:
        return len(self.nominal)


@dataclass(frozen=True)
class GroundTruth:
    frames: list  # FrameCenters per frame
    pairs: list  # CorrespondenceSet (deformed centers) per consecutive pair
    motion: tuple


def _cell_rng(d: DistortionSpec, frame_index: int, i: int, j: int) -> np.random.Generator:
    # Lattice indices can be negative; bias them into SeedSequence's domain.
    key = (d.seed, frame_index, i + 1_000_000, j + 1_000_000)
    return np.random.default_rng(np.random.SeedSequence(key))


def _cell_affine(d: DistortionSpec, frame_index: int, i: int, j: int):
    """Unit draws scaled by the factor, so deformations grow linearly with it."""
    u = _cell_rng(d, frame_index, i, j).uniform(-1.0, 1.0, size=5)
    f = d.factor
    t = f * TRANSLATION_PER_FACTOR * u[:2]
    theta = math.radians(f * ROTATION_PER_FACTOR * u[2])
    s = 1.0 + f * SCALE_PER_FACTOR * u[3]
    sh = f * SHEAR_PER_FACTOR * u[4]
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = rot @ np.array([[1.0, sh], [0.0, 1.0]]) @ np.array([[s, 0.0], [0.0, s]])
    return a, t


def _inside(shape: str, param: float, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
    if shape == "square":
        half = param / 2.0
        return (np.abs(lx) <= half) & (np.abs(ly) <= half)
    if shape == "circle":
        return lx * lx + ly * ly <= param * param
    # Flat-top regular hexagon of circumradius param.
    s3 = math.sqrt(3.0)
    return (np.abs(ly) <= s3 / 2.0 * param) & (s3 * np.abs(lx) + np.abs(ly) <= s3 * param)


def _gaussian_kernel(mask: int, sigma: float) -> np.ndarray:
    r = mask // 2
    ax = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-0.5 * (ax / sigma) ** 2)
    k2 = np.outer(k, k)
    return k2 / k2.sum()


def apply_noise(img: np.ndarray, n: NoiseSpec, frame_index: int = 0) -> np.ndarray:
    """Blur, then salt-and-pepper, then additive Gaussian noise, clamped to [0, 1]."""
    out = img.astype(float, copy=True)
    if n.gaussian_blur_mask >= 3:
        out = ndimage.convolve(out, _gaussian_kernel(n.gaussian_blur_mask, n.blur_sigma), mode="nearest")
    rng = np.random.default_rng(np.random.SeedSequence((n.seed, frame_index)))
    if n.sp_density > 0:
        u = rng.random(out.shape)
        out[u < n.sp_density / 2.0] = 0.0
        out[(u >= n.sp_density / 2.0) & (u < n.sp_density)] = 1.0
    if n.awgn_variance > 0:
        out = out + rng.normal(0.0, math.sqrt(n.awgn_variance), out.shape)
    return np.clip(out, 0.0, 1.0)


def generate_frame(g: GridSpec, d: DistortionSpec, n: NoiseSpec, frame_index: int):
    """Rasterize one frame and return (image, FrameCenters).

    The lattice phase is frame_index * motion; cells whose nominal center
    lies inside the image are recorded as ground truth, cells overlapping
    the raster at all are drawn.
    """
    if frame_index < 0:
        raise SpecInvalid("frame index must be >= 0")
    w, h = g.image_size
    img = np.full((h, w), BACKGROUND)
    reach = g.base_radius * 1.5 + d.factor * TRANSLATION_PER_FACTOR + 2.0

    # The motion convention matches the translation model: a pattern seen at
    # p in one frame sits at p - motion in the next, so dx = x_prev - x_curr.
    phase_x = (-frame_index * g.motion[0]) % g.pitch
    phase_y = (-frame_index * g.motion[1]) % g.pitch
    i_lo = int(math.floor((-reach - phase_x) / g.pitch))
    i_hi = int(math.ceil((w + reach - phase_x) / g.pitch))
    j_lo = int(math.floor((-reach - phase_y) / g.pitch))
    j_hi = int(math.ceil((h + reach - phase_y) / g.pitch))

    nominal, deformed = [], []
    for j in range(j_lo, j_hi + 1):
        cy = phase_y + (j + 0.5) * g.pitch
        for i in range(i_lo, i_hi + 1):
            cx = phase_x + (i + 0.5) * g.pitch
            a, t = _cell_affine(d, frame_index, i, j)
            dcx, dcy = cx + t[0], cy + t[1]
            if 0.0 <= cx < w and 0.0 <= cy < h:
                nominal.append((cx, cy))
                deformed.append((dcx, dcy))
            rad = g.base_radius * np.linalg.svd(a, compute_uv=False)[0] + 1.0
            x0 = max(0, int(math.floor(dcx - rad)))
            x1 = min(w - 1, int(math.ceil(dcx + rad)))
            y0 = max(0, int(math.floor(dcy - rad)))
            y1 = min(h - 1, int(math.ceil(dcy + rad)))
            if x0 > x1 or y0 > y1:
                continue
            yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
            rel = np.stack([xx.ravel() - dcx, yy.ravel() - dcy])
            local = np.linalg.inv(a) @ rel
            mask = _inside(g.shape, float(g.cell_param), local[0], local[1]).reshape(yy.shape)
            patch = img[y0 : y1 + 1, x0 : x1 + 1]
            patch[mask] = FOREGROUND

    img = apply_noise(img, n, frame_index)
    if nominal:
        nom = np.array(nominal)
        def_ = np.array(deformed)
        order = np.lexsort((nom[:, 0], nom[:, 1]))
        centers = FrameCenters(nom[order], def_[order])
    else:
        centers = FrameCenters(np.empty((0, 2)), np.empty((0, 2)))
    return img, centers


def generate_sequence(g: GridSpec, d: DistortionSpec, n: NoiseSpec):
    """Generate all frames plus ground truth correspondences between pairs."""
    images, frames = [], []
    for k in range(g.frames):
        img, centers = generate_frame(g, d, n, k)
        images.append(img)
        frames.append(centers)

    pairs = []
    mx, my = g.motion
    for k in range(g.frames - 1):
        cur = frames[k]
        nxt = frames[k + 1]
        lookup = {
            (round(x, 6), round(y, 6)): idx for idx, (x, y) in enumerate(nxt.nominal)
        }
        prev_pts, curr_pts = [], []
        for idx, (x, y) in enumerate(cur.nominal):
            key = (round(x - mx, 6), round(y - my, 6))
            hit = lookup.get(key)
            if hit is not None:
                prev_pts.append(cur.deformed[idx])
                curr_pts.append(nxt.deformed[hit])
        if prev_pts:
            pairs.append(CorrespondenceSet(np.array(prev_pts), np.array(curr_pts)))
        else:
            pairs.append(CorrespondenceSet(np.empty((0, 2)), np.empty((0, 2))))
    return images, GroundTruth(frames=frames, pairs=pairs, motion=(mx, my))


# --- manifest -------------------------------------------------------------

def manifest_dict(g: GridSpec, d: DistortionSpec, n: NoiseSpec) -> dict:
    w, h = g.image_size
    return {
        "shape": g.shape,
        "cell_param": repr(float(g.cell_param)),
        "pitch": repr(float(g.pitch)),
        "width": str(w),
        "height": str(h),
        "frames": str(g.frames),
        "motion_dx": repr(float(g.motion[0])),
        "motion_dy": repr(float(g.motion[1])),
        "factor": repr(float(d.factor)),
        "distortion_seed": str(d.seed),
        "blur_mask": str(n.gaussian_blur_mask),
        "blur_sigma": repr(float(n.blur_sigma)),
        "sp_density": repr(float(n.sp_density)),
        "awgn_variance": repr(float(n.awgn_variance)),
        "noise_seed": str(n.seed),
    }


def save_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key}={val}\n")


def load_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed manifest line: {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def specs_from_manifest(entries: dict):
    g = GridSpec(
        shape=entries["shape"],
        cell_param=float(entries["cell_param"]),
        pitch=float(entries["pitch"]),
        image_size=(int(entries["width"]), int(entries["height"])),
        frames=int(entries["frames"]),
        motion=(float(entries["motion_dx"]), float(entries["motion_dy"])),
    )
    d = DistortionSpec(factor=float(entries["factor"]), seed=int(entries["distortion_seed"]))
    n = NoiseSpec(
        gaussian_blur_mask=int(entries["blur_mask"]),
        blur_sigma=float(entries["blur_sigma"]),
        sp_density=float(entries["sp_density"]),
        awgn_variance=float(entries["awgn_variance"]),
        seed=int(entries["noise_seed"]),
    )
    return g, d, n
