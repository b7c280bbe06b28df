"""Grayscale image I/O.

Images are 2-D float64 arrays with intensities in [0, 1], indexed
``img[y, x]``.  The on-disk contract is binary PGM (P5, maxval 255) with a
linear mapping between [0, 1] and [0, 255].
"""

from __future__ import annotations

import numpy as np


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("intensities must lie in [0, 1]")
    return img


def write_pgm(path, img: np.ndarray) -> None:
    img = validate_image(img)
    h, w = img.shape
    raster = np.rint(img * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; '#' comments may appear between.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    if raster.size != w * h:
        raise ValueError(f"{path}: truncated raster")
    return raster.reshape(h, w).astype(float) / 255.0
