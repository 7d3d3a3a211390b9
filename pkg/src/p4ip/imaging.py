"""Image I/O, peak scaling, Poisson sampling, PSNR and photon-count binning.

Images are plain 2-D ``float64`` numpy arrays of shape ``(height, width)``,
stored row-major, with finite nonnegative values.
"""

from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "ImageError",
    "RASTER_MAGIC",
    "as_image",
    "load_pgm",
    "save_pgm",
    "save_raster",
    "load_raster",
    "load_image",
    "scale_to_peak",
    "poisson_sample",
    "psnr",
    "bin_down",
    "bin_up",
    "synthetic_image",
]

RASTER_MAGIC = b"PNPRAST1"
_RASTER_HEADER = struct.Struct("<8sII")


class ImageError(ValueError):
    """Raised for malformed images, files or invalid image arguments."""


def as_image(img, *, name: str = "image", nonnegative: bool = True) -> np.ndarray:
    """Validate ``img`` and return it as a C-contiguous float64 2-D array."""
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ImageError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ImageError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ImageError(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0):
        raise ImageError(f"{name} contains negative values")
    return arr


# --------------------------------------------------------------------------
# PGM

def _pgm_tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(path) -> np.ndarray:
    """Load a binary (P5) or ASCII (P2) PGM file, 8 or 16 bits per sample.

    Pixel values are returned unchanged in magnitude (no normalisation
    by ``maxval``).
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        tokens, pos = _pgm_tokens(data, 3, 2)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ImageError(f"{path}: invalid PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise ImageError(f"{path}: invalid PGM maxval {maxval}")
    count = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates header and raster
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        payload = data[pos:pos + count * dtype.itemsize]
        if len(payload) < count * dtype.itemsize:
            raise ImageError(
                f"{path}: truncated PGM payload "
                f"({len(payload)} of {count * dtype.itemsize} bytes)"
            )
        values = np.frombuffer(payload, dtype=dtype)
    else:
        try:
            values = np.array(data[pos:].split()[:count], dtype=np.int64)
        except ValueError as exc:
            raise ImageError(f"{path}: non-integer sample in ASCII PGM") from exc
        if values.size < count:
            raise ImageError(f"{path}: truncated PGM payload ({values.size} of {count} samples)")
    if np.any(values > maxval):
        raise ImageError(f"{path}: sample exceeds maxval {maxval}")
    return values.astype(np.float64).reshape(height, width)


def save_pgm(img, path, maxval: int | None = None) -> None:
    """Write ``img`` as a binary PGM, rounding and clipping to ``[0, maxval]``."""
    img = as_image(img)
    if maxval is None:
        maxval = 255 if img.max() <= 255 else 65535
    height, width = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.clip(np.rint(img), 0, maxval).astype(dtype)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(pixels.tobytes())


# --------------------------------------------------------------------------
# RasterFile: "PNPRAST1", uint32 width, uint32 height, float64 LE row-major

def save_raster(img, path) -> None:
    """Write ``img`` in the raster interchange format (bit-exact)."""
    arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ImageError(f"raster must be 2-D, got shape {arr.shape}")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(RASTER_MAGIC, width, height))
        fh.write(arr.astype("<f8", copy=False).tobytes())


def load_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RASTER_HEADER.size:
        raise ImageError(f"{path}: raster file too short")
    magic, width, height = _RASTER_HEADER.unpack_from(data)
    if magic != RASTER_MAGIC:
        raise ImageError(f"{path}: bad raster magic {magic!r}")
    expected = _RASTER_HEADER.size + 8 * width * height
    if len(data) != expected:
        raise ImageError(f"{path}: raster payload is {len(data)} bytes, expected {expected}")
    if width == 0 or height == 0:
        raise ImageError(f"{path}: degenerate raster dimensions {width}x{height}")
    values = np.frombuffer(data, dtype="<f8", offset=_RASTER_HEADER.size)
    return values.astype(np.float64).reshape(height, width)


def load_image(path) -> np.ndarray:
    """Load a raster or PGM file, dispatching on the file magic."""
    with open(path, "rb") as fh:
        head = fh.read(len(RASTER_MAGIC))
    if head == RASTER_MAGIC:
        return load_raster(path)
    if head[:2] in (b"P2", b"P5"):
        return load_pgm(path)
    raise ImageError(f"{os.fspath(path)}: unrecognised image format")


# --------------------------------------------------------------------------
# degradation

def scale_to_peak(img, peak: float) -> np.ndarray:
    """Scale ``img`` linearly so that its maximum equals ``peak``."""
    img = as_image(img)
    if not peak > 0 or not math.isfinite(peak):
        raise ImageError(f"peak must be positive and finite, got {peak}")
    top = img.max()
    if top <= 0:
        raise ImageError("cannot scale an all-zero image to a peak")
    out = img * (peak / top)
    # pin the maximum so max(out) == peak exactly
    out[img == top] = peak
    return out


def poisson_sample(img, seed: int) -> np.ndarray:
    """Draw independent Poisson counts with per-pixel means ``img``.

    numpy's generator uses sequential inversion for means below 10 and the
    PTRS transformed-rejection sampler above, both exact.  Zero-mean pixels
    yield zero.
    """
    img = as_image(img)
    rng = np.random.Generator(np.random.PCG64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    return rng.poisson(img).astype(np.float64)


def psnr(reference, test, peak_max: float) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical."""
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ImageError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if not peak_max > 0:
        raise ImageError(f"peak_max must be positive, got {peak_max}")
    mse = np.mean((reference - test) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak_max**2 / mse)


# --------------------------------------------------------------------------
# binning

def bin_down(img, factor: int = 3) -> np.ndarray:
    """Sum non-overlapping ``factor x factor`` blocks, cropping leftovers."""
    img = as_image(img)
    if factor < 1:
        raise ImageError(f"binning factor must be >= 1, got {factor}")
    height, width = img.shape
    if factor > height or factor > width:
        raise ImageError(f"binning factor {factor} exceeds image size {width}x{height}")
    h, w = height // factor, width // factor
    blocks = img[: h * factor, : w * factor].reshape(h, factor, w, factor)
    return blocks.sum(axis=(1, 3))


def _interp_axis(values: np.ndarray, n_out: int, factor: int, axis: int) -> np.ndarray:
    # bin j is centred on fine coordinate factor*j + (factor-1)/2
    centres = factor * np.arange(values.shape[axis]) + (factor - 1) / 2.0
    targets = np.arange(n_out, dtype=np.float64)
    return np.apply_along_axis(lambda v: np.interp(targets, centres, v), axis, values)


def bin_up(img, factor: int, out_width: int, out_height: int) -> np.ndarray:
    """Bilinearly upsample a binned image to ``out_height x out_width``.

    The result is divided by ``factor**2`` to return from summed counts to
    per-pixel intensity.  Samples beyond the outermost bin centres take the
    edge value.
    """
    img = as_image(img, nonnegative=False)
    if factor < 1:
        raise ImageError(f"binning factor must be >= 1, got {factor}")
    height, width = img.shape
    if out_width < width or out_height < height:
        raise ImageError(
            f"target {out_width}x{out_height} is smaller than input {width}x{height}"
        )
    if factor == 1 and (out_width, out_height) == (width, height):
        return img.copy()
    out = _interp_axis(img, out_height, factor, axis=0)
    out = _interp_axis(out, out_width, factor, axis=1)
    return out / factor**2


# --------------------------------------------------------------------------
# synthetic stand-in scenes

def synthetic_image(name: str = "shapes", size: int = 128) -> np.ndarray:
    """Deterministic piecewise-constant test scenes with values in [0, 1].

    ``shapes``: background, rectangle, disk and a triangle at four grey
    levels.  ``stripes``: vertical bars of increasing width.  ``disk``: a
    single bright disk.
    """
    yy, xx = np.mgrid[0:size, 0:size] / size
    if name == "shapes":
        img = np.full((size, size), 0.15)
        img[(0.12 <= yy) & (yy < 0.45) & (0.1 <= xx) & (xx < 0.55)] = 0.55
        img[(yy - 0.65) ** 2 + (xx - 0.68) ** 2 < 0.22**2] = 1.0
        img[(yy > 0.55) & (xx < 0.4) & (yy - 0.55 > 0.9 * (0.4 - xx) - 0.15)] = 0.35
        return img
    if name == "stripes":
        img = np.full((size, size), 0.1)
        edges = np.cumsum(np.arange(1, 12)) / np.sum(np.arange(1, 12))
        for i, (lo, hi) in enumerate(zip(np.r_[0, edges[:-1]], edges)):
            if i % 2 == 0:
                img[:, (lo <= xx[0]) & (xx[0] < hi)] = 0.9
        return img
    if name == "disk":
        img = np.full((size, size), 0.1)
        img[(yy - 0.5) ** 2 + (xx - 0.5) ** 2 < 0.3**2] = 1.0
        return img
    raise ImageError(f"unknown synthetic image {name!r}")
