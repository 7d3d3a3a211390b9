"""Gaussian denoisers usable as plug-in priors.

Every denoiser is called as ``denoiser(image, sigma)`` where ``sigma`` is
the standard deviation of the additive white Gaussian noise, in the same
intensity units as ``image``.  Inputs may be negative (ADMM iterates are).
"""

from __future__ import annotations

import configparser
import math
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import load_raster, save_raster

__all__ = [
    "DenoiserError",
    "Denoiser",
    "FunctionDenoiser",
    "GaussianFilterDenoiser",
    "NlmDenoiser",
    "TikhonovProxDenoiser",
    "ExternalDenoiserSpec",
    "ExternalDenoiser",
    "gaussian_filter_denoiser",
    "nlm_denoiser",
    "tikhonov_prox_denoiser",
    "external_denoiser",
    "identity_denoiser",
    "denoiser_by_name",
]


class DenoiserError(RuntimeError):
    pass


class Denoiser:
    """Base class; subclasses implement ``_denoise``."""

    name = "denoiser"

    def __call__(self, image, sigma: float) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 2:
            raise DenoiserError(f"{self.name}: expected a 2-D image, got shape {img.shape}")
        sigma = float(sigma)
        if not (sigma >= 0 and math.isfinite(sigma)):
            raise DenoiserError(f"{self.name}: sigma must be finite and >= 0, got {sigma}")
        out = np.asarray(self._denoise(img, sigma), dtype=np.float64)
        if out.shape != img.shape:
            raise DenoiserError(f"{self.name}: output shape {out.shape} != input shape {img.shape}")
        if not np.all(np.isfinite(out)):
            raise DenoiserError(f"{self.name}: output contains non-finite values")
        return out

    denoise = __call__

    def _denoise(self, img: np.ndarray, sigma: float) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class FunctionDenoiser(Denoiser):
    """Wrap a plain ``f(image, sigma)`` callable."""

    def __init__(self, fn, name: str = "function"):
        self.fn = fn
        self.name = name

    def _denoise(self, img, sigma):
        return self.fn(img, sigma)


def identity_denoiser() -> Denoiser:
    return FunctionDenoiser(lambda img, sigma: img.copy(), name="identity")


# --------------------------------------------------------------------------
# Gaussian smoothing

def _gaussian_taps(spatial_sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * spatial_sigma))
    r = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(r**2) / (2.0 * spatial_sigma**2))
    return taps / taps.sum()


class GaussianFilterDenoiser(Denoiser):
    """Isotropic Gaussian smoothing whose width grows with the noise level.

    Spatial std is ``min(sigma * scale, max_spatial)``; the separable
    stencil has ``2 * ceil(3 * spatial) + 1`` taps and reflective edges.
    """

    name = "gauss"

    def __init__(self, scale: float = 0.5, max_spatial: float = 3.0):
        self.scale = scale
        self.max_spatial = max_spatial

    def spatial_sigma(self, sigma: float) -> float:
        return min(sigma * self.scale, self.max_spatial)

    def _denoise(self, img, sigma):
        s = self.spatial_sigma(sigma)
        if s <= 0:
            return img.copy()
        taps = _gaussian_taps(s)
        out = ndimage.correlate1d(img, taps, axis=0, mode="reflect")
        return ndimage.correlate1d(out, taps, axis=1, mode="reflect")


def gaussian_filter_denoiser(scale: float = 0.5, max_spatial: float = 3.0) -> Denoiser:
    return GaussianFilterDenoiser(scale, max_spatial)


# --------------------------------------------------------------------------
# non-local means

def _box_sum(arr: np.ndarray, size: int) -> np.ndarray:
    """Sum over every ``size x size`` window ('valid' placement)."""
    c = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    np.cumsum(np.cumsum(arr, axis=0), axis=1, out=c[1:, 1:])
    return c[size:, size:] - c[:-size, size:] - c[size:, :-size] + c[:-size, :-size]


class NlmDenoiser(Denoiser):
    """Pixelwise non-local means.

    Weights are ``exp(-SSD / h^2)`` where SSD is the sum of squared
    differences between ``patch x patch`` neighbourhoods and
    ``h = h_factor * sigma * patch``.  Candidates come from a
    ``window x window`` search area; borders are symmetric-padded.
    """

    name = "nlm"

    def __init__(self, patch: int = 5, window: int = 11, h_factor: float = 0.8):
        if patch % 2 == 0 or window % 2 == 0:
            raise ValueError("patch and window sizes must be odd")
        if patch >= window:
            raise ValueError("patch must be smaller than the search window")
        self.patch = patch
        self.window = window
        self.h_factor = h_factor
        self._fallback = GaussianFilterDenoiser()

    def _denoise(self, img, sigma):
        height, width = img.shape
        if height < self.window or width < self.window:
            return self._fallback(img, sigma)
        h = self.h_factor * sigma * self.patch
        if h == 0:
            return img.copy()
        rp, rw = self.patch // 2, self.window // 2
        pad = rp + rw
        padded = np.pad(img, pad, mode="symmetric")
        # reference patches cover the image plus a patch-radius ring
        ref = padded[rw:rw + height + 2 * rp, rw:rw + width + 2 * rp]
        inv_h2 = 1.0 / h**2
        num = np.zeros_like(img)
        den = np.zeros_like(img)
        for dy in range(-rw, rw + 1):
            for dx in range(-rw, rw + 1):
                cand = padded[rw + dy:rw + dy + height + 2 * rp, rw + dx:rw + dx + width + 2 * rp]
                ssd = _box_sum((ref - cand) ** 2, self.patch)
                w = np.exp(-ssd * inv_h2)
                num += w * cand[rp:rp + height, rp:rp + width]
                den += w
        return num / den


def nlm_denoiser(patch: int = 5, window: int = 11) -> Denoiser:
    return NlmDenoiser(patch, window)


# --------------------------------------------------------------------------
# quadratic prior with a closed-form proximal step

class TikhonovProxDenoiser(Denoiser):
    """Exact MAP denoiser for the prior ``s(v) = strength/2 * |v|^2``.

    Solves ``min_v |z - v|^2 / (2 sigma^2) + strength/2 * |v|^2``, i.e.
    ``v = z / (1 + strength * sigma^2)``.  Because the prior is explicit
    the whole ADMM loop has a checkable fixed point.
    """

    name = "tikhonov"

    def __init__(self, strength: float = 1.0):
        if not strength > 0:
            raise ValueError("strength must be positive")
        self.strength = strength

    def _denoise(self, img, sigma):
        return img / (1.0 + self.strength * sigma**2)


def tikhonov_prox_denoiser(strength: float = 1.0) -> Denoiser:
    return TikhonovProxDenoiser(strength)


# --------------------------------------------------------------------------
# subprocess bridge

_PLACEHOLDERS = ("{input}", "{sigma}", "{output}")


@dataclass(frozen=True)
class ExternalDenoiserSpec:
    """How to invoke an external denoiser executable.

    ``template`` is split shell-style into arguments appended to
    ``executable``; ``{input}``, ``{sigma}`` and ``{output}`` are replaced
    by the input raster path, ``repr(sigma)`` and the output raster path.
    """

    executable: str
    template: str = "{input} {sigma} {output}"
    timeout: float = 300.0
    name: str = "external"

    def __post_init__(self):
        missing = [p for p in _PLACEHOLDERS if p not in self.template]
        if missing:
            raise ValueError(f"invocation template lacks {', '.join(missing)}")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_file(cls, path) -> "ExternalDenoiserSpec":
        """Read an INI file with a ``[denoiser]`` section.

        Keys: ``executable`` (relative paths resolve against the file's
        directory), ``template``, ``timeout``, ``name``.
        """
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None)
        if not parser.read(path):
            raise FileNotFoundError(path)
        if "denoiser" not in parser:
            raise ValueError(f"{path}: missing [denoiser] section")
        sec = parser["denoiser"]
        exe = sec.get("executable")
        if not exe:
            raise ValueError(f"{path}: missing 'executable'")
        if not Path(exe).is_absolute() and (path.parent / exe).exists():
            exe = str((path.parent / exe).resolve())
        return cls(
            executable=exe,
            template=sec.get("template", "{input} {sigma} {output}"),
            timeout=sec.getfloat("timeout", 300.0),
            name=sec.get("name", Path(exe).name),
        )


class ExternalDenoiser(Denoiser):
    """Runs an executable per call, exchanging images as raster files.

    Calls on one instance are serialised.
    """

    def __init__(self, spec: ExternalDenoiserSpec):
        self.spec = spec
        self.name = spec.name
        self._lock = threading.Lock()

    def command(self, input_path, sigma, output_path) -> list[str]:
        args = []
        for token in shlex.split(self.spec.template):
            token = (token.replace("{input}", str(input_path))
                          .replace("{sigma}", repr(float(sigma)))
                          .replace("{output}", str(output_path)))
            args.append(token)
        return [self.spec.executable, *args]

    def _denoise(self, img, sigma):
        with self._lock, tempfile.TemporaryDirectory(prefix="p4ip-ext-") as tmp:
            src = Path(tmp) / "input.rast"
            dst = Path(tmp) / "output.rast"
            save_raster(img, src)
            cmd = self.command(src, sigma, dst)
            try:
                proc = subprocess.run(cmd, capture_output=True, timeout=self.spec.timeout)
            except subprocess.TimeoutExpired as exc:
                raise DenoiserError(f"{self.name}: timed out after {self.spec.timeout}s") from exc
            except OSError as exc:
                raise DenoiserError(f"{self.name}: cannot run {cmd[0]}: {exc}") from exc
            if proc.returncode != 0:
                stderr = proc.stderr.decode(errors="replace").strip()
                raise DenoiserError(f"{self.name}: exit code {proc.returncode}: {stderr[-500:]}")
            try:
                return load_raster(dst)
            except (OSError, ValueError) as exc:
                raise DenoiserError(f"{self.name}: bad output raster: {exc}") from exc


def external_denoiser(spec: ExternalDenoiserSpec) -> Denoiser:
    return ExternalDenoiser(spec)


def denoiser_by_name(name: str) -> Denoiser:
    """``gauss``, ``nlm``, ``tikhonov``, ``identity`` or ``ext:<spec-file>``."""
    if name.startswith("ext:"):
        return ExternalDenoiser(ExternalDenoiserSpec.from_file(name[4:]))
    factories = {
        "gauss": gaussian_filter_denoiser,
        "nlm": nlm_denoiser,
        "tikhonov": tikhonov_prox_denoiser,
        "identity": identity_denoiser,
    }
    try:
        return factories[name]()
    except KeyError:
        raise ValueError(f"unknown denoiser {name!r}") from None
