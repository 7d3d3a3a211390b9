"""Linear degradation operators: identity and circular convolution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = [
    "OperatorError",
    "Kernel",
    "LinearOperator",
    "make_gaussian_kernel",
    "make_cauchy_kernel",
    "make_uniform_kernel",
    "kernel_by_name",
    "identity",
    "convolution",
    "apply",
    "adjoint",
    "KERNEL_NAMES",
]

# kernels with at most this many taps use the direct spatial path
DIRECT_MAX_TAPS = 15 * 15


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Odd-sized, nonnegative, unit-sum blur stencil centred on its middle tap."""

    weights: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise OperatorError(f"kernel must be 2-D with odd sides, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise OperatorError("kernel weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise OperatorError("kernel weights sum to zero")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def side(self) -> int:
        return self.weights.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


def make_gaussian_kernel(size: int = 25, sigma: float = 1.6) -> Kernel:
    if size < 1 or size % 2 == 0:
        raise OperatorError(f"Gaussian kernel size must be odd, got {size}")
    if not sigma > 0:
        raise OperatorError(f"sigma must be positive, got {sigma}")
    r = np.arange(size) - size // 2
    x1, x2 = np.meshgrid(r, r, indexing="ij")
    return Kernel(np.exp(-(x1**2 + x2**2) / (2.0 * sigma**2)), name=f"gaussian{size}")


def make_cauchy_kernel() -> Kernel:
    """15x15 kernel with weights 1/(1 + x1^2 + x2^2) for x1, x2 in -7..7."""
    r = np.arange(-7, 8)
    x1, x2 = np.meshgrid(r, r, indexing="ij")
    return Kernel(1.0 / (1.0 + x1**2 + x2**2), name="cauchy15")


def make_uniform_kernel(size: int = 9) -> Kernel:
    if size < 1 or size % 2 == 0:
        raise OperatorError(f"uniform kernel size must be odd, got {size}")
    return Kernel(np.ones((size, size)), name=f"uniform{size}")


KERNEL_NAMES = ("gaussian25", "cauchy15", "uniform9")


def kernel_by_name(name: str) -> Kernel:
    if name == "gaussian25":
        return make_gaussian_kernel(25, 1.6)
    if name == "cauchy15":
        return make_cauchy_kernel()
    if name == "uniform9":
        return make_uniform_kernel(9)
    raise OperatorError(f"unknown kernel {name!r}; expected one of {', '.join(KERNEL_NAMES)}")


@dataclass(frozen=True)
class LinearOperator:
    """Identity (``kernel is None``) or circular convolution on ``shape`` images.

    ``shape`` may be left ``None`` for an operator that adapts to its input.
    ``method`` selects the convolution path: ``"auto"``, ``"direct"`` or
    ``"fft"``.
    """

    kernel: Kernel | None = None
    shape: tuple[int, int] | None = None
    method: str = "auto"
    _otf_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in ("auto", "direct", "fft"):
            raise OperatorError(f"unknown convolution method {self.method!r}")

    @property
    def kind(self) -> str:
        return "identity" if self.kernel is None else "convolution"

    @property
    def is_identity(self) -> bool:
        return self.kernel is None

    def _check(self, img) -> np.ndarray:
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim != 2:
            raise OperatorError(f"operator input must be 2-D, got shape {arr.shape}")
        if self.shape is not None and arr.shape != tuple(self.shape):
            raise OperatorError(f"operator domain is {self.shape}, got image of shape {arr.shape}")
        return arr

    def _use_fft(self, shape) -> bool:
        if self.method != "auto":
            return self.method == "fft"
        kh, kw = self.kernel.shape
        # the wrap-around direct path needs the stencil to fit inside the image
        return kh * kw > DIRECT_MAX_TAPS or kh > shape[0] or kw > shape[1]

    def _otf(self, shape) -> np.ndarray:
        otf = self._otf_cache.get(shape)
        if otf is None:
            # fold the centred stencil onto the periodic grid, origin at (0, 0)
            kh, kw = self.kernel.shape
            rows = (np.arange(kh) - kh // 2) % shape[0]
            cols = (np.arange(kw) - kw // 2) % shape[1]
            psf = np.zeros(shape)
            np.add.at(psf, (rows[:, None], cols[None, :]), self.kernel.weights)
            otf = np.fft.rfft2(psf)
            self._otf_cache[shape] = otf
        return otf

    def apply(self, img) -> np.ndarray:
        arr = self._check(img)
        if self.kernel is None:
            return arr.copy()
        if self._use_fft(arr.shape):
            return np.fft.irfft2(np.fft.rfft2(arr) * self._otf(arr.shape), s=arr.shape)
        return ndimage.convolve(arr, self.kernel.weights, mode="grid-wrap")

    def adjoint(self, img) -> np.ndarray:
        arr = self._check(img)
        if self.kernel is None:
            return arr.copy()
        if self._use_fft(arr.shape):
            return np.fft.irfft2(np.fft.rfft2(arr) * np.conj(self._otf(arr.shape)), s=arr.shape)
        return ndimage.correlate(arr, self.kernel.weights, mode="grid-wrap")

    __call__ = apply

    @property
    def T(self) -> "_Adjoint":
        return _Adjoint(self)


@dataclass(frozen=True)
class _Adjoint:
    op: LinearOperator

    def __call__(self, img):
        return self.op.adjoint(img)


def identity(shape=None) -> LinearOperator:
    return LinearOperator(None, shape)


def convolution(kernel: Kernel | np.ndarray | str, shape=None, method: str = "auto") -> LinearOperator:
    if isinstance(kernel, str):
        kernel = kernel_by_name(kernel)
    elif not isinstance(kernel, Kernel):
        kernel = Kernel(kernel)
    return LinearOperator(kernel, shape, method)


def apply(op: LinearOperator, img) -> np.ndarray:
    return op.apply(img)


def adjoint(op: LinearOperator, img) -> np.ndarray:
    return op.adjoint(img)
