"""Poisson negative log-likelihood with a C2 quadratic extension of the log."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import as_image
from .operators import LinearOperator, identity

__all__ = ["safe_log", "safe_log_d1", "default_epsilon", "PoissonNll", "nll_value", "nll_grad"]


def _coefficients(epsilon):
    a = -1.0 / (2.0 * epsilon**2)
    b = 2.0 / epsilon
    c = np.log(epsilon) - 1.5
    return a, b, c


def safe_log(t, epsilon):
    """ln(t) for t >= epsilon, else the quadratic matching ln to second order at epsilon."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    t = np.asarray(t, dtype=np.float64)
    a, b, c = _coefficients(epsilon)
    above = t >= epsilon
    with np.errstate(divide="ignore", invalid="ignore"):
        logged = np.log(np.where(above, t, epsilon))
    return np.where(above, logged, (a * t + b) * t + c)


def safe_log_d1(t, epsilon):
    """Derivative of :func:`safe_log`."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    t = np.asarray(t, dtype=np.float64)
    a, b, _ = _coefficients(epsilon)
    above = t >= epsilon
    return np.where(above, 1.0 / np.where(above, t, epsilon), 2.0 * a * t + b)


def default_epsilon(y) -> float:
    return 1e-8 * (float(np.mean(y)) + 1.0)


@dataclass(frozen=True)
class PoissonNll:
    """-y^T log(Hx) + 1^T Hx, dropping the log-Gamma constant.

    ``epsilon`` defaults to ``1e-8 * (mean(y) + 1)``.
    """

    y: np.ndarray
    H: LinearOperator = None
    epsilon: float = None

    def __post_init__(self):
        object.__setattr__(self, "y", as_image(self.y, name="y"))
        if self.H is None:
            object.__setattr__(self, "H", identity())
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", default_epsilon(self.y))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def _forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.y.shape:
            raise ValueError(f"x has shape {x.shape}, observations have {self.y.shape}")
        return self.H.apply(x)

    def value_from_hx(self, hx) -> float:
        return float(np.sum(hx - self.y * safe_log(hx, self.epsilon)))

    def grad_from_hx(self, hx) -> np.ndarray:
        return self.H.adjoint(1.0 - self.y * safe_log_d1(hx, self.epsilon))

    def value(self, x) -> float:
        return self.value_from_hx(self._forward(x))

    def grad(self, x) -> np.ndarray:
        return self.grad_from_hx(self._forward(x))


def nll_value(f: PoissonNll, x) -> float:
    return f.value(x)


def nll_grad(f: PoissonNll, x) -> np.ndarray:
    return f.grad(x)
