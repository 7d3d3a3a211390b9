"""Limited-memory BFGS with a backtracking Armijo line search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LbfgsConfig", "LbfgsResult", "OptimizationError", "minimize"]


class OptimizationError(RuntimeError):
    """Non-finite objective or gradient; ``x`` holds the offending iterate."""

    def __init__(self, message, x=None, iteration=None):
        super().__init__(message)
        self.x = x
        self.iteration = iteration


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 8
    max_iters: int = 100
    grad_tol: float = 1e-6
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not (self.grad_tol > 0 and 0 < self.c1 < 1 and 0 < self.shrink < 1):
            raise ValueError("tolerances and line-search constants must be positive")


@dataclass
class LbfgsResult:
    iterations: int = 0
    n_value: int = 0
    n_grad: int = 0
    converged: bool = False
    message: str = ""
    value: float = np.nan
    grad_inf: float = np.nan
    values: list = field(default_factory=list)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def minimize(value_fn, grad_fn, x0, cfg: LbfgsConfig | None = None, lower: float | None = None):
    """Minimise ``value_fn`` starting from ``x0``.

    Stops once ``max|grad| <= grad_tol * (1 + max|grad(x0)|)`` or after
    ``cfg.max_iters`` iterations.  Update pairs with
    ``s.y <= 1e-10 |s| |y|`` are skipped and reset the memory.  Returns ``(x, LbfgsResult)``
    with ``x`` in the shape of ``x0``.

    With ``lower`` set, iterates are kept ``>= lower`` by projection: bound
    variables whose gradient pushes outward are frozen for the step, and the
    stopping test uses the projected gradient ``x - max(x - g, lower)``.
    """
    cfg = cfg or LbfgsConfig()
    shape = np.shape(x0)
    x = np.array(x0, dtype=np.float64).ravel()
    if lower is not None:
        x = np.maximum(x, lower)
    info = LbfgsResult()

    def value(z):
        info.n_value += 1
        v = float(value_fn(z.reshape(shape)))
        if not np.isfinite(v):
            raise OptimizationError(f"non-finite objective at iteration {info.iterations}",
                                    z.reshape(shape).copy(), info.iterations)
        return v

    def grad(z):
        info.n_grad += 1
        g = np.array(grad_fn(z.reshape(shape)), dtype=np.float64).ravel()
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite gradient at iteration {info.iterations}",
                                    z.reshape(shape).copy(), info.iterations)
        return g

    def optimality(z, g):
        if lower is None:
            return np.max(np.abs(g))
        return np.max(np.abs(z - np.maximum(z - g, lower)))

    def search(d, slope_of):
        step = 1.0
        for _ in range(cfg.max_backtracks):
            x_new = x + step * d
            if lower is not None:
                x_new = np.maximum(x_new, lower)
            f_new = value(x_new)
            if f_new <= f + cfg.c1 * slope_of(x_new, step):
                return x_new, f_new
            step *= cfg.shrink
        return None, None

    f = value(x)
    g = grad(x)
    info.values.append(f)
    tol = cfg.grad_tol * (1.0 + optimality(x, g))
    pairs = deque(maxlen=cfg.memory)

    while True:
        if optimality(x, g) <= tol:
            info.converged = True
            info.message = "gradient tolerance reached"
            break
        if info.iterations >= cfg.max_iters:
            info.message = "iteration limit reached"
            break

        if lower is None:
            d = -_two_loop(g, pairs)
            slope = np.dot(g, d)
            if not slope < 0:
                pairs.clear()
                d = -g
                slope = -np.dot(g, g)
            x_new, f_new = search(d, lambda _, t: t * slope)
        else:
            free = (x > lower) | (g < 0)
            d = -_two_loop(np.where(free, g, 0.0), pairs)
            d[~free] = 0.0
            if not np.dot(g, d) < 0:
                pairs.clear()
                d = np.where(free, -g, 0.0)
            x_new, f_new = search(d, lambda z, _: np.dot(g, z - x))
            if x_new is None and pairs:
                pairs.clear()
                x_new, f_new = search(np.where(free, -g, 0.0), lambda z, _: np.dot(g, z - x))
        if x_new is None:
            info.message = "line search failed"
            break

        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = np.dot(s, y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        else:
            # negative curvature along s; without a curvature condition in the
            # line search the stale memory would keep steering the same way
            pairs.clear()
        x, f, g = x_new, f_new, g_new
        info.iterations += 1
        info.values.append(f)

    info.value = f
    info.grad_inf = float(optimality(x, g))
    return x.reshape(shape), info
