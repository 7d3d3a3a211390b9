"""Plug-and-play ADMM for Poisson inverse problems.

The split problem ``min_x l(x) + beta s(v)  s.t. x = v`` is solved by
alternating

* an x-update against the Poisson likelihood, closed form per pixel when
  the degradation is the identity and an L-BFGS solve otherwise,
* a v-update that runs a Gaussian denoiser on ``x + u`` at noise level
  ``sigma = sqrt(beta / lambda_k)``,
* the dual update ``u += x - v``,

with ``lambda_k = lambda0 * lambda_step**k``.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .imaging import as_image, bin_down, bin_up
from .likelihood import PoissonNll
from .operators import LinearOperator, identity
from .optim import LbfgsConfig, minimize

__all__ = [
    "SolverParams",
    "AdmmState",
    "MultiPriorState",
    "RunReport",
    "SolverError",
    "x_update_denoise",
    "x_update_multi",
    "x_update_general",
    "p4ip_run",
    "p4ip_multi_run",
    "transform_curve",
    "anscombe_matching_offset",
    "restore_with_binning",
]

ANSCOMBE_LAMBDA = 0.25


def anscombe_matching_offset() -> float:
    """``v - u`` for which the lambda=0.25 x-update equals the Anscombe transform plus a constant."""
    return 4.0 * (math.sqrt(3.0 / 8.0) + 1.0)


class SolverError(RuntimeError):
    """A run aborted; ``report`` holds the partial run report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverParams:
    lambda0: float
    lambda_step: float = 1.0
    beta: float = 1.0
    iters: int = 60
    peak: float | None = None
    binning: int = 1
    output: str = "v"
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    epsilon: float | None = None
    keep_iterates: bool = False

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")
        if not self.lambda_step >= 1:
            raise ValueError(f"lambda_step must be >= 1, got {self.lambda_step}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.binning < 1:
            raise ValueError("binning factor must be >= 1")
        if self.output not in ("v", "x"):
            raise ValueError("output must be 'v' or 'x'")

    @classmethod
    def preset(cls, peak: float, deblurring: bool = False, **overrides) -> "SolverParams":
        """Default parameters for a given peak.

        Denoising: ``lambda0 = 0.5/peak, lambda_step = 1.05, 60 iterations``;
        deblurring: ``lambda0 = 0.2/peak, lambda_step = 1.03, 44 iterations``;
        ``beta = 1`` for both.  These are desk-tuned, not published values.
        """
        if not peak > 0:
            raise ValueError(f"peak must be positive, got {peak}")
        if deblurring:
            base = dict(lambda0=0.2 / peak, lambda_step=1.03, beta=1.0, iters=44)
        else:
            base = dict(lambda0=0.5 / peak, lambda_step=1.05, beta=1.0, iters=60)
        base["peak"] = peak
        base.update(overrides)
        return cls(**base)

    def lambda_at(self, k: int) -> float:
        return self.lambda0 * self.lambda_step**k

    def sigma_at(self, k: int, beta: float | None = None) -> float:
        return math.sqrt((self.beta if beta is None else beta) / self.lambda_at(k))

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["lbfgs"] = dataclasses.asdict(self.lbfgs)
        return d


@dataclass
class AdmmState:
    x: np.ndarray
    v: np.ndarray
    u: np.ndarray
    k: int = 0
    lambda_k: float = 1.0


@dataclass
class MultiPriorState:
    x: np.ndarray
    vs: list
    us: list
    betas: list
    k: int = 0
    lambda_k: float = 1.0


@dataclass
class RunReport:
    method: str = "p4ip"
    iters: int = 0
    lambdas: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    primal_residuals: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    wall_time: float = 0.0
    params: dict = field(default_factory=dict)
    iterates: list = field(default_factory=list)
    error: str | None = None


# --------------------------------------------------------------------------
# x-updates

def _closed_form(y, w, lam, n=1):
    """Positive root of -y/x + 1 + lam * (n x - w) = 0, elementwise."""
    a = lam * w - 1.0
    root = np.sqrt(a * a + 4.0 * n * lam * y)
    # the two forms are algebraically equal; each avoids cancellation on its side
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = np.where(root - a > 0, 2.0 * y / (root - a), 0.0)
    return np.where(a >= 0, (a + root) / (2.0 * n * lam), neg)


def x_update_denoise(y, v, u, lam: float) -> np.ndarray:
    """Closed-form Poisson-denoising x-update.

    Minimises ``-y ln x + x + lam/2 (x - (v - u))^2`` per pixel:
    ``x = ((lam (v-u) - 1) + sqrt((lam (v-u) - 1)^2 + 4 lam y)) / (2 lam)``,
    which is nonnegative for ``y >= 0``.
    """
    if not np.all(np.asarray(lam) > 0):
        raise ValueError(f"lambda must be positive, got {lam}")
    y = np.asarray(y, dtype=np.float64)
    return _closed_form(y, np.asarray(v, dtype=np.float64) - np.asarray(u, dtype=np.float64), lam)


def x_update_multi(y, vs: Sequence, us: Sequence, lam: float) -> np.ndarray:
    """Closed-form x-update with ``N`` split variables, identity degradation.

    Minimises ``-y ln x + x + lam/2 sum_j (x - v_j + u_j)^2`` per pixel.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if len(vs) != len(us) or not vs:
        raise ValueError("need matching, non-empty v and u lists")
    w = reduce(np.add, [np.asarray(v, np.float64) - np.asarray(u, np.float64) for v, u in zip(vs, us)])
    return _closed_form(np.asarray(y, dtype=np.float64), w, lam, len(vs))


def _x_update_general(y, targets, lam, H, x_warm, cfg, epsilon=None):
    """L-BFGS solve of ``l(x) + lam/2 sum_j |x - target_j|^2`` over ``x >= 0``.

    Where ``y == 0`` the likelihood is linear in ``Hx`` and unbounded below,
    so the nonnegativity bound is what keeps the subproblem well posed; it
    is also the constraint the closed-form denoising update satisfies.
    Returns ``(x, info)``.
    """
    nll = PoissonNll(y, H, epsilon)
    n = len(targets)
    target_sum = reduce(np.add, targets)
    cache = {}

    def hx(x):
        if "x" not in cache or not np.array_equal(cache["x"], x):
            cache["x"] = x.copy()
            cache["hx"] = H.apply(x)
        return cache["hx"]

    def value(x):
        quad = sum(float(np.sum((x - t) ** 2)) for t in targets)
        return nll.value_from_hx(hx(x)) + 0.5 * lam * quad

    def grad(x):
        return nll.grad_from_hx(hx(x)) + lam * (n * x - target_sum)

    return minimize(value, grad, x_warm, cfg, lower=0.0)


def x_update_general(y, v, u, lam: float, H: LinearOperator, x_warm, cfg: LbfgsConfig | None = None,
                     epsilon: float | None = None) -> np.ndarray:
    """x-update for a general degradation ``H``, solved by L-BFGS from ``x_warm``.

    Minimises ``-y^T ln(Hx) + 1^T Hx + lam/2 |x - v + u|^2`` over
    ``x >= 0``, with the surrogate log below ``epsilon``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    target = np.asarray(v, dtype=np.float64) - np.asarray(u, dtype=np.float64)
    x, _ = _x_update_general(y, [target], lam, H, x_warm, cfg or LbfgsConfig(), epsilon)
    return x


# --------------------------------------------------------------------------
# ADMM loops

def _check_inputs(y, H):
    y = as_image(y, name="y")
    H = H if H is not None else identity()
    if H.shape is not None and tuple(H.shape) != y.shape:
        raise ValueError(f"operator domain {H.shape} does not match observation {y.shape}")
    return y, H


def p4ip_run(y, H: LinearOperator | None, denoiser, params: SolverParams, v0=None, u0=None):
    """Run the plug-and-play Poisson ADMM for ``params.iters`` iterations.

    Starts from ``u = 0`` and ``v = 0`` unless ``v0``/``u0`` are given.
    Returns ``(reconstruction, RunReport)``; the reconstruction is the final
    denoised iterate ``v`` (or ``x`` with ``params.output == "x"``).
    Denoiser or optimiser failures raise :class:`SolverError`.
    """
    y, H = _check_inputs(y, H)
    report = RunReport(method="p4ip" if H.is_identity else "p4ip-deblur", params=params.echo())
    state = AdmmState(
        x=y.copy(),
        v=np.zeros_like(y) if v0 is None else np.array(v0, dtype=np.float64),
        u=np.zeros_like(y) if u0 is None else np.array(u0, dtype=np.float64),
        lambda_k=params.lambda0,
    )
    start = time.perf_counter()
    try:
        for k in range(params.iters):
            state.k, state.lambda_k = k, params.lambda_at(k)
            lam = state.lambda_k
            if H.is_identity:
                state.x = x_update_denoise(y, state.v, state.u, lam)
                report.inner_iterations.append(0)
            else:
                state.x, info = _x_update_general(y, [state.v - state.u], lam, H, state.x,
                                                  params.lbfgs, params.epsilon)
                report.inner_iterations.append(info.iterations)
            sigma = math.sqrt(params.beta / lam)
            state.v = denoiser(state.x + state.u, sigma)
            state.u = state.u + (state.x - state.v)

            report.lambdas.append(lam)
            report.sigmas.append(sigma)
            report.primal_residuals.append(float(np.linalg.norm(state.x - state.v)))
            if params.keep_iterates:
                report.iterates.append((state.x.copy(), [state.v.copy()], [state.u.copy()]))
            report.iters = k + 1
    except Exception as exc:
        report.error = f"iteration {report.iters}: {exc}"
        report.wall_time = time.perf_counter() - start
        raise SolverError(f"P4IP run aborted at {report.error}", report) from exc
    report.wall_time = time.perf_counter() - start
    out = state.v if params.output == "v" else state.x
    return out.copy(), report


def p4ip_multi_run(y, H: LinearOperator | None, denoisers: Sequence, params: SolverParams,
                   v0=None, u0=None):
    """Plug-and-play ADMM with several priors, one split variable each.

    ``denoisers`` is a list of ``(denoiser, beta_j)`` pairs.  Each prior
    gets its own ``v_j``, ``u_j`` and noise level ``sqrt(beta_j / lambda_k)``.
    Returns the mean of the final ``v_j`` (or ``x``) and a report whose
    ``sigmas`` entries are per-prior lists.
    """
    y, H = _check_inputs(y, H)
    if not denoisers:
        raise ValueError("need at least one (denoiser, beta) pair")
    fns = [d for d, _ in denoisers]
    betas = [float(b) for _, b in denoisers]
    if any(not b > 0 for b in betas):
        raise ValueError("every prior weight beta_j must be positive")
    n = len(fns)
    zero = np.zeros_like(y)
    state = MultiPriorState(
        x=y.copy(),
        vs=[zero.copy() if v0 is None else np.array(v0, dtype=np.float64) for _ in range(n)],
        us=[zero.copy() if u0 is None else np.array(u0, dtype=np.float64) for _ in range(n)],
        betas=betas,
        lambda_k=params.lambda0,
    )
    echo = params.echo()
    echo["betas"] = betas
    report = RunReport(method="m-p4ip", params=echo)
    start = time.perf_counter()
    try:
        for k in range(params.iters):
            state.k, state.lambda_k = k, params.lambda_at(k)
            lam = state.lambda_k
            if H.is_identity:
                state.x = x_update_multi(y, state.vs, state.us, lam)
                report.inner_iterations.append(0)
            else:
                targets = [v - u for v, u in zip(state.vs, state.us)]
                state.x, info = _x_update_general(y, targets, lam, H, state.x,
                                                  params.lbfgs, params.epsilon)
                report.inner_iterations.append(info.iterations)
            sigmas = [math.sqrt(b / lam) for b in betas]
            state.vs = [fn(state.x + u, s) for fn, u, s in zip(fns, state.us, sigmas)]
            state.us = [u + (state.x - v) for u, v in zip(state.us, state.vs)]

            report.lambdas.append(lam)
            report.sigmas.append(sigmas)
            report.primal_residuals.append(
                float(math.sqrt(sum(np.sum((state.x - v) ** 2) for v in state.vs))))
            if params.keep_iterates:
                report.iterates.append((state.x.copy(), [v.copy() for v in state.vs],
                                        [u.copy() for u in state.us]))
            report.iters = k + 1
    except Exception as exc:
        report.error = f"iteration {report.iters}: {exc}"
        report.wall_time = time.perf_counter() - start
        raise SolverError(f"M-P4IP run aborted at {report.error}", report) from exc
    report.wall_time = time.perf_counter() - start
    if params.output == "x":
        out = state.x.copy()
    else:
        out = state.vs[0].copy() if n == 1 else reduce(np.add, state.vs) / n
    return out, report


def transform_curve(lam: float, v_minus_u: float, y_grid) -> np.ndarray:
    """The denoising x-update as a scalar map of the noisy count ``y``."""
    y = np.asarray(y_grid, dtype=np.float64)
    return x_update_denoise(y, np.full_like(y, v_minus_u), np.zeros_like(y), lam)


def restore_with_binning(y, denoiser, params: SolverParams, factor: int | None = None):
    """Denoise at reduced resolution: bin counts, restore, interpolate back.

    Summed ``factor x factor`` blocks have ``factor**2`` times the intensity,
    so ``lambda0`` is divided by ``factor**2`` (the peak preset at the
    binned peak).  Identity degradation only.  Returns ``(image, report)``.
    """
    y = as_image(y, name="y")
    factor = params.binning if factor is None else factor
    height, width = y.shape
    binned = bin_down(y, factor)
    scale = factor**2
    binned_params = dataclasses.replace(
        params,
        lambda0=params.lambda0 / scale,
        peak=None if params.peak is None else params.peak * scale,
        binning=factor,
    )
    restored, report = p4ip_run(binned, None, denoiser, binned_params)
    report.method = "p4ip-bin"
    return bin_up(restored, factor, width, height), report
