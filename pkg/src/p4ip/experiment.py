"""Degradation, method dispatch and experiment sweeps.

Config files are INI-style ``key = value`` lines; repeating a key builds a
list, ``#``/``;`` start comments and ``[section]`` headers are ignored::

    image = synthetic:shapes:64
    peak = 1
    kernel = none
    method = p4ip
    method = anscombe
    denoiser = nlm
    seed = 1
    seed = 2
    output_dir = results

Results CSV columns (one row per cell, then one ``Average`` row per
``(peak, kernel, method, denoiser)`` group)::

    image,peak,kernel,method,denoiser,seed,status,psnr_noisy,psnr,iters,wall_time_s

``wall_time_s`` is the only non-deterministic column and is always last.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anscombe import VstPipelineConfig, vst_restore
from .denoisers import denoiser_by_name
from .imaging import load_image, poisson_sample, psnr, scale_to_peak, synthetic_image
from .operators import LinearOperator, convolution, identity, kernel_by_name, Kernel
from .solver import SolverParams, p4ip_multi_run, p4ip_run, restore_with_binning

__all__ = [
    "METHODS",
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_scene",
    "make_operator",
    "degrade",
    "restore",
    "run_experiment",
    "format_rows",
]

log = logging.getLogger(__name__)

METHODS = ("p4ip", "p4ip-bin", "m-p4ip", "anscombe")
CSV_COLUMNS = ("image", "peak", "kernel", "method", "denoiser", "seed", "status",
               "psnr_noisy", "psnr", "iters", "wall_time_s")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    images: list
    peaks: list
    methods: list
    seeds: list
    kernels: list = field(default_factory=lambda: ["none"])
    denoisers: list = field(default_factory=lambda: ["nlm"])
    output_dir: str = "results"
    threads: int | None = None
    inverse: str = "unbiased"
    mp_betas: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("images", "peaks", "methods", "seeds", "kernels", "denoisers"):
            if not getattr(self, name):
                raise ConfigError(f"config needs at least one '{name.rstrip('s')}' entry")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; expected {', '.join(METHODS)}")
        if any(not p > 0 for p in self.peaks):
            raise ConfigError("peaks must be positive")


_LIST_KEYS = {"image": "images", "peak": "peaks", "kernel": "kernels", "method": "methods",
              "denoiser": "denoisers", "seed": "seeds", "mp_beta": "mp_betas"}
_OVERRIDE_KEYS = {"lambda0": float, "lambda_step": float, "beta": float, "iters": int}


def parse_config(path) -> ExperimentConfig:
    values: dict[str, list[str]] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;" or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values.setdefault(key.lower(), []).append(value)

    kwargs = {}
    try:
        for key, items in values.items():
            if key in _LIST_KEYS:
                conv = {"peak": float, "seed": int, "mp_beta": float}.get(key, str)
                kwargs[_LIST_KEYS[key]] = [conv(v) for v in items]
            elif key in _OVERRIDE_KEYS:
                kwargs.setdefault("overrides", {})[key] = _OVERRIDE_KEYS[key](items[-1])
            elif key == "output_dir":
                out = Path(items[-1])
                kwargs["output_dir"] = str(out if out.is_absolute() else Path(path).parent / out)
            elif key == "threads":
                kwargs["threads"] = int(items[-1])
            elif key == "inverse":
                kwargs["inverse"] = items[-1]
            else:
                raise ConfigError(f"{path}: unknown key {key!r}")
        kwargs.setdefault("images", [])
        kwargs["images"] = [_resolve_image(v, Path(path).parent) for v in kwargs["images"]]
        for required in ("peaks", "methods", "seeds"):
            kwargs.setdefault(required, [])
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_image(spec: str, base: Path) -> str:
    if spec.startswith("synthetic:") or Path(spec).is_absolute():
        return spec
    return str(base / spec)


def load_scene(spec: str) -> np.ndarray:
    """Load a clean scene: a file path or ``synthetic:<name>[:<size>]``."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        size = int(parts[2]) if len(parts) > 2 else 128
        return synthetic_image(parts[1], size)
    return load_image(spec)


def _scene_label(spec: str) -> str:
    return spec if spec.startswith("synthetic:") else Path(spec).stem


def make_operator(kernel: str | None, shape) -> LinearOperator:
    """``none``, a kernel name, or a raster file holding a custom stencil."""
    if kernel in (None, "", "none"):
        return identity(shape)
    if Path(kernel).is_file():
        return convolution(Kernel(load_image(kernel), name=Path(kernel).stem), shape)
    return convolution(kernel_by_name(kernel), shape)


def degrade(clean, peak: float, kernel: str | None, seed: int):
    """Scale to ``peak``, blur (circularly), then draw Poisson counts.

    Returns ``(reference, noisy)`` where ``reference`` is the scaled clean
    image that restorations are scored against.
    """
    reference = scale_to_peak(clean, peak)
    H = make_operator(kernel, reference.shape)
    # FFT round-off can leave -1e-17 where the blurred mean is ~0
    blurred = np.maximum(H.apply(reference), 0.0)
    return reference, poisson_sample(blurred, seed)


def restore(noisy, method: str, denoisers: list, peak: float | None, kernel: str | None = None,
            overrides: dict | None = None, inverse: str = "unbiased", mp_betas=None,
            output: str = "v"):
    """Run one restoration method.  Returns ``(image, iterations)``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    fns = [denoiser_by_name(d) if isinstance(d, str) else d for d in denoisers]
    if not fns:
        raise ValueError("at least one denoiser is required")
    if method == "anscombe":
        return vst_restore(noisy, VstPipelineConfig(fns[0], inverse)), 0

    overrides = dict(overrides or {})
    H = make_operator(kernel, np.shape(noisy))
    if peak is None and "lambda0" not in overrides:
        raise ValueError("need a peak (for presets) or an explicit lambda0")
    if peak is None:
        params = SolverParams(**{"lambda0": overrides.pop("lambda0"), "lambda_step": 1.05,
                                 "iters": 60, **overrides}, output=output)
    else:
        params = SolverParams.preset(peak, deblurring=not H.is_identity, output=output, **overrides)

    if method == "p4ip":
        out, report = p4ip_run(noisy, H, fns[0], params)
    elif method == "p4ip-bin":
        if not H.is_identity:
            raise ValueError("binning applies to denoising only (kernel must be none)")
        out, report = restore_with_binning(noisy, fns[0], params, factor=3)
    else:
        betas = list(mp_betas or [])
        if not betas:
            betas = [params.beta] * len(fns)
        if len(betas) != len(fns):
            raise ValueError(f"{len(fns)} denoisers but {len(betas)} prior weights")
        out, report = p4ip_multi_run(noisy, H, list(zip(fns, betas)), params)
    return out, report.iters


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.4f}"
    return str(value)


def format_rows(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _run_cell(cell, cfg: ExperimentConfig, scenes: dict):
    image, peak, kernel, method, denoisers, seed = cell
    row = dict(image=_scene_label(image), peak=peak, kernel=kernel, method=method,
               denoiser="+".join(denoisers), seed=seed)
    start = time.perf_counter()
    try:
        reference, noisy = degrade(scenes[image], peak, kernel, seed)
        row["psnr_noisy"] = psnr(reference, noisy, peak)
        out, iters = restore(noisy, method, denoisers, peak, kernel, cfg.overrides,
                             cfg.inverse, cfg.mp_betas)
        row.update(status="ok", psnr=psnr(reference, out, peak), iters=iters)
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        log.warning("cell %s failed: %s", row, exc)
        row["status"] = f"error: {exc}"
    row["wall_time_s"] = time.perf_counter() - start
    log.info("%s", {k: row.get(k) for k in CSV_COLUMNS})
    return row


def _cells(cfg: ExperimentConfig):
    for image in cfg.images:
        for peak in cfg.peaks:
            for kernel in cfg.kernels:
                for method in cfg.methods:
                    groups = [cfg.denoisers] if method == "m-p4ip" else [[d] for d in cfg.denoisers]
                    for denoisers in groups:
                        for seed in cfg.seeds:
                            yield image, peak, kernel, method, denoisers, seed


def _averages(rows):
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((row["peak"], row["kernel"], row["method"], row["denoiser"]), []).append(row)
    out = []
    for (peak, kernel, method, denoiser), members in groups.items():
        ok = [r for r in members if r.get("status") == "ok"]
        avg = dict(image="Average", peak=peak, kernel=kernel, method=method, denoiser=denoiser,
                   seed="", status=f"ok {len(ok)}/{len(members)}")
        if ok:
            avg["psnr_noisy"] = float(np.mean([r["psnr_noisy"] for r in ok]))
            avg["psnr"] = float(np.mean([r["psnr"] for r in ok]))
        avg["wall_time_s"] = sum(r["wall_time_s"] for r in members)
        out.append(avg)
    return out


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> Path:
    """Run every cell of the sweep and write ``results.csv`` in ``cfg.output_dir``."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / "experiment.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    try:
        scenes = {spec: load_scene(spec) for spec in cfg.images}
        cells = list(_cells(cfg))
        workers = threads or cfg.threads or os.cpu_count() or 1
        log.info("running %d cells on %d worker(s)", len(cells), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: _run_cell(c, cfg, scenes), cells))
        path = out_dir / "results.csv"
        path.write_text(format_rows(rows + _averages(rows)))
        log.info("wrote %s", path)
        return path
    finally:
        log.removeHandler(handler)
        handler.close()
