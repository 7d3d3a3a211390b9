"""Command-line interface: ``p4ip {degrade,restore,baseline,eval,curve,experiment}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .anscombe import anscombe_forward
from .denoisers import DenoiserError
from .experiment import (ConfigError, degrade, format_rows, load_scene,
                         parse_config, restore, run_experiment)
from .imaging import load_image, psnr, save_raster
from .optim import OptimizationError
from .solver import ANSCOMBE_LAMBDA, SolverError, anscombe_matching_offset, transform_curve

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("p4ip")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _read_sidecar(path) -> dict:
    side = _sidecar(path)
    return json.loads(side.read_text()) if side.is_file() else {}


def _output_path(args, name) -> Path:
    path = Path(name)
    if args.output_dir and not path.is_absolute():
        Path(args.output_dir).mkdir(parents=True, exist_ok=True)
        path = Path(args.output_dir) / path
    return path


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


# --------------------------------------------------------------------------

def cmd_degrade(args):
    clean = load_scene(args.input)
    seed = args.seed if args.seed is not None else 0
    reference, noisy = degrade(clean, args.peak, args.kernel, seed)
    out = _output_path(args, args.output)
    save_raster(noisy, out)
    meta = {"source": args.input, "peak": args.peak, "kernel": args.kernel, "seed": seed,
            "width": noisy.shape[1], "height": noisy.shape[0]}
    if args.reference_out:
        ref_path = _output_path(args, args.reference_out)
        save_raster(reference, ref_path)
        meta["reference"] = str(ref_path)
    _sidecar(out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(out)


def _report_row(args, method, denoisers, meta, out, iters, seconds):
    row = dict(image=Path(args.input).stem, peak=meta.get("peak"), kernel=meta.get("kernel", "none"),
               method=method, denoiser="+".join(denoisers), seed=meta.get("seed"), status="ok",
               iters=iters, wall_time_s=seconds)
    ref_path = args.reference or meta.get("reference")
    if ref_path:
        reference = load_image(ref_path)
        peak_max = meta.get("peak") or float(reference.max())
        row["psnr"] = psnr(reference, out, peak_max)
        if args.input:
            row["psnr_noisy"] = psnr(reference, load_image(args.input), peak_max)
    return row


def _emit_row(args, row):
    text = format_rows([row])
    if args.report:
        report = Path(args.report)
        if report.is_file() and report.stat().st_size:
            text = text.split("\n", 1)[1]
        with open(report, "a") as fh:
            fh.write(text)
    sys.stdout.write(text)


def _run_restore(args, method):
    noisy = load_image(args.input)
    meta = _read_sidecar(args.input)
    peak = args.peak if args.peak is not None else meta.get("peak")
    kernel = args.kernel if args.kernel is not None else meta.get("kernel", "none")
    meta.update(peak=peak, kernel=kernel)
    overrides = {k: v for k, v in (("lambda0", args.lambda0), ("lambda_step", args.lambda_step),
                                   ("iters", args.iters)) if v is not None}
    betas = args.beta or []
    if method != "m-p4ip" and betas:
        overrides["beta"] = betas[0]
    denoisers = args.denoiser or ["nlm"]
    if peak is None and "lambda0" not in overrides and method != "anscombe":
        raise UsageError("no metadata sidecar: pass --peak or --lambda0")
    start = time.perf_counter()
    out, iters = restore(noisy, method, denoisers, peak, kernel, overrides,
                         inverse=args.inverse, mp_betas=betas if method == "m-p4ip" else None,
                         output=getattr(args, "output_kind", "v"))
    seconds = time.perf_counter() - start
    dest = _output_path(args, args.output)
    save_raster(out, dest)
    _emit_row(args, _report_row(args, method, denoisers, meta, out, iters, seconds))


def cmd_restore(args):
    _run_restore(args, args.method)


def cmd_baseline(args):
    _run_restore(args, "anscombe")


def cmd_eval(args):
    reference = load_image(args.reference)
    test = load_image(args.test)
    peak_max = args.peak_max
    if peak_max is None:
        peak_max = _read_sidecar(args.test).get("peak") or float(reference.max())
    value = psnr(reference, test, peak_max)
    print("inf" if math.isinf(value) else f"{value:.2f}")


def cmd_curve(args):
    offsets = args.v_minus_u or [anscombe_matching_offset() + i for i in (0, 3, 6, 9)]
    count = int(math.floor(args.y_max / args.step + 1e-9)) + 1
    y = np.arange(count) * args.step
    columns = [transform_curve(args.lam, off, y) for off in offsets]
    lines = ["y,anscombe," + ",".join(f"p4ip_vmu={off:.6g}" for off in offsets)]
    for i, yi in enumerate(y):
        values = [anscombe_forward(yi)] + [c[i] for c in columns]
        lines.append(f"{yi:.10g}," + ",".join(f"{v:.12g}" for v in values))
    text = "\n".join(lines) + "\n"
    if args.out:
        _output_path(args, args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_experiment(args):
    cfg = parse_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seed is not None:
        cfg.seeds = [args.seed]
    path = run_experiment(cfg, threads=args.threads)
    print(path)


# --------------------------------------------------------------------------

def _add_restore_options(p, with_method):
    p.add_argument("input", help="noisy raster or PGM (a <input>.json sidecar supplies peak/kernel)")
    p.add_argument("output", help="restored raster path")
    if with_method:
        p.add_argument("--method", choices=("p4ip", "p4ip-bin", "m-p4ip", "anscombe"), default="p4ip")
    p.add_argument("--denoiser", action="append",
                   help="gauss | nlm | tikhonov | ext:<spec-file>; repeat for m-p4ip")
    p.add_argument("--inverse", choices=("algebraic", "unbiased"), default="unbiased")
    p.add_argument("--peak", type=_positive)
    p.add_argument("--kernel", help="none | gaussian25 | cauchy15 | uniform9 | <kernel raster>")
    p.add_argument("--lambda0", type=_positive)
    p.add_argument("--lambda-step", type=float)
    p.add_argument("--beta", type=_positive, action="append", help="prior weight; repeat per prior")
    p.add_argument("--iters", type=int)
    p.add_argument("--output-kind", "--output", dest="output_kind", choices=("v", "x"), default="v",
                   help="return the denoised iterate v (default) or x")
    p.add_argument("--reference", help="clean reference for the PSNR column")
    p.add_argument("--report", help="append the CSV report row to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="p4ip", description="Plug-and-play ADMM for Poisson inverse problems.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, help="random seed (degrade; overrides experiment seeds)")
    parser.add_argument("--threads", type=int, help="experiment worker threads (default: cores)")
    parser.add_argument("--output-dir", help="directory for relative output paths")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="scale to peak, blur, add Poisson noise")
    p.add_argument("input", help="clean image (PGM/raster) or synthetic:<name>[:<size>]")
    p.add_argument("output")
    p.add_argument("--peak", type=_positive, required=True)
    p.add_argument("--kernel", default="none")
    p.add_argument("--reference-out", help="also write the scaled clean image here")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("restore", help="run P4IP (or a baseline) on a noisy image")
    _add_restore_options(p, with_method=True)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("baseline", help="Anscombe + Gaussian denoiser + inverse")
    _add_restore_options(p, with_method=False)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="PSNR of a test image against a reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--peak-max", type=_positive)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="CSV of the x-update transform vs the Anscombe transform")
    p.add_argument("--lambda", dest="lam", type=_positive, default=ANSCOMBE_LAMBDA)
    p.add_argument("--v-minus-u", type=float, action="append")
    p.add_argument("--y-max", type=float, default=20.0)
    p.add_argument("--step", type=_positive, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("experiment", help="run a degrade/restore/eval sweep from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"p4ip: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, DenoiserError, OptimizationError) as exc:
        print(f"p4ip: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError, ConfigError) as exc:
        print(f"p4ip: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
