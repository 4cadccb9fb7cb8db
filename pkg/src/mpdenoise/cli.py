"""Command-line entry point: ``mpdenoise {spectra,denoise,simulate,bench}``.

Exit codes: 0 success, 2 usage/config, 3 I/O, 4 numeric/domain.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from . import spectral
from .bench import __version__, _jsonable, run_experiment
from .config import PRESETS, ExperimentConfig, load_config, load_preset
from .denoise import detect_q, rie_denoise, stepwise_svd, tsvd_denoise
from .errors import ConfigError, DomainError, MatrixFileError
from .linalg import full_svd
from .matrixio import load_matrix, store_matrix
from .synth import assemble

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4
OUTPUT_ENV = "MPDENOISE_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _default_out(sub):
    return os.path.join(os.environ.get(OUTPUT_ENV, "mpdenoise-out"), sub)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir, command, argv, config, seed, started, outputs):
    manifest = {
        "tool": "mpdenoise",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "started_at": started,
        "finished_at": _now(),
        "outputs": [
            {"path": os.path.relpath(p, outdir), "bytes": os.path.getsize(p), "sha256": _sha256(p)}
            for p in outputs
        ],
    }
    path = os.path.join(outdir, "manifest.json")
    _write_json(path, manifest)
    return path


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _sigma_arg(text):
    return "auto" if text == "auto" else _positive_float(text)


# ---------------------------------------------------------------------------
# spectra


def spectra_rows(c, d_list=(), grid_max=None, grid_points=0):
    e = spectral.edges(c)
    dc = spectral.critical_strength(c)
    rows = [{"kind": "edges", "c": c, "lambda_minus": e.lambda_minus, "lambda_plus": e.lambda_plus,
             "critical_d": dc}]
    for d in d_list:
        row = {"kind": "spike", "c": c, "d": d, "supercritical": d > dc, "p": spectral.p_of_d(d, c)}
        if d >= dc:
            row["a1"] = spectral.a1(d, c)
            row["a2"] = spectral.a2(d, c)
            row["T_at_p"] = spectral.t_real(row["p"], c) if d > dc else math.sqrt(c)
        rows.append(row)
    if grid_points:
        hi = grid_max if grid_max is not None else 10 * e.lambda_plus
        if hi <= e.lambda_plus:
            raise UsageError("--grid-max must exceed lambda_+")
        xs = np.linspace(e.lambda_plus, hi, grid_points + 1)[1:]
        for x in xs:
            row = {"kind": "T", "c": c, "x": float(x), "T": spectral.t_real(x, c)}
            if d_list:
                row["T_product"] = spectral.t_product(x, sorted(d_list, reverse=True), c)
            rows.append(row)
    return rows


_SPECTRA_COLS = ["kind", "c", "lambda_minus", "lambda_plus", "critical_d", "d", "supercritical",
                 "p", "a1", "a2", "T_at_p", "x", "T", "T_product"]


def cmd_spectra(args, argv):
    if not (math.isfinite(args.c) and args.c > 0):
        raise UsageError(f"--c must be positive, got {args.c}")
    if any(not (math.isfinite(d) and d > 0) for d in args.d):
        raise UsageError("--d values must be positive")
    rows = spectra_rows(args.c, args.d, args.grid_max, args.grid_points)
    if args.format == "json":
        text = json.dumps(_jsonable(rows), indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_SPECTRA_COLS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# denoise


def denoise_matrix(A, method, sigma=1.0, tau_sep=3.0, delta1=0.25, gate="fixed",
                   tsvd_mode="rank", tsvd_value=None):
    """Run one estimator and return ``(S_hat, diagnostics dict)``."""
    M, N = A.shape
    c = N / M
    diag = {"method": method, "M": M, "N": N, "c": c}
    if method == "stepwise":
        res = stepwise_svd(A, sigma=sigma, delta1=delta1, tau_sep=tau_sep, gate=gate)
        diag.update({
            "sigma": res.sigma,
            "q": res.initial.q,
            "k_plus_hat": res.initial.k_plus_hat,
            "sigma_hat": res.initial.sigma_hat,
            "mu_head": res.initial.mu[:10],
            "d_hat": res.d_hat,
            "supports": {"left": res.left_supports, "right": res.right_supports},
            "steps": [
                {
                    "step": s.step, "t1": s.t1, "d_hat": s.d_hat, "skipped": s.skipped, "reason": s.reason,
                    "left": None if s.left is None else {"method": s.left.method, "score": s.left.separation_score,
                                                         "threshold": s.left.threshold, "size": int(s.left.indices.size)},
                    "right": None if s.right is None else {"method": s.right.method, "score": s.right.separation_score,
                                                           "threshold": s.right.threshold, "size": int(s.right.indices.size)},
                }
                for s in res.steps
            ],
        })
        return res.S_hat, diag
    if method == "rie":
        res = rie_denoise(A, sigma=sigma)
        k = res.q - 1
        diag.update({
            "sigma": res.sigma,
            "q": res.q,
            "k_plus_hat": k,
            "sigma_hat": None if res.diagnostics.sigma_hat is None else res.diagnostics.sigma_hat * res.sigma,
            "mu_head": (res.diagnostics.mu[:10] * res.sigma ** 2),
            "d_hat": res.d_hat[:k],
            "eta_hat": res.eta_hat[:k],
        })
        return res.S_hat, diag
    svd = full_svd(A)
    sig = 1.0 if sigma == "auto" else sigma
    d = detect_q(svd, c, N, sig)
    if tsvd_value is None:
        tsvd_value = d.q - 1 if tsvd_mode == "rank" else 0.0
    S_hat = tsvd_denoise(A, tsvd_mode, tsvd_value)
    diag.update({"sigma": sig, "q": d.q, "k_plus_hat": d.k_plus_hat, "sigma_hat": d.sigma_hat,
                 "mu_head": d.mu[:10], "tsvd_mode": tsvd_mode, "tsvd_value": tsvd_value})
    return S_hat, diag


def cmd_denoise(args, argv):
    started = _now()
    A = load_matrix(args.input)
    if not np.all(np.isfinite(A)):
        raise DomainError("input matrix has non-finite entries")
    S_hat, diag = denoise_matrix(A, args.method, args.sigma, args.tau_sep, args.delta1, args.gate,
                                 args.tsvd_mode, args.tsvd_value)
    out = args.out or _default_out("denoise")
    os.makedirs(out, exist_ok=True)
    mat_path = os.path.join(out, "S_hat.csv" if args.format == "csv" else "S_hat.mpdn")
    store_matrix(mat_path, S_hat)
    diag_path = os.path.join(out, "diagnostics.json")
    _write_json(diag_path, diag)
    opts = {k: getattr(args, k) for k in ("input", "method", "sigma", "tau_sep", "delta1", "gate",
                                          "tsvd_mode", "tsvd_value", "format")}
    _write_manifest(out, "denoise", argv, opts, None, started, [mat_path, diag_path])
    print(json.dumps({"q": diag["q"], "outputs": [mat_path, diag_path]}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / bench


def _resolve_config(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise UsageError("give either a config file or --preset, not both")
    if args.preset:
        return load_preset(args.preset, getattr(args, "trials", None))
    if not args.config:
        raise UsageError("a config file or --preset is required")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {args.config}") from exc
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    return cfg


def cmd_simulate(args, argv):
    started = _now()
    cfg = _resolve_config(args)
    inst = assemble(cfg.signal_spec(), cfg.noise_spec(), args.trial)
    out = args.out or _default_out("simulate")
    os.makedirs(out, exist_ok=True)
    ext = "csv" if args.format == "csv" else "mpdn"
    paths = []
    for name, mat in (("S", inst.S), ("X", inst.X), ("S_tilde", inst.S_tilde)):
        p = os.path.join(out, f"{name}.{ext}")
        store_matrix(p, mat)
        paths.append(p)
    truth = {
        "M": cfg.M, "N": cfg.N, "c": cfg.c, "seed": cfg.seed, "trial": args.trial,
        "d_values": inst.D, "sigma": inst.sigma,
        "U": inst.U.T, "V": inst.V.T,
        "left_supports": inst.left_supports, "right_supports": inst.right_supports,
    }
    tp = os.path.join(out, "truth.json")
    _write_json(tp, truth)
    paths.append(tp)
    _write_manifest(out, "simulate", argv, cfg.to_dict(), cfg.seed, started, paths)
    print(json.dumps({"outputs": paths}))
    return EXIT_OK


def cmd_bench(args, argv):
    started = _now()
    cfg = _resolve_config(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    report = run_experiment(cfg, jobs=args.jobs)
    out = args.out or _default_out(f"bench-{cfg.name}")
    paths = report.write(out)
    _write_manifest(out, "bench", argv, cfg.to_dict(), cfg.seed, started, paths)
    summary = {"experiment": cfg.experiment, "outputs": paths}
    if "rate_fits" in report.derived:
        summary["slopes"] = {k: v["slope"] for k, v in report.derived["rate_fits"].items()}
    print(json.dumps(_jsonable(summary)))
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpdenoise", description="Low-rank matrix denoising under Marchenko-Pastur noise.")
    p.add_argument("--version", action="version", version=f"mpdenoise {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("spectra", help="tabulate edges, p(d), a1(d), a2(d) and the master function")
    s.add_argument("--c", type=float, required=True, help="aspect ratio N/M")
    s.add_argument("--d", type=float, nargs="*", default=[], help="signal strengths")
    s.add_argument("--grid-points", type=int, default=0, help="number of master-function samples right of the edge")
    s.add_argument("--grid-max", type=float, default=None)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out", default=None, help="write here instead of stdout")

    d = sub.add_parser("denoise", help="denoise a matrix file")
    d.add_argument("input", help="matrix file (.mpdn binary or .csv)")
    d.add_argument("--method", choices=("stepwise", "rie", "tsvd"), default="rie")
    d.add_argument("--sigma", type=_sigma_arg, default=1.0, help="noise level or 'auto'")
    d.add_argument("--tau-sep", type=_positive_float, default=3.0)
    d.add_argument("--delta1", type=float, default=0.25)
    d.add_argument("--gate", choices=("fixed", "recheck"), default="fixed")
    d.add_argument("--tsvd-mode", choices=("rank", "hard", "soft"), default="rank")
    d.add_argument("--tsvd-value", type=float, default=None,
                   help="rank or threshold; defaults to q-1 for rank mode")
    d.add_argument("--format", choices=("mpdn", "csv"), default="mpdn")
    d.add_argument("--out", default=None)

    for name, helptext in (("simulate", "draw a synthetic instance"), ("bench", "run a Monte Carlo experiment")):
        b = sub.add_parser(name, help=helptext)
        b.add_argument("config", nargs="?", default=None, help="JSON config file")
        b.add_argument("--preset", choices=PRESETS, default=None)
        b.add_argument("--out", default=None)
        if name == "simulate":
            b.add_argument("--trial", type=int, default=0)
            b.add_argument("--format", choices=("mpdn", "csv"), default="mpdn")
        else:
            b.add_argument("--trials", type=int, default=None)
            b.add_argument("--jobs", type=int, default=1)
    return p


_COMMANDS = {"spectra": cmd_spectra, "denoise": cmd_denoise, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required: spectra, denoise, simulate, bench")
        return _COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"mpdenoise: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"mpdenoise: config error: {exc}", file=sys.stderr)
        for f in exc.fields:
            print(f"  offending field: {f}", file=sys.stderr)
        return EXIT_USAGE
    except MatrixFileError as exc:
        print(f"mpdenoise: {getattr(exc, 'code', 'E_IO')}: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"mpdenoise: E_IO: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"mpdenoise: numeric error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
