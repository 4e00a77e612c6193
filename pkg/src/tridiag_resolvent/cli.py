"""Command-line entry point: probe, scan, pade, moments, oracle.

Exit codes: 0 decided or pass, 1 usage/config/IO error, 2 numerically
indeterminate, degenerate, ill-conditioned or singular.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .jfraction import (
    DegenerateMomentsError,
    MomentSequence,
    convergents,
    convergents_csv_text,
    geometric_subsequence,
    moments_to_jfraction,
    read_moments_csv,
    remainder_diagnostics,
)
from .recurrence import evaluate_QP
from .resolvent import (
    GammaIllConditioned,
    SingularTruncationError,
    classify_point,
    estimate_gamma,
    oracle_comparison,
)
from .scan import csv_text, pgm_text, scan

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

PROBE_REPORT = "probe_report.json"
SCAN_CSV = "scan.csv"
SCAN_META = "scan_params.json"
PADE_CSV = "pade.csv"
JFRACTION_CSV = "jfraction.csv"
ORACLE_REPORT = "oracle_report.json"
DEFAULT_PADE_N = 64
DEFAULT_ORACLE_N = 64


def jsonable(obj):
    """Convert numpy scalars, complex numbers and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write every file to a temporary name first, then rename them all into place."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc.strerror or exc}") from None
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=out_dir)
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for tmp, final in staged:
            os.replace(tmp, final)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise ConfigError(f"cannot write outputs in {out_dir}: {exc.strerror or exc}") from None
    return [final for _, final in staged]


def _cplx(z: complex) -> list[float]:
    return [z.real, z.imag]


def cmd_probe(cfg: RunConfig) -> int:
    model, lam, params = cfg.require_model(), cfg.require_lambda(), cfg.params
    result = classify_point(model, lam, params)
    trace = evaluate_QP(model, lam, params.n_max)
    table = convergents(trace)
    report = {
        "command": "probe",
        "lambda": _cplx(lam),
        "label": result.label,
        "evidence": result.evidence,
        "convergents": [{"n": n, "pi": None if v is None else _cplx(v)} for n, v in table.entries],
        "params_echo": cfg.echo(),
    }
    gamma = result.evidence.get("gamma")
    phi = complex(gamma["re"], gamma["im"]) if gamma else None
    if phi is None:
        # the fast path skips the remainder; estimate it here for the report
        try:
            phi = estimate_gamma(trace, threshold=params.gamma_threshold).gamma
        except GammaIllConditioned:
            phi = None
    if phi is not None:
        diag = remainder_diagnostics(trace, phi)
        report["remainder_diagnostics"] = {"phi": _cplx(phi), "rate": diag.rate,
                                           "rms_residual": diag.rms_residual,
                                           "weighted_remainders": diag.values}
    else:
        report["remainder_diagnostics"] = None
    written = write_atomic(cfg.out, {PROBE_REPORT: json_text(report)})
    print(f"{result.label} at lambda = {lam}  ({written[0]})")
    return EXIT_NUMERIC if result.label == "indeterminate" else EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    model, params = cfg.require_model(), cfg.params
    if cfg.region is None:
        raise ConfigError("scan needs a region {re_min, re_max, im_min, im_max, nx, ny}")
    result = scan(model, cfg.region, params, workers=cfg.workers)
    files = {SCAN_CSV: csv_text(result)}
    for ch in cfg.channels:
        files[f"scan_{ch}.pgm"] = pgm_text(result, ch)
    counts = {lab: result.labels.count(lab) for lab in sorted(set(result.labels))}
    meta = {"command": "scan", "region": vars(cfg.region), "classify_params": params.to_dict(),
            "label_counts": counts, "files": sorted(files), "params_echo": cfg.echo()}
    meta["params_echo"].pop("workers")  # worker count must not change any output byte
    files[SCAN_META] = json_text(meta)
    write_atomic(cfg.out, files)
    print(f"scanned {len(result.labels)} points: {counts}  ({cfg.out})")
    return EXIT_OK


def cmd_pade(cfg: RunConfig) -> int:
    model, lam = cfg.require_model(), cfg.require_lambda()
    N = cfg.n_max or DEFAULT_PADE_N
    trace = evaluate_QP(model, lam, N)
    if cfg.phi is not None:
        phi, source = cfg.phi, "supplied"
    else:
        if N < 32:
            raise ConfigError("estimating phi needs n_max >= 32; or pass --phi RE IM")
        try:
            phi = estimate_gamma(trace, threshold=cfg.params.gamma_threshold).gamma
        except GammaIllConditioned as exc:
            print(f"error: phi estimation is ill-conditioned at lambda = {lam}: {exc}",
                  file=sys.stderr)
            return EXIT_NUMERIC
        source = "estimated"
    table = convergents(trace)
    sub = geometric_subsequence(table, phi)
    footer = [
        f"lambda = {lam.real!r} {lam.imag!r}",
        f"phi = {phi.real!r} {phi.imag!r} ({source})",
        f"verdict = {sub.verdict}",
        f"rho = {sub.rate!r}",
        f"subsequence_length = {len(sub.indices)}",
        "params_echo = " + json.dumps(jsonable(cfg.echo()), sort_keys=True),
    ]
    write_atomic(cfg.out, {PADE_CSV: convergents_csv_text(table, phi, footer)})
    print(f"geometric subsequence: {sub.verdict}, rho = {sub.rate:.6g}  ({cfg.out / PADE_CSV})")
    return EXIT_OK


def _jfraction_csv(a: np.ndarray, b: np.ndarray, footer: list[str]) -> str:
    # row n carries b_n (n < M) and a_n (n >= 1); absent entries are left empty
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "b_re", "b_im", "a_re", "a_im"])
    M = len(a)
    for n in range(M + 1):
        bn = [repr(float(b[n].real)), repr(float(b[n].imag))] if n < M else ["", ""]
        an = [repr(float(a[n - 1].real)), repr(float(a[n - 1].imag))] if n >= 1 else ["", ""]
        w.writerow([n, *bn, *an])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def cmd_moments(cfg: RunConfig) -> int:
    if cfg.moments_file is not None:
        try:
            moments = read_moments_csv(cfg.moments_file)
        except OSError as exc:
            raise ConfigError(f"cannot read {cfg.moments_file}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif cfg.moments is not None:
        try:
            moments = MomentSequence(tuple(cfg.moments))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError("moments needs moments_file or an inline moments array")
    try:
        a, b = moments_to_jfraction(moments, high_precision=cfg.high_precision)
    except DegenerateMomentsError as exc:
        print(f"error: degenerate moments at level {exc.level}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    footer = [f"M = {moments.levels}",
              "b_M is not determined by 2M+1 moments and is omitted",
              "params_echo = " + json.dumps(jsonable(cfg.echo()), sort_keys=True)]
    write_atomic(cfg.out, {JFRACTION_CSV: _jfraction_csv(a, b, footer)})
    print(f"recovered M = {moments.levels} levels  ({cfg.out / JFRACTION_CSV})")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    model, lam = cfg.require_model(), cfg.require_lambda()
    N = cfg.n_max or DEFAULT_ORACLE_N
    try:
        report = oracle_comparison(model, lam, N, cfg.block, tol=cfg.tolerance)
    except SingularTruncationError as exc:
        print(f"error: the {N} x {N} finite section is singular at lambda = {lam}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    report = {"command": "oracle", **report, "params_echo": cfg.echo()}
    write_atomic(cfg.out, {ORACLE_REPORT: json_text(report)})
    verdict = "pass" if report["pass"] else "fail"
    print(f"oracle {verdict}: max relative error {report['max_rel_error']:.3g}  "
          f"({cfg.out / ORACLE_REPORT})")
    return EXIT_OK if report["pass"] else EXIT_NUMERIC


COMMANDS = {"probe": cmd_probe, "scan": cmd_scan, "pade": cmd_pade,
            "moments": cmd_moments, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tridiag-resolvent",
        description="Resolvent/spectrum diagnostics for tridiagonal operators.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "probe": "classify one point and write a JSON report",
        "scan": "classify a grid of points; write CSV and PGM heatmaps",
        "pade": "tabulate convergents and their errors at one point",
        "moments": "recover continued-fraction coefficients from moments",
        "oracle": "compare closed-form resolvent entries with a finite-section inverse",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run config")
        p.add_argument("--lambda", dest="lam", nargs=2, type=float, metavar=("RE", "IM"))
        p.add_argument("--n-max", type=int, metavar="K", help="recurrence length")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--workers", type=int, metavar="W", help="worker processes (scan)")
        p.add_argument("--high-precision", action="store_true", default=None,
                       help="use extended precision where supported (moments)")
        if name == "pade":
            p.add_argument("--phi", nargs=2, type=float, metavar=("RE", "IM"),
                           help="use this value of phi instead of estimating it")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    overrides = {
        "lambda": args.lam, "n_max": args.n_max, "out": args.out,
        "workers": args.workers, "high_precision": args.high_precision,
        "phi": getattr(args, "phi", None),
    }
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
