"""``specflow`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical fault
(eigensolver non-convergence or a replica exiting before ``t_end``),
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .equations import density_equation_residual, hilbert_transform, limit_equation_residual
from .laws import LimitLaw
from .matrix import EigenConvergenceError
from .models import build_model
from .runner import (
    EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, config_from_manifest, read_trajectory,
    run_experiment, with_overrides,
)

EDGE_CELLS = 5


def _grid(text: str, complex_grid: bool = False):
    """``min,max,count`` (plus ``,imag`` for complex grids)."""
    parts = [s for s in text.split(",") if s.strip()]
    want = (3, 4) if complex_grid else (3,)
    if len(parts) not in want:
        raise ConfigError(f"grid {text!r}: expected min,max,count" + (",imag" if complex_grid else ""))
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        imag = float(parts[3]) if len(parts) == 4 else 1.0
    except ValueError:
        raise ConfigError(f"grid {text!r}: non-numeric entry") from None
    if count < 1 or (count > 1 and not lo < hi):
        raise ConfigError(f"grid {text!r}: need count >= 1 and min < max")
    x = np.linspace(lo, hi, count)
    if complex_grid:
        if imag == 0:
            raise ConfigError("complex grid needs a nonzero imaginary offset")
        return x + 1j * imag
    return x


def _law(args) -> LimitLaw:
    fam = args.family
    if fam == "semicircle":
        return LimitLaw.semicircle()
    if fam == "marchenko_pastur":
        return LimitLaw.marchenko_pastur(args.c)
    if fam == "beta_marchenko_pastur":
        return LimitLaw.beta_marchenko_pastur(args.c, args.beta)
    raise ConfigError(f"unknown family {fam!r}")


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    finally:
        if path:
            fh.close()


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"specflow: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    cfg = config_from_manifest(path) if path.suffix == ".json" else parse_config(text)
    cfg = with_overrides(cfg, replicas=args.replicas, seed=args.seed, output_dir=args.out, workers=args.workers)
    return run_experiment(cfg)


def cmd_limit_law(args) -> int:
    law = _law(args)
    x = _grid(args.grid)
    g = np.atleast_1d(law.G(x + 1j * args.imag, args.t))
    rows = zip(x, law.density(x, args.t), law.cdf(x, args.t), g.real, g.imag)
    _write_rows(args.out, ["x", "density", "cdf", "ReG", "ImG"], rows)
    return EXIT_OK


def cmd_residual(args) -> int:
    try:
        meta, measures = read_trajectory(args.trajectory_dir)
    except (OSError, KeyError, ValueError) as exc:
        print(f"specflow: cannot read trajectory: {exc}", file=sys.stderr)
        return EXIT_IO
    model = build_model(meta["model"], **meta["params"])
    rep = limit_equation_residual(measures, model.limits, _grid(args.z_grid, complex_grid=True))
    out = Path(args.out) if args.out else Path(args.trajectory_dir) / "residual.csv"
    rep.to_csv(out)
    print(json.dumps({"max": rep.max, "mean": rep.mean, "csv": str(out)}, sort_keys=True))
    return EXIT_OK


def hilbert_check(law: LimitLaw, t: float = 1.0, dx: float = 1e-3, edge_cells: int = EDGE_CELLS) -> dict:
    """Density-equation residual of a closed-form law, plus ``H(p) = x/(2 pi t)`` for the semicircle."""
    lo, hi = law.support(t)
    pad = 0.25 * (hi - lo)
    x = np.arange(np.floor((lo - pad) / dx), np.ceil((hi + pad) / dx) + 1) * dx
    p = law.density(x, t)
    interior = (x > lo + edge_cells * dx) & (x < hi - edge_cells * dx)
    if law.family == "semicircle":
        alpha, b, g2, h2 = 0.5, (lambda x: 0.0 * x), (lambda x: 0.5 + 0.0 * x), (lambda x: 1.0 + 0.0 * x)
    else:
        beta = law.beta if law.beta is not None else 1.0
        alpha, b = 1.0, (lambda x: beta * law.c + 0.0 * x)
        g2, h2 = (lambda x: beta * x), (lambda x: 1.0 + 0.0 * x)
    res = density_equation_residual(p, x, alpha, t, b, g2, h2)
    out = {"family": law.label, "t": t, "dx": dx, "density_residual_max_interior": float(np.max(res[interior]))}
    if law.family == "semicircle":
        inner = np.abs(x) <= 0.9 * hi
        h = hilbert_transform(p, dx, x)
        out["hilbert_max_error"] = float(np.max(np.abs(h - x / (2 * np.pi * t))[inner]))
    return out


def cmd_hilbert_check(args) -> int:
    print(json.dumps(hilbert_check(_law(args), args.t, args.dx), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config (or re-run a manifest.json)")
    run.add_argument("config")
    run.add_argument("--replicas", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    def law_args(p):
        p.add_argument("family", choices=["semicircle", "marchenko_pastur", "beta_marchenko_pastur"])
        p.add_argument("--t", type=float, default=1.0)
        p.add_argument("--c", type=float, default=1.0)
        p.add_argument("--beta", type=float, default=1.0)

    law = sub.add_parser("limit-law", help="tabulate density, CDF and G of a limit law")
    law_args(law)
    law.add_argument("--grid", required=True, help="min,max,count")
    law.add_argument("--imag", type=float, default=1e-9, help="Im z at which G is tabulated")
    law.add_argument("--out")
    law.set_defaults(func=cmd_limit_law)

    res = sub.add_parser("residual", help="limit-equation residual of a saved trajectory")
    res.add_argument("trajectory_dir")
    res.add_argument("--z-grid", default="-3,3,13,1", help="min,max,count,imag")
    res.add_argument("--out")
    res.set_defaults(func=cmd_residual)

    hil = sub.add_parser("hilbert-check", help="Hilbert-transform density checks of a limit law")
    law_args(hil)
    hil.add_argument("--dx", type=float, default=1e-3)
    hil.set_defaults(func=cmd_hilbert_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"specflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EigenConvergenceError as exc:
        print(f"specflow: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"specflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"specflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
