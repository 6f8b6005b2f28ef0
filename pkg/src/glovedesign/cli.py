"""Command-line front end: ``glovedesign {prior,design,evaluate,curve,reconstruct}``.

Every JSON output embeds a ``config`` block echoing the options that
determine it, and identical flags (including ``--seed``) produce identical
bytes. Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .continuous import design_continuous_flow, optimal_continuous_noiseless, optimal_continuous_noisy
from .discrete import DEFAULT_BUDGET, design_discrete_flow, exhaustive_select
from .errors import GloveDesignError, ShapeError, ValidationError
from .estimator import MeasurementDesign, NoiseModel, mve_reconstruct
from .flow import FlowOptions
from .harness import compare_designs, dumps_json, paired_summary, v1_curve
from .hybrid import design_hybrid
from .prior import compute_prior, load_prior, read_dataset_csv, save_prior

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
# Options that never change results and are therefore left out of the config echo.
_NOT_ECHOED = {"out", "csv", "threads", "func"}


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _matrix_json(H) -> dict:
    H = np.asarray(H, dtype=float)
    return {"rows": int(H.shape[0]), "cols": int(H.shape[1]), "data": [float(v) for v in H.ravel()]}


def _matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = np.asarray(obj["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid matrix record: {exc}") from None
    if data.size != rows * cols:
        raise ShapeError(f"matrix record has {data.size} entries, expected {rows}x{cols}")
    return data.reshape(rows, cols)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {path}: {exc}") from None


def _read_matrix_csv(path) -> np.ndarray:
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            out.append([float(c) for c in row])
        except ValueError:
            if lineno == 1:  # header row
                continue
            raise ValidationError(f"invalid data: {path} line {lineno}: non-numeric cell") from None
    if not out or len({len(r) for r in out}) != 1:
        raise ShapeError(f"{path}: rows must be non-empty and of equal width")
    return np.array(out)


def _load_design(path) -> tuple[MeasurementDesign, dict]:
    obj = _read_json(path)
    H = _matrix_from_json(obj.get("H", {}))
    mode = obj.get("mode", "continuous")
    split = tuple(obj["split"]) if "split" in obj else None
    return MeasurementDesign(H, mode=mode, split=split), obj


def _flow_options(args) -> FlowOptions:
    return FlowOptions(starts=args.starts, seed=args.seed, k0=args.k0, k_growth=args.k_growth,
                       max_iter=args.max_iter, tol_grad=args.tol, threads=args.threads)


def _noise(args, m: int) -> np.ndarray:
    if getattr(args, "noise_cov", None):
        R = _read_matrix_csv(args.noise_cov)
        if R.shape != (m, m):
            raise ShapeError(f"noise covariance is {R.shape[0]}x{R.shape[1]}, expected {m}x{m}")
        return R
    if args.noise_std < 0:
        raise ValidationError("--noise-std must be non-negative")
    return args.noise_std ** 2 * np.eye(m)


def _need_seed(args, what: str) -> None:
    if args.seed is None:
        raise ValidationError(f"--seed is required for {what}")


def _resolve_design_config(args) -> tuple[int, int, int]:
    """Check mode/solver/count consistency; return (m, m_c, m_d)."""
    mode, solver = args.mode, args.solver
    if mode == "hybrid":
        if args.mc is None or args.md is None:
            raise ValidationError("config: hybrid mode needs --mc and --md")
        m = args.m if args.m is not None else args.mc + args.md
        if args.mc + args.md != m:
            raise ValidationError(f"config: --mc + --md = {args.mc + args.md} must equal --m = {m}")
        if solver not in (None, "flow"):
            raise ValidationError("config: hybrid mode supports only the flow solver")
        return m, args.mc, args.md
    if args.m is None:
        raise ValidationError("config: --m is required")
    if solver == "closed-form" and mode != "continuous":
        raise ValidationError("config: solver closed-form requires mode continuous")
    if solver == "exhaustive" and mode != "discrete":
        raise ValidationError("config: solver exhaustive requires mode discrete")
    return args.m, (args.m if mode == "continuous" else 0), (args.m if mode == "discrete" else 0)


def cmd_prior(args) -> int:
    data = read_dataset_csv(args.input, units=args.units)
    prior = compute_prior(data)
    save_prior(prior, args.out, extra={"config": _config(args)})
    top = ", ".join(f"{v:.6g}" for v in prior.spectrum[:5])
    print(f"n = {prior.n}")
    print(f"N = {data.N}")
    print(f"top singular values: {top}")
    return EXIT_OK


def cmd_design(args) -> int:
    prior = load_prior(args.prior)
    m, m_c, m_d = _resolve_design_config(args)
    solver = args.solver or {"continuous": "closed-form", "discrete": "exhaustive"}.get(args.mode, "flow")
    args.solver = solver
    R = _noise(args, m)
    if solver == "flow":
        _need_seed(args, "the flow solver")
    opts = _flow_options(args) if solver == "flow" else None
    diag = {"iterations": 0, "starts": args.starts if solver == "flow" else 0, "k_final": None,
            "constraint_violation": 0.0, "rounding_residual": None}
    out = {"mode": args.mode, "m": m}
    if args.mode == "continuous":
        if solver == "closed-form":
            sol = (optimal_continuous_noiseless(prior, m) if not np.any(R)
                   else optimal_continuous_noisy(prior, NoiseModel.from_cov(R), m))
        else:
            sol = design_continuous_flow(prior, R, m, opts)
        design, v1, res = sol.design, sol.v1_achieved, sol.result
        out["v1_closed_form"] = sol.v1_closed_form
    elif args.mode == "discrete":
        sel = (exhaustive_select(prior, R, m, args.budget) if solver == "exhaustive"
               else design_discrete_flow(prior, R, m, opts))
        design, v1, res = sel.design, sel.v1, sel.result
        out["selected_indices"] = list(sel.indices)
        diag["rounding_residual"] = sel.residual if solver == "flow" else 0.0
    else:
        sol = design_hybrid(prior, R, m_c, m_d, opts)
        design, v1, res = sol.design, sol.v1, sol.result
        out["split"] = [m_c, m_d]
        out["selected_indices"] = [c + 1 for c in design.selected_columns]
        diag["rounding_residual"] = sol.discrete_residual
    if res is not None:
        diag.update(iterations=res.iterations, k_final=res.k_final, start_index=res.start_index,
                    status=res.status, constraint_violation=res.max_violation)
    out["H"] = _matrix_json(design.matrix)
    out["v1"] = float(v1)
    out["diagnostics"] = diag
    out["config"] = _config(args)
    _emit(dumps_json(out), args.out)
    return EXIT_OK


def _parse_indices(text: str, n: int) -> MeasurementDesign:
    try:
        idx = [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise ValidationError(f"--indices expects comma-separated integers, got {text!r}") from None
    if not idx or min(idx) < 1 or max(idx) > n or len(set(idx)) != len(idx):
        raise ValidationError(f"--indices {text!r}: need distinct indices in [1, {n}]")
    return MeasurementDesign.selection([i - 1 for i in idx], n)


def cmd_evaluate(args) -> int:
    prior = load_prior(args.prior)
    _need_seed(args, "evaluate")
    designs, ids = [], []
    for path in args.design or []:
        d, _ = _load_design(path)
        if d.n != prior.n:
            raise ShapeError(f"{path}: design has n={d.n}, prior has n={prior.n}")
        designs.append(d)
        ids.append(Path(path).stem)
    for text in args.indices or []:
        designs.append(_parse_indices(text, prior.n))
        ids.append("indices:" + text.replace(" ", ""))
    if not designs:
        raise ValidationError("evaluate needs at least one --design or --indices")
    reports = compare_designs(prior, designs, args.noise_std, args.trials, args.seed, ids)
    pairs = [paired_summary(reports[i], reports[j])
             for i in range(len(reports)) for j in range(i + 1, len(reports))]
    out = {"reports": [r.to_json() for r in reports], "paired": pairs, "config": _config(args)}
    _emit(dumps_json(out), args.out)
    if args.csv:
        for i, r in enumerate(reports):
            Path(f"{args.csv}_{i + 1}.csv").write_text(r.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_curve(args) -> int:
    prior = load_prior(args.prior)
    modes = [s.strip() for s in args.modes.split(",") if s.strip()]
    if modes == ["all"]:
        modes = ["continuous", "hybrid", "discrete"]
    m_max = args.m_max if args.m_max is not None else prior.n - 1
    if "hybrid" in modes or args.solver == "flow":
        _need_seed(args, "flow-based curves")
    opts = _flow_options(args) if args.seed is not None else FlowOptions()
    noise = args.noise_std if args.noise_std > 0 else None
    rep = v1_curve(prior, noise, modes, range(args.m_min, m_max + 1), opts,
                   solver=args.solver, budget=args.budget, m_c=args.mc)
    out = rep.to_json()
    if not args.reduction:
        out.pop("reduction", None)
    out["config"] = _config(args)
    _emit(dumps_json(out), args.out)
    if args.csv:
        Path(args.csv).write_text(rep.to_csv(reduction=args.reduction), encoding="utf-8")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    prior = load_prior(args.prior)
    design, obj = _load_design(args.design)
    Y = _read_matrix_csv(args.measurements)
    if Y.shape[1] != design.m:
        raise ShapeError(f"measurement rows have width {Y.shape[1]}, design has m={design.m}")
    std = args.noise_std
    if std is None:
        std = float(obj.get("config", {}).get("noise_std") or 0.0)
    X = mve_reconstruct(Y, design, NoiseModel.isotropic(design.m, std), prior)
    lines = [",".join(prior.labels)] + [",".join(repr(float(v)) for v in row) for row in X]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _add_flow_flags(p) -> None:
    p.add_argument("--starts", type=int, default=20, help="random restarts (default 20)")
    p.add_argument("--seed", type=int, default=None, help="seed; required for stochastic solvers")
    p.add_argument("--k0", type=float, default=0.2, help="initial penalty weight (default 0.2)")
    p.add_argument("--k-growth", type=float, default=1.5, help="penalty growth per stage (default 1.5)")
    p.add_argument("--max-iter", type=int, default=5000, help="iteration budget per start")
    p.add_argument("--tol", type=float, default=None, help="gradient-norm tolerance")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for restarts (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glovedesign",
                                     description="Optimal sensor placement for sensing gloves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prior", help="estimate a prior from a pose CSV")
    p.add_argument("--in", dest="input", required=True, help="CSV with a header of DoF labels")
    p.add_argument("--units", default="degrees", choices=("degrees", "radians", "dimensionless"))
    p.add_argument("--out", required=True, help="prior JSON to write")
    p.set_defaults(func=cmd_prior)

    p = sub.add_parser("design", help="compute a measurement design")
    p.add_argument("--prior", required=True)
    p.add_argument("--mode", required=True, choices=("continuous", "discrete", "hybrid"))
    p.add_argument("--m", type=int)
    p.add_argument("--mc", type=int)
    p.add_argument("--md", type=int)
    p.add_argument("--noise-std", type=float, default=0.0, help="per-sensor noise std (degrees)")
    p.add_argument("--noise-cov", default=None, help="CSV with a full m x m noise covariance")
    p.add_argument("--solver", choices=("closed-form", "exhaustive", "flow"))
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="max subsets for exhaustive search")
    _add_flow_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="Monte Carlo reconstruction errors of designs")
    p.add_argument("--prior", required=True)
    p.add_argument("--design", action="append", help="design JSON (repeatable)")
    p.add_argument("--indices", action="append", help="1-based selection baseline, e.g. 3,6,8,11,14")
    p.add_argument("--noise-std", type=float, default=7.0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None, help="prefix for per-design CSV tables")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curve", help="V1 against the number of sensors")
    p.add_argument("--prior", required=True)
    p.add_argument("--modes", default="continuous", help="comma list or 'all'")
    p.add_argument("--m-min", type=int, default=1)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--mc", type=int, default=1, help="continuous rows in hybrid mode")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--solver", default="auto", choices=("auto", "flow"))
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--reduction", action="store_true", help="include the continuous reduction column")
    _add_flow_flags(p)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("reconstruct", help="reconstruct poses from measurements")
    p.add_argument("--prior", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--measurements", required=True, help="CSV, one measurement row per line")
    p.add_argument("--noise-std", type=float, default=None,
                   help="noise std assumed by the reconstructor (default: from the design file)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GloveDesignError as exc:
        print(f"glovedesign: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"glovedesign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
