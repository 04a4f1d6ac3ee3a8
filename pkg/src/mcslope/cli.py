"""Command-line front end.

Subcommands: ``fit`` (penalized fit on a CSV dataset), ``simulate`` (one
generate -> fit -> risk-report cycle), ``scaling`` (replicated sweep over an
n-grid), ``rademacher`` (Monte-Carlo complexity of a penalty ball).

Every command materializes its full configuration (file keys, flag
overrides, defaults) and echoes it to ``resolved_config.txt`` in the output
directory; re-running a command from its echo reproduces the CSV outputs
byte-for-byte (wall_ms timing columns aside). Exit codes: 0 success,
2 invalid input, 3 convergence shortfall.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation, plots
from .core import (
    ConvergenceError,
    DoubleRowSparse,
    Gaussian,
    GlobalRowSparse,
    InvalidInputError,
    LowRank,
    Rademacher,
    StudentT,
    SyntheticSpec,
    load_dataset_csv,
    rng_stream,
    save_coefficients,
)
from .evaluation import PenaltyRecipe, aggregate_rows, rate_slope, scaling_experiment
from .penalties import WeightConfig
from .runconfig import REQUIRED, format_kv, parse_kv_file, resolve
from .solver import SolverConfig, fit

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOCONV = 3

_PENALTIES = (
    "group-slope",
    "sparse-group-slope",
    "nuclear",
    "group-lasso",
    "sparse-group-lasso",
)

_PENALTY_SCHEMA = {
    "penalty.family": ("str", REQUIRED),
    "penalty.c0": ("float", 1.0),
    "penalty.c1": ("float", 1.0),
    "penalty.c2": ("float", 1.0),
    "penalty.c_nuclear": ("float", 1.0),
    "penalty.lambda_scale": ("float", 1.0),
}

_SOLVER_SCHEMA = {
    "solver.max_iter": ("int", 5000),
    "solver.grad_map_tol": ("float", 1e-7),
    "solver.backtrack_factor": ("float", 0.5),
    "solver.initial_step": ("float_or_auto", "auto"),
    "solver.enforce_centering": ("bool", False),
    "solver.prox_tol": ("float", 1e-9),
}

_SYNTH_SCHEMA = {
    "synthetic.d": ("int", REQUIRED),
    "synthetic.L": ("int", REQUIRED),
    "synthetic.structure": ("str", REQUIRED),
    "synthetic.d0": ("int", None),
    "synthetic.m": ("int_list", None),
    "synthetic.r0": ("int", None),
    "synthetic.signal_scale": ("float", 1.0),
    "synthetic.delta": ("float", 0.05),
    "synthetic.feature_law": ("str", "gaussian"),
    "synthetic.dof": ("float", None),
}

_EVAL_SCHEMA = {
    "eval.test_size": ("int", 20000),
    "eval.mc_samples": ("int", 20000),
}


def _schema_for(command: str) -> dict:
    schema = {"command": ("str", command)}
    if command == "fit":
        schema.update(
            {
                "fit.dataset": ("str", REQUIRED),
                "run.out_dir": ("str", REQUIRED),
            }
        )
        schema.update(_PENALTY_SCHEMA)
        schema.update(_SOLVER_SCHEMA)
    elif command == "simulate":
        schema.update(
            {
                "run.out_dir": ("str", REQUIRED),
                "run.seed": ("int", 0),
                "synthetic.n": ("int", REQUIRED),
            }
        )
        schema.update(_SYNTH_SCHEMA)
        schema.update(_PENALTY_SCHEMA)
        schema.update(_SOLVER_SCHEMA)
        schema.update(_EVAL_SCHEMA)
    elif command == "scaling":
        schema.update(
            {
                "run.out_dir": ("str", REQUIRED),
                "run.seed": ("int", 0),
                "run.replicates": ("int", 1),
                "run.threads": ("int", 1),
                "grid.n": ("int_list", REQUIRED),
                "penalties": ("str", REQUIRED),
            }
        )
        schema.update(_SYNTH_SCHEMA)
        # family comes from the `penalties` list instead
        schema.update({k: v for k, v in _PENALTY_SCHEMA.items() if k != "penalty.family"})
        schema.update(_SOLVER_SCHEMA)
        schema.update(_EVAL_SCHEMA)
    elif command == "rademacher":
        schema.update(
            {
                "run.out_dir": ("str", REQUIRED),
                "run.seed": ("int", 0),
                "rademacher.n": ("int", REQUIRED),
                "rademacher.d": ("int", REQUIRED),
                "rademacher.L": ("int", REQUIRED),
                "rademacher.num_draws": ("int", 200),
                "rademacher.feature_law": ("str", "gaussian"),
                "rademacher.dof": ("float", None),
            }
        )
        schema.update(_PENALTY_SCHEMA)
    else:  # pragma: no cover - argparse restricts the choices
        raise InvalidInputError(f"unknown command {command!r}")
    return schema


# ---------------------------------------------------------------------------
# Config -> domain objects
# ---------------------------------------------------------------------------


def _weight_config(cfg: dict) -> WeightConfig:
    return WeightConfig(
        c0=cfg["penalty.c0"],
        c1=cfg["penalty.c1"],
        c2=cfg["penalty.c2"],
        c_nuclear=cfg["penalty.c_nuclear"],
    )


def _recipe(cfg: dict, family: str | None = None) -> PenaltyRecipe:
    fam = family if family is not None else cfg["penalty.family"]
    return PenaltyRecipe(
        family=fam,
        weights=_weight_config(cfg),
        lambda_scale=cfg["penalty.lambda_scale"],
    )


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        max_iter=cfg["solver.max_iter"],
        grad_map_tol=cfg["solver.grad_map_tol"],
        backtrack_factor=cfg["solver.backtrack_factor"],
        initial_step=cfg["solver.initial_step"],
        enforce_centering=cfg["solver.enforce_centering"],
        prox_tol=cfg["solver.prox_tol"],
    )


def _feature_law(name: str, dof: float | None):
    if name == "gaussian":
        return Gaussian()
    if name == "rademacher":
        return Rademacher()
    if name == "student_t":
        if dof is None:
            raise InvalidInputError("student_t feature law needs synthetic.dof")
        return StudentT(dof)
    raise InvalidInputError(
        f"unknown feature law {name!r}; choose gaussian, rademacher or student_t"
    )


def _structure(cfg: dict):
    kind = cfg["synthetic.structure"]
    if kind == "global_row_sparse":
        if cfg["synthetic.d0"] is None:
            raise InvalidInputError("global_row_sparse needs synthetic.d0")
        return GlobalRowSparse(cfg["synthetic.d0"])
    if kind == "double_row_sparse":
        if cfg["synthetic.d0"] is None or cfg["synthetic.m"] is None:
            raise InvalidInputError("double_row_sparse needs synthetic.d0 and synthetic.m")
        m = cfg["synthetic.m"]
        if len(m) == 1:
            m = m * cfg["synthetic.d0"]
        return DoubleRowSparse(cfg["synthetic.d0"], tuple(m))
    if kind == "low_rank":
        if cfg["synthetic.r0"] is None:
            raise InvalidInputError("low_rank needs synthetic.r0")
        return LowRank(cfg["synthetic.r0"])
    raise InvalidInputError(
        f"unknown structure {kind!r}; choose global_row_sparse, double_row_sparse or low_rank"
    )


def _synthetic_spec(cfg: dict, n: int, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        n=n,
        d=cfg["synthetic.d"],
        L=cfg["synthetic.L"],
        structure=_structure(cfg),
        signal_scale=cfg["synthetic.signal_scale"],
        delta=cfg["synthetic.delta"],
        feature_law=_feature_law(cfg["synthetic.feature_law"], cfg["synthetic.dof"]),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _prepare_out_dir(cfg: dict, echo: dict) -> Path:
    out = Path(cfg["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(format_kv(echo), encoding="utf-8")
    return out


def _support_stats(B: np.ndarray) -> tuple[int, list[int], int]:
    nz = np.abs(B) > 1e-12
    row_counts = nz.sum(axis=1)
    support_rows = int((row_counts > 0).sum())
    per_row = [int(c) for c in row_counts[row_counts > 0]]
    s = np.linalg.svd(B, compute_uv=False)
    rank = int((s > max(1e-10, 1e-8 * (s[0] if s.size else 0.0))).sum())
    return support_rows, per_row, rank


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_fit(raw: dict, overrides: dict) -> int:
    cfg, echo = resolve(raw, _schema_for("fit"), overrides)
    if cfg["penalty.family"] not in _PENALTIES:
        raise InvalidInputError(
            f"unknown penalty {cfg['penalty.family']!r}; choose from {_PENALTIES}"
        )
    data = load_dataset_csv(cfg["fit.dataset"])
    out = _prepare_out_dir(cfg, echo)
    spec = _recipe(cfg).materialize(data)
    result = fit(data, spec, _solver_config(cfg))

    save_coefficients(result.coefficients, out / "coefficients.csv", penalty=spec)
    support_rows, per_row, rank = _support_stats(result.coefficients.values)
    objective = float(result.objective_trace[-1])
    _write_csv(
        out / "fit_summary.csv",
        (
            "objective",
            "iterations",
            "converged",
            "fixed_point_residual",
            "support_rows",
            "max_row_nonzeros",
            "total_nonzeros",
            "numerical_rank",
        ),
        [
            (
                objective,
                result.iterations,
                result.converged,
                result.fixed_point_residual,
                support_rows,
                max(per_row) if per_row else 0,
                sum(per_row),
                rank,
            )
        ],
    )
    print(f"objective:       {objective!r}")
    print(f"iterations:      {result.iterations}")
    print(f"converged:       {result.converged}")
    print(f"support rows:    {support_rows}")
    print(f"row supports:    {per_row if per_row else '[]'}")
    print(f"numerical rank:  {rank}")
    return EXIT_OK if result.converged else EXIT_NOCONV


def _cmd_simulate(raw: dict, overrides: dict) -> int:
    cfg, echo = resolve(raw, _schema_for("simulate"), overrides)
    if cfg["penalty.family"] not in _PENALTIES:
        raise InvalidInputError(
            f"unknown penalty {cfg['penalty.family']!r}; choose from {_PENALTIES}"
        )
    spec = _synthetic_spec(cfg, cfg["synthetic.n"], cfg["run.seed"])
    out = _prepare_out_dir(cfg, echo)

    data, B_true = evaluation.generate(spec)
    pen_spec = _recipe(cfg).materialize(data)
    result = fit(data, pen_spec, _solver_config(cfg))
    report = evaluation.risk_report(
        result.coefficients,
        B_true,
        spec,
        test_size=cfg["eval.test_size"],
        mc_samples=cfg["eval.mc_samples"],
        train_data=data,
    )

    save_coefficients(result.coefficients, out / "coefficients.csv", penalty=pen_spec)
    _write_csv(
        out / "risk_report.csv",
        (
            "train_err",
            "test_err",
            "bayes_risk",
            "excess_risk",
            "kl_risk",
            "iterations",
            "converged",
            "objective",
        ),
        [
            (
                report.train_error,
                report.test_error,
                report.bayes_risk,
                report.excess_risk,
                report.kl_risk,
                result.iterations,
                result.converged,
                float(result.objective_trace[-1]),
            )
        ],
    )
    _write_csv(out / "margin_cdf.csv", ("h", "cdf"), list(report.margin_cdf))
    plots.save_margin_figure(report.margin_cdf, out / "margin_cdf.png")
    print(f"test error:  {report.test_error!r}")
    print(f"bayes risk:  {report.bayes_risk!r}")
    print(f"excess risk: {report.excess_risk!r}")
    print(f"kl risk:     {report.kl_risk!r}")
    return EXIT_OK if result.converged else EXIT_NOCONV


def _cmd_scaling(raw: dict, overrides: dict) -> int:
    cfg, echo = resolve(raw, _schema_for("scaling"), overrides)
    families = [f.strip() for f in cfg["penalties"].split(",") if f.strip()]
    for fam in families:
        if fam not in _PENALTIES:
            raise InvalidInputError(f"unknown penalty {fam!r}; choose from {_PENALTIES}")
    grid = [_synthetic_spec(cfg, n, 0) for n in cfg["grid.n"]]
    recipes = [_recipe(cfg, family=fam) for fam in families]
    out = _prepare_out_dir(cfg, echo)

    rows = scaling_experiment(
        grid,
        recipes,
        replicates=cfg["run.replicates"],
        master_seed=cfg["run.seed"],
        threads=cfg["run.threads"],
        solver_cfg=_solver_config(cfg),
        test_size=cfg["eval.test_size"],
        mc_samples=cfg["eval.mc_samples"],
    )
    aggs = aggregate_rows(rows)

    _write_csv(
        out / "runs.csv",
        evaluation.RUN_COLUMNS,
        [[getattr(r, c) for c in evaluation.RUN_COLUMNS] for r in rows],
    )
    _write_csv(
        out / "aggregate.csv",
        evaluation.AGGREGATE_COLUMNS,
        [[getattr(a, c) for c in evaluation.AGGREGATE_COLUMNS] for a in aggs],
    )

    slopes: dict[str, float] = {}
    plot_rows = []
    for pen in sorted({a.penalty for a in aggs}):
        sub = sorted((a for a in aggs if a.penalty == pen), key=lambda a: a.n)
        ns = np.array([a.n for a in sub], dtype=float)
        means = np.array([a.mean_excess_risk for a in sub])
        slopes[pen] = rate_slope(ns, means)
        for a in sub:
            ok = math.isfinite(a.mean_excess_risk) and a.mean_excess_risk > 0
            plot_rows.append(
                (
                    pen,
                    a.n,
                    a.mean_excess_risk,
                    math.log10(a.n),
                    math.log10(a.mean_excess_risk) if ok else float("nan"),
                    slopes[pen],
                )
            )
    _write_csv(
        out / "plot_data.csv",
        ("penalty", "n", "mean_excess_risk", "log10_n", "log10_mean_excess_risk", "slope"),
        plot_rows,
    )
    plots.save_rate_figure(aggs, slopes, out / "rate_plot.png")

    total = len(rows)
    converged = sum(1 for r in rows if r.converged)
    frac = converged / total if total else 1.0
    for pen, slope in sorted(slopes.items()):
        print(f"slope[{pen}]: {slope!r}")
    print(f"converged fits: {converged}/{total}")
    return EXIT_OK if frac >= 0.95 else EXIT_NOCONV


def _cmd_rademacher(raw: dict, overrides: dict) -> int:
    cfg, echo = resolve(raw, _schema_for("rademacher"), overrides)
    if cfg["penalty.family"] not in _PENALTIES:
        raise InvalidInputError(
            f"unknown penalty {cfg['penalty.family']!r}; choose from {_PENALTIES}"
        )
    n, d, L = cfg["rademacher.n"], cfg["rademacher.d"], cfg["rademacher.L"]
    if n < 1 or d < 1 or L < 1:
        raise InvalidInputError("rademacher.n/d/L must be >= 1")
    out = _prepare_out_dir(cfg, echo)

    law = _feature_law(cfg["rademacher.feature_law"], cfg["rademacher.dof"])
    # Feature draws reuse the synthetic generator's law machinery via a
    # minimal spec (structure/signal fields are irrelevant for features).
    probe = SyntheticSpec(
        n=n,
        d=d,
        L=max(L, 2),
        structure=GlobalRowSparse(1),
        signal_scale=0.0,
        delta=0.05,
        feature_law=law,
        seed=cfg["run.seed"],
    )
    X = evaluation._draw_features(probe, rng_stream(cfg["run.seed"], 10), n)
    spec = _recipe(cfg).materialize_dims(d, L, n, features=X)
    mean, se, draws = evaluation.rademacher_mc(
        spec, X, L, cfg["rademacher.num_draws"], seed=cfg["run.seed"], return_draws=True
    )
    bound = 7.0 / 720.0 * math.sqrt(n)
    _write_csv(
        out / "rademacher.csv",
        ("n", "d", "L", "penalty", "num_draws", "estimate", "stderr", "bound", "ratio_to_bound"),
        [
            (
                n,
                d,
                L,
                cfg["penalty.family"],
                cfg["rademacher.num_draws"],
                mean,
                se,
                bound,
                mean / bound,
            )
        ],
    )
    _write_csv(
        out / "rademacher_draws.csv",
        ("draw", "value"),
        list(enumerate(draws.tolist())),
    )
    plots.save_rademacher_figure(draws, bound, out / "rademacher_hist.png")
    print(f"estimate:       {mean!r}")
    print(f"stderr:         {se!r}")
    print(f"ratio to bound: {mean / bound!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcslope",
        description="Multiclass sparse multinomial logistic classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_dataset=False, with_config_positional=False):
        if with_dataset:
            p.add_argument("dataset", nargs="?", help="CSV dataset (header y,x1..xd)")
        if with_config_positional:
            p.add_argument("config", nargs="?", help="key-value config file")
        p.add_argument("--config", dest="config_flag", metavar="PATH", help="key-value config file")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--threads", type=int, help="parallel workers (scaling)")
        p.add_argument("--penalty", choices=_PENALTIES, help="penalty family")
        p.add_argument("--c0", type=float, help="group-Slope weight constant")
        p.add_argument("--c1", type=float, help="sparse-group lambda constant")
        p.add_argument("--c2", type=float, help="sparse-group kappa constant")
        p.add_argument("--c-nuclear", type=float, help="nuclear lambda constant")
        p.add_argument("--lambda-scale", type=float, help="global weight multiplier")

    add_common(sub.add_parser("fit", help="fit a penalty on a CSV dataset"), with_dataset=True)
    add_common(sub.add_parser("simulate", help="one generate/fit/report cycle"), with_config_positional=True)
    add_common(sub.add_parser("scaling", help="replicated sweep over an n-grid"), with_config_positional=True)
    add_common(sub.add_parser("rademacher", help="Monte-Carlo penalty-ball complexity"), with_config_positional=True)
    return parser


def _collect(args: argparse.Namespace) -> tuple[dict, dict]:
    config_path = getattr(args, "config", None) or args.config_flag
    raw = parse_kv_file(config_path) if config_path else {}
    overrides: dict[str, str] = {"command": args.command}
    if getattr(args, "dataset", None):
        overrides["fit.dataset"] = args.dataset
    if args.out_dir is not None:
        overrides["run.out_dir"] = args.out_dir
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.threads is not None:
        overrides["run.threads"] = str(args.threads)
    if args.penalty is not None:
        overrides["penalty.family"] = args.penalty
    for flag, key in (
        ("c0", "penalty.c0"),
        ("c1", "penalty.c1"),
        ("c2", "penalty.c2"),
        ("c_nuclear", "penalty.c_nuclear"),
        ("lambda_scale", "penalty.lambda_scale"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = repr(val)
    if raw.get("command", args.command) != args.command:
        raise InvalidInputError(
            f"config declares command = {raw['command']!r}, invoked as {args.command!r}"
        )
    return raw, overrides


_DISPATCH = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "scaling": _cmd_scaling,
    "rademacher": _cmd_rademacher,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        raw, overrides = _collect(args)
        return _DISPATCH[args.command](raw, overrides)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"error: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
