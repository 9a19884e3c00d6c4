"""Command-line harness: casestudy, fit, experiment, diagnose, reference."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .diagnostics import khat_of, min_sample_size
from .divergences import WeightSet, get_divergence
from .families import FamilyParams, make_family
from .harness import ExperimentConfig, run_bbvi_experiment, run_case_study, write_csv
from .numkit import CovarianceSpec
from .optimize import OptimizerConfig, fit
from .reference import ReferenceConfig, reference_sampler
from .targets import make_correlated_gaussian, make_eight_schools, make_robust_regression

MODELS = ("correlated_gaussian", "robust_regression", "eight_schools_cp", "eight_schools_ncp")


def _parse_dims(text: str) -> list[int]:
    """'1:50' -> [1..50]; '2,5,10' -> [2, 5, 10]; '7' -> [7]."""
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",")]


def _make_target(args):
    if args.model == "correlated_gaussian":
        return make_correlated_gaussian(
            CovarianceSpec(kind="uniform", rho=args.rho, dim=args.dim)
        )
    if args.model == "robust_regression":
        target, _ = make_robust_regression(args.dim, args.n_data, rho=0.4, seed=args.seed)
        return target
    if args.model == "eight_schools_cp":
        return make_eight_schools("centered")
    if args.model == "eight_schools_ncp":
        return make_eight_schools("non_centered")
    raise SystemExit(f"unknown model {args.model!r}; choices: {MODELS}")


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def cmd_casestudy(args) -> int:
    cfg = ExperimentConfig(
        experiment="case_study",
        dims=_parse_dims(args.dims),
        rho=args.rho,
        cov_kind=args.kind,
        divergences=args.divergences.split(","),
        s_diag=args.draws,
        seeds=[args.seed],
        out=args.out,
    )
    rows = run_case_study(cfg)
    write_csv(rows, args.out, cfg)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_fit(args) -> int:
    target = _make_target(args)
    family = make_family(args.family, target.dim)
    spec = get_divergence(args.divergence)
    init = None
    if args.init:
        doc = json.loads(Path(args.init).read_text())
        init = np.asarray(doc["lambda"]["values"], dtype=float)
    config = OptimizerConfig(
        max_iters=args.max_iters, seed=args.seed, draws=args.draws, step_size=args.step_size
    )
    lam, trace = fit(target, family, spec, config, estimator=args.estimator, init_values=init)
    out = {
        "model": args.model,
        "divergence": args.divergence,
        "iter": trace.iterations,
        "termination": trace.termination,
        "best_smoothed_loss": _jsonable(float(trace.best_smoothed)),
        "lambda": FamilyParams(family, lam).to_dict(),
        "optimizer_state": trace.final_state,
    }
    Path(args.out).write_text(json.dumps(out, indent=2))
    print(f"{args.model} {args.divergence}: {trace.termination} after {trace.iterations} iters")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    rows = run_case_study(cfg) if cfg.experiment == "case_study" else run_bbvi_experiment(cfg)
    write_csv(rows, cfg.out, cfg)
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def cmd_diagnose(args) -> int:
    log_w = np.loadtxt(args.weights, ndmin=1)
    fit_ = khat_of("w", WeightSet(log_w=log_w))
    doc = {
        "khat": _jsonable(round(float(fit_.khat), 2)) if np.isfinite(fit_.khat) else _jsonable(float(fit_.khat)),
        "sigma": _jsonable(float(fit_.sigma)),
        "M": fit_.tail_count,
        "min_sample_size": _jsonable(min_sample_size(fit_.khat)),
    }
    print(json.dumps(doc))
    return 0


def cmd_reference(args) -> int:
    target = _make_target(args)
    config = ReferenceConfig(seed=args.seed, warmup=args.warmup, draws=args.draws)
    ref = reference_sampler(target, config)
    out = {
        "model": args.model,
        "mean": ref.mean.tolist(),
        "cov": ref.cov.tolist(),
        "rhat": ref.rhat.tolist(),
        "accept_rate": ref.accept_rate.tolist(),
        "reliable": ref.reliable,
    }
    Path(args.out).write_text(json.dumps(out, indent=2))
    print(f"reference moments for {args.model}: reliable={ref.reliable}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vibench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("casestudy", help="closed-form Gaussian case study sweep")
    p.add_argument("--dims", default="1:50")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--kind", default="uniform", choices=("uniform", "banded"))
    p.add_argument("--divergences", default="exclusive_kl,inclusive_kl")
    p.add_argument("--draws", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("fit", help="fit one variational approximation")
    p.add_argument("--model", required=True, choices=MODELS)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--n-data", type=int, default=100)
    p.add_argument("--family", default="mf_gaussian")
    p.add_argument("--divergence", default="exclusive_kl")
    p.add_argument("--estimator", default="auto")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default=None, help="warm-start checkpoint JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="run a config-driven sweep")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("diagnose", help="tail diagnostics for a file of log weights")
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("reference", help="HMC reference moments for a model")
    p.add_argument("--model", required=True, choices=MODELS)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--n-data", type=int, default=100)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--draws", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reference)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
