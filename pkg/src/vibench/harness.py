"""Configuration-driven experiment runner with stable CSV output.

Every sweep cell gets its own deterministic random stream derived from the
master seed and a stable cell identifier, failures are isolated to their row,
and all experiments share one union CSV schema so a single plotting pipeline
can consume everything.
"""

from __future__ import annotations

import csv
import json
import subprocess
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .diagnostics import WEIGHT_FUNCTIONS, khat_of, min_sample_size, psis_smooth
from .divergences import (
    DivergenceSpec,
    WeightSet,
    analytic_divergence,
    divergence_label,
    get_divergence,
    mc_loss,
)
from .estimators import estimate_moments, relative_error
from .families import Family, make_family
from .gradients import rp_gradient, score_gradient, tail_adaptive_gradient
from .numkit import CovarianceSpec
from .optimize import (
    OptimizerConfig,
    default_estimator,
    deterministic_minimize,
    fit,
    mean_field_gaussian_objective,
    validate_combination,
)
from .reference import ReferenceConfig, ReferenceMoments, reference_sampler
from .targets import (
    TargetModel,
    TargetTruth,
    make_correlated_gaussian,
    make_eight_schools,
    make_robust_regression,
)

CSV_COLUMNS = [
    "kind",
    "experiment",
    "target",
    "dim",
    "rho",
    "family",
    "divergence",
    "estimate_of",
    "estimator",
    "seed",
    "khat_w",
    "khat_w2",
    "khat_sqrt_w",
    "khat_log_w",
    "khat_w_log_w",
    "min_ss_w",
    "min_ss_w2",
    "min_ss_sqrt_w",
    "min_ss_log_w",
    "min_ss_w_log_w",
    "div_estimate",
    "div_analytic",
    "grad_var_mean",
    "grad_var_first",
    "mean_err_plain_q",
    "cov_err_plain_q",
    "mean_err_snis",
    "cov_err_snis",
    "mean_err_psis",
    "cov_err_psis",
    "khat_used",
    "iterations",
    "termination",
    "wall_time_s",
    "bin_center",
    "density_q",
    "density_p",
    "failure",
]

_KHAT_COLS = {fn: f"khat_{fn}" for fn in WEIGHT_FUNCTIONS}
_MINSS_COLS = {fn: f"min_ss_{fn}" for fn in WEIGHT_FUNCTIONS}


@dataclass
class ExperimentConfig:
    experiment: str = "case_study"  # case_study | robust_regression | eight_schools
    dims: list = field(default_factory=lambda: list(range(1, 51)))
    rho: float = 0.5
    cov_kind: str = "uniform"  # correlation structure of Gaussian targets
    divergences: list = field(default_factory=lambda: ["exclusive_kl", "inclusive_kl"])
    families: list = field(default_factory=lambda: ["mf_gaussian"])
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    draws_per_gradient: dict = field(default_factory=dict)  # divergence -> draws
    s_diag: int = 4000
    n_data: int = 100  # robust regression observations
    data_rho: float = 0.4
    seeds: list = field(default_factory=lambda: [0])
    out: str = "results.csv"

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        opt = doc.pop("optimizer", {})
        cfg = cls(**doc)
        cfg.optimizer = OptimizerConfig(**opt) if isinstance(opt, dict) else opt
        return cfg

    def resolved(self) -> dict:
        doc = asdict(self)
        return doc

    def validate(self) -> None:
        """Reject unsupported (family, divergence, estimator) triples up front."""
        for fam_name in self.families:
            dim = max(self.dims) if self.dims else 2
            fam = make_family(fam_name, max(dim, 2))
            for div_name in self.divergences:
                spec = get_divergence(div_name)
                validate_combination(spec, fam, default_estimator(spec, fam))


def cell_rng_seed(master: int, cell_id: str) -> np.random.SeedSequence:
    """Documented split-seed scheme: per-cell stream = (master, crc32(cell id))."""
    return np.random.SeedSequence([int(master), zlib.crc32(cell_id.encode())])


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if np.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(rows: list[dict], out_path, config: Optional[ExperimentConfig] = None) -> None:
    """Union-schema CSV (RFC-4180 quoting) plus a JSON sidecar with the config."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
    sidecar = {
        "version": __version__,
        "git": _git_stamp(),
        "config": config.resolved() if config is not None else None,
    }
    out_path.with_suffix(out_path.suffix + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, default=str)
    )


def _git_stamp() -> str:
    try:
        return (
            subprocess.run(
                ["git", "rev-parse", "--short", "HEAD"],
                capture_output=True,
                text=True,
                timeout=5,
            ).stdout.strip()
            or ""
        )
    except Exception:
        return ""


def _khat_columns(ws: WeightSet) -> dict:
    out = {}
    for fn in WEIGHT_FUNCTIONS:
        fit_ = khat_of(fn, ws)
        out[_KHAT_COLS[fn]] = fit_.khat
        out[_MINSS_COLS[fn]] = min_sample_size(fit_.khat) if not np.isnan(fit_.khat) else None
    return out


def _grad_variance(spec, family, values, target, draws):
    estimator = default_estimator(spec, family)
    if estimator == "score":
        est = score_gradient(spec, family, values, target, draws)
    elif estimator == "tail_adaptive":
        est = tail_adaptive_gradient(family, values, target, draws)
    else:
        est = rp_gradient(spec, family, values, target, draws)
    return estimator, est


def _feasible_start(objective, dim: int) -> np.ndarray:
    """Widen the starting scales until the objective is finite.

    The moment-based divergences (chi^2, alpha > 1) only exist when q is wide
    enough relative to the target; BFGS needs a finite starting value.
    """
    for log_scale in np.arange(0.0, 12.0, 0.5):
        x0 = np.concatenate([np.zeros(dim), np.full(dim, log_scale)])
        if np.isfinite(objective(x0)):
            return x0
    return np.zeros(2 * dim)


def run_case_study(cfg: ExperimentConfig) -> list[dict]:
    """Best-case-scenario study: mean-field Gaussian vs correlated Gaussian.

    Per dimension and divergence the optimal approximation comes from
    deterministic minimization of the closed-form divergence; diagnostics,
    divergence estimates, gradient variances, and distance-from-mode profiles
    are then computed from fresh draws.
    """
    master = cfg.seeds[0] if cfg.seeds else 0
    rows: list[dict] = []
    specs = [get_divergence(name) for name in cfg.divergences]
    for dim in cfg.dims:
        try:
            target = make_correlated_gaussian(
                CovarianceSpec(kind=cfg.cov_kind, rho=cfg.rho, dim=dim)
            )
        except Exception as err:
            for spec in specs:
                rows.append(
                    {
                        "kind": "result",
                        "experiment": "case_study",
                        "target": f"correlated_gaussian_{cfg.cov_kind}_d{dim}_rho{cfg.rho:g}",
                        "dim": dim,
                        "rho": cfg.rho,
                        "family": "mf_gaussian",
                        "divergence": divergence_label(spec),
                        "seed": master,
                        "failure": f"{type(err).__name__}: {err}",
                    }
                )
            continue
        truth = target.truth
        for spec in specs:
            label = divergence_label(spec)
            base_row = {
                "kind": "result",
                "experiment": "case_study",
                "target": target.name,
                "dim": dim,
                "rho": cfg.rho,
                "family": "mf_gaussian",
                "divergence": label,
                "seed": master,
            }
            t0 = time.perf_counter()
            try:
                objective, jac = mean_field_gaussian_objective(spec, truth.mean, truth.cov)
                lam, _ = deterministic_minimize(objective, _feasible_start(objective, dim), grad=jac)
                family = make_family("mf_gaussian", dim)
                seed_seq = cell_rng_seed(master, f"case_study/{dim}/{label}")
                rng = np.random.default_rng(seed_seq)
                draws = family.draw_base(rng, cfg.s_diag)
                thetas, logq = family.transform(lam, draws.eps)
                logp = np.atleast_1d(target.log_joint(thetas))
                ws = WeightSet(log_w=logp - logq, thetas=thetas)
                khat_cols = _khat_columns(ws)
                q_cov = np.diag(np.exp(2.0 * lam[dim:]))

                grad_draws = family.draw_base(rng, cfg.s_diag)
                estimator, grad_est = _grad_variance(spec, family, lam, target, grad_draws)
                var = grad_est.per_coordinate_variance
                for est_spec in specs:
                    est_label = divergence_label(est_spec)
                    row = dict(base_row)
                    row.update(khat_cols)
                    row["estimate_of"] = est_label
                    row["div_estimate"] = mc_loss(est_spec, ws).value
                    row["div_analytic"] = analytic_divergence(
                        est_spec, truth.mean, truth.cov, lam[:dim], q_cov
                    )
                    if est_label == label:
                        row["estimator"] = f"{estimator}"
                        row["grad_var_mean"] = float(np.mean(var))
                        row["grad_var_first"] = float(var[0])
                        row["wall_time_s"] = time.perf_counter() - t0
                    rows.append(row)

                # distance-from-mode profile (mode = 0 for these targets)
                p_draws = rng.multivariate_normal(truth.mean, truth.cov, size=cfg.s_diag)
                dist_q = np.linalg.norm(thetas, axis=1)
                dist_p = np.linalg.norm(p_draws, axis=1)
                lo = 0.0
                hi = float(max(dist_q.max(), dist_p.max()))
                edges = np.linspace(lo, hi, 51)
                hq, _ = np.histogram(dist_q, bins=edges, density=True)
                hp, _ = np.histogram(dist_p, bins=edges, density=True)
                centers = 0.5 * (edges[:-1] + edges[1:])
                for center, dq, dp in zip(centers, hq, hp):
                    rows.append(
                        {
                            **base_row,
                            "kind": "distance_profile",
                            "bin_center": float(center),
                            "density_q": float(dq),
                            "density_p": float(dp),
                        }
                    )
            except Exception as err:  # cell isolation: record, keep sweeping
                rows.append({**base_row, "failure": f"{type(err).__name__}: {err}"})
    return rows


def _make_targets(cfg: ExperimentConfig) -> list[TargetModel]:
    if cfg.experiment == "robust_regression":
        out = []
        for dim in cfg.dims:
            target, _ = make_robust_regression(
                dim, cfg.n_data, rho=cfg.data_rho, seed=cfg.seeds[0] if cfg.seeds else 0
            )
            out.append(target)
        return out
    if cfg.experiment == "eight_schools":
        return [make_eight_schools("centered"), make_eight_schools("non_centered")]
    if cfg.experiment == "case_study":
        return [
            make_correlated_gaussian(CovarianceSpec(kind=cfg.cov_kind, rho=cfg.rho, dim=d))
            for d in cfg.dims
        ]
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def _reference_truth(target: TargetModel, seed: int) -> tuple[TargetTruth, bool]:
    if target.truth is not None:
        return target.truth, True
    ref: ReferenceMoments = reference_sampler(
        target, ReferenceConfig(seed=seed, warmup=1000, draws=5000)
    )
    truth = TargetTruth(mean=ref.mean, cov=ref.cov, log_normalizer=np.nan)
    return truth, ref.reliable


def run_bbvi_experiment(cfg: ExperimentConfig) -> list[dict]:
    """Full fit -> diagnose -> estimate pipeline over the configured sweep.

    Exclusive KL is always fitted first per (target, family, seed); its
    solution warm-starts every other divergence, mirroring the optimization
    protocol used throughout.
    """
    cfg.validate()
    rows: list[dict] = []
    div_names = list(cfg.divergences)
    if "exclusive_kl" in div_names:
        div_names.remove("exclusive_kl")
    div_names = ["exclusive_kl"] + div_names
    t_max_default = 15_000 if cfg.experiment == "eight_schools" else 10_000

    truth_cache: dict[str, tuple[TargetTruth, bool]] = {}
    for target in _make_targets(cfg):
        master = cfg.seeds[0] if cfg.seeds else 0
        if target.name not in truth_cache:
            truth_cache[target.name] = _reference_truth(target, master)
        truth, truth_ok = truth_cache[target.name]
        for fam_name in cfg.families:
            for seed in cfg.seeds:
                warm = None
                for div_name in div_names:
                    spec = get_divergence(div_name)
                    label = divergence_label(spec)
                    row = {
                        "kind": "result",
                        "experiment": cfg.experiment,
                        "target": target.name,
                        "dim": target.dim,
                        "rho": cfg.rho,
                        "family": fam_name,
                        "divergence": label,
                        "estimate_of": label,
                        "seed": seed,
                    }
                    t0 = time.perf_counter()
                    try:
                        family = make_family(fam_name, target.dim)
                        estimator = default_estimator(spec, family)
                        seed_seq = cell_rng_seed(
                            seed, f"{cfg.experiment}/{target.name}/{fam_name}/{label}"
                        )
                        child = seed_seq.generate_state(1)[0]
                        opt = OptimizerConfig(
                            **{
                                **asdict(cfg.optimizer),
                                "seed": int(child),
                                "max_iters": cfg.optimizer.max_iters or t_max_default,
                                "draws": cfg.draws_per_gradient.get(div_name, cfg.optimizer.draws),
                            }
                        )
                        init = warm if div_name != "exclusive_kl" else None
                        lam, trace = fit(
                            target, family, spec, opt, estimator=estimator, init_values=init
                        )
                        if div_name == "exclusive_kl":
                            warm = lam.copy()
                        rng = np.random.default_rng(seed_seq.spawn(1)[0])
                        draws = family.draw_base(rng, cfg.s_diag)
                        thetas, logq = family.transform(lam, draws.eps)
                        logp = np.atleast_1d(target.log_joint(thetas))
                        ws = WeightSet(log_w=logp - logq, thetas=thetas)
                        row.update(_khat_columns(ws))
                        row["div_estimate"] = mc_loss(spec, ws).value if spec.name != "tail_adaptive" else None
                        row["estimator"] = estimator
                        moment_seed = int(seed_seq.generate_state(2)[1])
                        for method in ("plain_q", "snis", "psis"):
                            est = estimate_moments(
                                family, lam, target, cfg.s_diag, method=method, seed=moment_seed
                            )
                            err = relative_error(est, truth)
                            row[f"mean_err_{method}"] = err.mean_err
                            row[f"cov_err_{method}"] = err.cov_err
                            if method == "psis":
                                row["khat_used"] = est.khat
                        row["iterations"] = trace.iterations
                        row["termination"] = trace.termination
                        row["wall_time_s"] = time.perf_counter() - t0
                        if not truth_ok:
                            row["failure"] = "reference moments unreliable (rhat > 1.05)"
                    except Exception as err:
                        row["failure"] = f"{type(err).__name__}: {err}"
                        row["termination"] = "Failed"
                        row["wall_time_s"] = time.perf_counter() - t0
                    rows.append(row)
    return rows
