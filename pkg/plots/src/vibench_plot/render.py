"""Figure rendering from harness CSV files.

The renderer reads nothing but the CSV and the figure spec. Output is
deterministic: rows are sorted before plotting, colors are assigned by a fixed
table (falling back to a stable hash-free cycle), and the PNG metadata is
pinned so identical inputs give identical images.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = (
    "khat_vs_dim",
    "divergence_estimate_vs_dim",
    "min_sample_size_vs_dim",
    "gradient_variance_vs_dim",
    "relative_error_panel",
    "distance_from_mode_profile",
)

WEIGHT_FN_COLUMNS = {
    "khat_vs_dim": ["khat_w", "khat_w2", "khat_sqrt_w", "khat_log_w", "khat_w_log_w"],
    "min_sample_size_vs_dim": [
        "min_ss_w",
        "min_ss_w2",
        "min_ss_sqrt_w",
        "min_ss_log_w",
        "min_ss_w_log_w",
    ],
}

FN_LABELS = {
    "khat_w": "w",
    "khat_w2": "w^2",
    "khat_sqrt_w": "sqrt(w)",
    "khat_log_w": "log w",
    "khat_w_log_w": "w log w",
    "min_ss_w": "w",
    "min_ss_w2": "w^2",
    "min_ss_sqrt_w": "sqrt(w)",
    "min_ss_log_w": "log w",
    "min_ss_w_log_w": "w log w",
}

# fixed color assignments keep figures comparable across runs and inputs
DIVERGENCE_COLORS = {
    "exclusive_kl": "#1f77b4",
    "inclusive_kl": "#d62728",
    "chi_sq": "#2ca02c",
    "tail_adaptive": "#9467bd",
}
FN_COLORS = {
    "w": "#1f77b4",
    "w^2": "#d62728",
    "sqrt(w)": "#2ca02c",
    "log w": "#9467bd",
    "w log w": "#8c564b",
}
METHOD_COLORS = {"plain_q": "#7f7f7f", "snis": "#1f77b4", "psis": "#d62728"}
_FALLBACK = ("#ff7f0e", "#17becf", "#bcbd22", "#e377c2", "#8c564b")

PNG_METADATA = {"Software": "vibench-plot"}


class MissingColumnsError(ValueError):
    def __init__(self, columns):
        self.columns = sorted(columns)
        super().__init__(f"CSV is missing required columns: {', '.join(self.columns)}")


class EmptySelectionError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    filters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choices: {KINDS}")


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = reader.fieldnames or []
    return rows, header


def _matches(row, key, wanted):
    cell = row.get(key, "")
    if cell == wanted:
        return True
    try:
        return float(cell) == float(wanted)
    except (TypeError, ValueError):
        return False


def _as_float(cell):
    if cell is None or cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        return None


def _require_columns(header, needed):
    missing = [c for c in needed if c not in header]
    if missing:
        raise MissingColumnsError(missing)


def _color_for(table, key, index):
    return table.get(key, _FALLBACK[index % len(_FALLBACK)])


def _select(rows, filters):
    out = rows
    for key, wanted in sorted(filters.items()):
        out = [r for r in out if _matches(r, key, wanted)]
    return out


def _main_rows(rows):
    """One row per (target, dim, divergence, seed): the rows carrying an estimator."""
    return [r for r in rows if r.get("estimator")]


def _series_by(rows, group_key, x_key, y_key):
    series = {}
    for row in rows:
        x = _as_float(row.get(x_key))
        y = _as_float(row.get(y_key))
        if x is None or y is None:
            continue
        series.setdefault(row.get(group_key, ""), []).append((x, y))
    return {k: sorted(v) for k, v in sorted(series.items())}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path. Raises on missing columns
    or an empty post-filter selection."""
    rows, header = _read_rows(spec.csv_path)
    _require_columns(header, spec.filters.keys())
    selected = _select(rows, spec.filters)
    if not selected:
        raise EmptySelectionError(
            f"no rows left after filtering {spec.filters!r} ({len(rows)} rows read)"
        )

    fig = _FIGURES[spec.kind](selected, header)
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return str(out)


def _fig_khat(selected, header, columns_key="khat_vs_dim", ylabel="Pareto khat", logy=False):
    cols = WEIGHT_FN_COLUMNS[columns_key]
    _require_columns(header, ["dim", "divergence"] + cols)
    rows = _main_rows(selected) or selected
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    divergences = sorted({r.get("divergence", "") for r in rows})
    for i, col in enumerate(cols):
        label_fn = FN_LABELS[col]
        for div in divergences:
            pts = _series_by(
                [r for r in rows if r.get("divergence") == div], "divergence", "dim", col
            ).get(div, [])
            if not pts:
                continue
            xs, ys = zip(*pts)
            suffix = f" [{div}]" if len(divergences) > 1 else ""
            style = "-" if div == divergences[0] else "--"
            ax.plot(
                xs,
                ys,
                style,
                marker="o",
                markersize=3,
                color=_color_for(FN_COLORS, label_fn, i),
                label=f"{label_fn}{suffix}",
            )
    if columns_key == "khat_vs_dim":
        ax.axhline(0.7, color="black", linewidth=0.8, linestyle=":", label="khat = 0.7")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("dimension D")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _fig_min_ss(selected, header):
    return _fig_khat(
        selected,
        header,
        columns_key="min_sample_size_vs_dim",
        ylabel="minimal sample size",
        logy=True,
    )


def _fig_divergence_estimate(selected, header):
    _require_columns(header, ["dim", "estimate_of", "div_estimate", "div_analytic"])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    estimates = _series_by(selected, "estimate_of", "dim", "div_estimate")
    analytic = _series_by(selected, "estimate_of", "dim", "div_analytic")
    for i, (name, pts) in enumerate(estimates.items()):
        color = _color_for(DIVERGENCE_COLORS, name, i)
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "-", marker="o", markersize=3, color=color, label=f"{name} (MC)")
        if name in analytic and analytic[name]:
            xa, ya = zip(*analytic[name])
            ax.plot(xa, ya, "--", color=color, label=f"{name} (analytic)")
    ax.set_xlabel("dimension D")
    ax.set_ylabel("divergence")
    ax.set_yscale("symlog")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _fig_gradient_variance(selected, header):
    _require_columns(header, ["dim", "divergence", "grad_var_mean"])
    rows = _main_rows(selected) or selected
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    series = _series_by(rows, "divergence", "dim", "grad_var_mean")
    for i, (name, pts) in enumerate(series.items()):
        if not pts:
            continue
        xs, ys = zip(*pts)
        ax.plot(
            xs, ys, "-", marker="o", markersize=3,
            color=_color_for(DIVERGENCE_COLORS, name, i), label=name,
        )
    ax.set_xlabel("dimension D")
    ax.set_ylabel("per-coordinate gradient variance")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _fig_relative_error(selected, header):
    methods = ("plain_q", "snis", "psis")
    cols = [f"{k}_err_{m}" for k in ("mean", "cov") for m in methods]
    _require_columns(header, ["dim"] + cols)
    rows = _main_rows(selected) or selected
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0), sharex=True)
    for ax, which in zip(axes, ("mean", "cov")):
        for i, method in enumerate(methods):
            pts = _series_by(rows, "divergence", "dim", f"{which}_err_{method}")
            merged = sorted(p for v in pts.values() for p in v)
            if not merged:
                continue
            xs, ys = zip(*merged)
            ax.plot(
                xs, ys, "-", marker="o", markersize=3,
                color=_color_for(METHOD_COLORS, method, i), label=method,
            )
        ax.set_xlabel("dimension D")
        ax.set_ylabel(f"relative {which} error")
        ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def _fig_distance_profile(selected, header):
    _require_columns(header, ["kind", "dim", "bin_center", "density_q", "density_p"])
    rows = [r for r in selected if r.get("kind") == "distance_profile"]
    if not rows:
        raise EmptySelectionError("no distance_profile rows in the selection")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    dims = sorted({int(float(r["dim"])) for r in rows})
    for i, dim in enumerate(dims):
        sub = sorted(
            (r for r in rows if int(float(r["dim"])) == dim),
            key=lambda r: float(r["bin_center"]),
        )
        xs = [float(r["bin_center"]) for r in sub]
        suffix = f" (D={dim})" if len(dims) > 1 else ""
        color = _FALLBACK[i % len(_FALLBACK)]
        ax.plot(xs, [_as_float(r["density_q"]) for r in sub], "-", color=color,
                label=f"approximation{suffix}")
        ax.plot(xs, [_as_float(r["density_p"]) for r in sub], "--", color=color,
                label=f"target{suffix}")
    ax.set_xlabel("distance from mode")
    ax.set_ylabel("density")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


_FIGURES = {
    "khat_vs_dim": _fig_khat,
    "divergence_estimate_vs_dim": _fig_divergence_estimate,
    "min_sample_size_vs_dim": _fig_min_ss,
    "gradient_variance_vs_dim": _fig_gradient_variance,
    "relative_error_panel": _fig_relative_error,
    "distance_from_mode_profile": _fig_distance_profile,
}
