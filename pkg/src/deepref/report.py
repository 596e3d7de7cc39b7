"""Consolidated result tables (CSV + aligned text) and rendered figures.

The pivot puts policies on rows and capacities on column groups, one table
per (split, edge) pair, averaging across seeds. The CSV and the text table
are produced from the same formatted cell values, so they always agree.
"""

from __future__ import annotations

import csv
import math
import re
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .config import ALL_POLICIES, ExperimentConfig  # noqa: E402
from .results import ResultRow  # noqa: E402

_METRIC_NAMES = ("acc", "cov", "aggr", "timeliness")


def _fmt_ratio(x: float) -> str:
    return f"{x:.4f}"


def _fmt_time(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def _policy_order(names: set[str]) -> list[str]:
    known = [p for p in ALL_POLICIES if p in names]
    return known + sorted(names - set(known))


def _aggregate_cells(
    rows: list[ResultRow],
) -> dict[tuple[str, int], dict[tuple[str, int], dict[str, str]]]:
    """(split, edge) -> (policy, capacity) -> formatted metric strings."""
    grouped: dict[tuple, list[ResultRow]] = defaultdict(list)
    for r in rows:
        grouped[(r.split, r.edge_id, r.policy, r.capacity)].append(r)
    tables: dict[tuple[str, int], dict[tuple[str, int], dict[str, str]]] = defaultdict(dict)
    for (split, edge, policy, capacity), cell_rows in grouped.items():
        n = len(cell_rows)
        acc = sum(r.accuracy for r in cell_rows) / n
        cov = sum(r.coverage for r in cell_rows) / n
        aggr = sum(r.aggressiveness for r in cell_rows) / n
        t_mean = sum(r.timeliness_mean for r in cell_rows) / n
        t_std = sum(r.timeliness_std for r in cell_rows) / n
        tables[(split, edge)][(policy, capacity)] = {
            "acc": _fmt_ratio(acc),
            "cov": _fmt_ratio(cov),
            "aggr": _fmt_ratio(aggr),
            "timeliness": _fmt_time(t_mean, t_std),
            "n_seeds": str(n),
        }
    return tables


def write_report(rows: list[ResultRow], out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    tables = _aggregate_cells(rows)

    csv_path = out_dir / "report.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["split", "edge_id", "policy", "capacity",
             "accuracy", "coverage", "aggressiveness", "timeliness", "n_seeds"]
        )
        for (split, edge) in sorted(tables):
            cells = tables[(split, edge)]
            policies = _policy_order({p for p, _ in cells})
            capacities = sorted({c for _, c in cells})
            for policy in policies:
                for capacity in capacities:
                    cell = cells.get((policy, capacity))
                    if cell is None:
                        w.writerow([split, edge, policy, capacity, "-", "-", "-", "-", "0"])
                    else:
                        w.writerow(
                            [split, edge, policy, capacity, cell["acc"], cell["cov"],
                             cell["aggr"], cell["timeliness"], cell["n_seeds"]]
                        )

    text_path = out_dir / "report.txt"
    with text_path.open("w") as fh:
        for (split, edge) in sorted(tables):
            cells = tables[(split, edge)]
            policies = _policy_order({p for p, _ in cells})
            capacities = sorted({c for _, c in cells})
            fh.write(_render_text_table(split, edge, policies, capacities, cells))
            fh.write("\n")
    return [csv_path, text_path]


def _render_text_table(split, edge, policies, capacities, cells) -> str:
    widths = {"acc": 7, "cov": 7, "aggr": 7, "timeliness": 14}
    name_w = max([len(p) for p in policies] + [len("policy")])
    lines = [f"== split={split} edge={edge} =="]
    group_w = sum(widths.values()) + 3 * len(_METRIC_NAMES)
    header1 = " " * name_w + " |"
    for c in capacities:
        header1 += f" {('EC=' + str(c)).center(group_w)}|"
    header2 = "policy".ljust(name_w) + " |"
    for _ in capacities:
        for m in _METRIC_NAMES:
            header2 += f" {m.center(widths[m])}  "
        header2 += "|"
    lines.append(header1)
    lines.append(header2)
    lines.append("-" * len(header2))
    for policy in policies:
        line = policy.ljust(name_w) + " |"
        for c in capacities:
            cell = cells.get((policy, c))
            for m in _METRIC_NAMES:
                value = cell[m] if cell else "-"
                line += f" {value.center(widths[m])}  "
            line += "|"
        lines.append(line)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text.replace("->", "_to_"))


def render_figures(
    cfg: ExperimentConfig, rows: list[ResultRow], out_dir: str | Path
) -> list[Path]:
    """Metric-vs-capacity panels per (split, edge), training curves, silhouette."""
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    outputs.extend(_metric_figures(rows, fig_dir))
    outputs.extend(_curve_figure(out_dir, fig_dir))
    outputs.extend(_silhouette_figure(cfg, fig_dir))
    return outputs


def _metric_figures(rows: list[ResultRow], fig_dir: Path) -> list[Path]:
    by_table: dict[tuple[str, int], list[ResultRow]] = defaultdict(list)
    for r in rows:
        by_table[(r.split, r.edge_id)].append(r)
    panels = [
        ("accuracy", lambda r: r.accuracy),
        ("coverage", lambda r: r.coverage),
        ("aggressiveness", lambda r: r.aggressiveness),
        ("timeliness (mean steps)", lambda r: r.timeliness_mean),
    ]
    outputs = []
    for (split, edge), table_rows in sorted(by_table.items()):
        policies = _policy_order({r.policy for r in table_rows})
        capacities = sorted({r.capacity for r in table_rows})
        fig, axes = plt.subplots(2, 2, figsize=(11, 8))
        for ax, (title, getter) in zip(axes.ravel(), panels):
            for policy in policies:
                xs, ys = [], []
                for c in capacities:
                    vals = [
                        getter(r)
                        for r in table_rows
                        if r.policy == policy and r.capacity == c
                    ]
                    if vals:
                        xs.append(c)
                        ys.append(sum(vals) / len(vals))
                if xs:
                    ax.plot(xs, ys, marker="o", label=policy)
            ax.set_title(title)
            ax.set_xlabel("edge capacity (items)")
            ax.grid(True, alpha=0.3)
        axes[0, 0].legend(fontsize=8, loc="best")
        fig.suptitle(f"split={split}  edge={edge}")
        fig.tight_layout()
        path = fig_dir / f"metrics_{_slug(split)}_edge{edge}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        outputs.append(path)
    return outputs


def _moving_average(values: list[float], window: int) -> list[float]:
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def _curve_figure(out_dir: Path, fig_dir: Path) -> list[Path]:
    curve_files = sorted(out_dir.glob("curve_*.csv"))
    if not curve_files:
        return []
    cols = min(3, len(curve_files))
    rows_n = math.ceil(len(curve_files) / cols)
    fig, axes = plt.subplots(rows_n, cols, figsize=(5 * cols, 3.5 * rows_n), squeeze=False)
    for ax in axes.ravel():
        ax.set_visible(False)
    for ax, path in zip(axes.ravel(), curve_files):
        ax.set_visible(True)
        episodes, rewards = [], []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            for line in reader:
                episodes.append(int(line["episode"]))
                rewards.append(float(line["avg_reward"]))
        ax.plot(episodes, rewards, alpha=0.25, label="per episode")
        ax.plot(episodes, _moving_average(rewards, 100), label="moving avg (100)")
        ax.set_title(path.stem.removeprefix("curve_"), fontsize=9)
        ax.set_xlabel("episode")
        ax.set_ylabel("avg reward")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = fig_dir / "training_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def _silhouette_figure(cfg: ExperimentConfig, fig_dir: Path) -> list[Path]:
    silhouette_csv = cfg.prepared_dir() / "silhouette.csv"
    if not silhouette_csv.exists():
        return []
    ks, scores = [], []
    with silhouette_csv.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for line in reader:
            if line["silhouette_score"]:
                ks.append(int(line["k"]))
                scores.append(float(line["silhouette_score"]))
    if not ks:
        return []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, scores, marker="o")
    ax.set_xlabel("cluster count k")
    ax.set_ylabel("silhouette score")
    ax.set_title("cluster-count sweep")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = fig_dir / "silhouette.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
