"""Command implementations behind the CLI: prepare, train, eval, transfer, report.

Commands are plain functions over an ExperimentConfig so tests and notebooks
can drive them directly. Each command writes a manifest JSON (config hash,
seeds, timestamps, output list) next to its outputs; result CSVs themselves
contain no timestamps, so identical seeded runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, baselines, synthetic
from .agents import load_agent, make_agent, train_agent, write_curve_csv
from .config import ConfigError, ExperimentConfig
from .env import episode_windows
from .results import ResultRow, append_results, read_results, row_from_report
from .rollout import evaluate_policy
from .trace_prep import (
    Catalog,
    RawRating,
    Request,
    TracePrepError,
    build_catalog,
    build_edge_traces,
    dense_item_map,
    geocode_users,
    kmeans,
    load_zip_table,
    parse_ratings,
    parse_user_zips,
    read_catalog_csv,
    read_trace_csv,
    silhouette_score,
    split_traces,
    write_catalog_csv,
    write_trace_csv,
)


class DataError(RuntimeError):
    """Missing or unusable data files (inputs, prepared traces, checkpoints)."""


LEARNED_POLICIES = ("dqn", "drqn")


def _write_manifest(directory: Path, command: str, cfg: ExperimentConfig,
                    started: float, outputs: list[Path], **extra) -> Path:
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "seeds": cfg.seeds,
        "version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": sorted(str(p) for p in outputs),
        **extra,
    }
    path = directory / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# prepare
# --------------------------------------------------------------------------


def cmd_prepare(cfg: ExperimentConfig) -> Path:
    """Ingest/cluster/split; writes catalog, per-edge traces, silhouette sweep."""
    started = time.time()
    ratings_path = cfg.resolved_ratings_path()
    users_path = cfg.resolved_users_path()
    geocode_path = cfg.resolved_geocode_path()

    inputs_missing = not (
        ratings_path.exists() and users_path.exists() and geocode_path.exists()
    )
    if inputs_missing:
        if cfg.synthetic_profile:
            corpus_dir = Path(cfg.data_dir) / f"synthetic-{cfg.synthetic_profile}"
            paths = synthetic.generate_profile(
                corpus_dir, cfg.synthetic_profile, seed=cfg.seed
            )
            ratings_path, users_path, geocode_path = (
                paths.ratings,
                paths.users,
                paths.zips,
            )
        else:
            missing = [
                str(p)
                for p in (ratings_path, users_path, geocode_path)
                if not p.exists()
            ]
            raise DataError(
                "input files missing: "
                + ", ".join(missing)
                + " (provide the dataset or set synthetic_profile in the config)"
            )

    ratings = parse_ratings(ratings_path)
    user_zips = parse_user_zips(users_path)
    zip_table = load_zip_table(geocode_path)
    geos, dropped = geocode_users(user_zips, zip_table)
    if not geos:
        raise DataError("no users could be geocoded; cannot cluster")

    points_arr = np.asarray([[g.lat, g.lon] for g in geos])
    assignments, _ = kmeans(points_arr, cfg.edges, cfg.seed)
    user_edge = {g.user_id: int(assignments[i]) for i, g in enumerate(geos)}

    # Silhouette sweep for the cluster-count diagnostic.
    sweep: list[tuple[int, float | None]] = []
    for k in range(2, cfg.silhouette_max_k + 1):
        try:
            a_k, _ = kmeans(points_arr, k, cfg.seed)
            if len(set(a_k.tolist())) < 2:
                sweep.append((k, None))
            else:
                sweep.append((k, silhouette_score(points_arr, a_k)))
        except TracePrepError:
            sweep.append((k, None))

    retained = [r for r in ratings if r.user_id in user_edge]
    if not retained:
        raise DataError("no ratings left after dropping ungeocoded users")
    item_map = dense_item_map(retained)
    remapped = [
        RawRating(r.user_id, item_map[r.item_id], r.rating, r.timestamp)
        for r in retained
    ]
    catalog = build_catalog(
        list(range(len(item_map))), cfg.seed, cfg.size_min_units, cfg.size_max_units
    )
    traces = build_edge_traces(remapped, user_edge, catalog, cfg.edges)
    split = split_traces(traces, cfg.train_frac, cfg.transfer_edge)

    prepared = cfg.prepared_dir()
    prepared.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []

    catalog_path = prepared / "catalog.csv"
    write_catalog_csv(catalog_path, catalog)
    outputs.append(catalog_path)

    for edge in sorted(split.train):
        p_train = prepared / f"edge_{edge}_train.csv"
        p_test = prepared / f"edge_{edge}_test.csv"
        write_trace_csv(p_train, split.train[edge])
        write_trace_csv(p_test, split.test[edge])
        outputs.extend([p_train, p_test])
    p_full = prepared / f"edge_{split.transfer_edge_id}_full.csv"
    write_trace_csv(p_full, split.transfer)
    outputs.append(p_full)

    silhouette_path = prepared / "silhouette.csv"
    with silhouette_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "silhouette_score"])
        for k, score in sweep:
            w.writerow([k, "" if score is None else repr(score)])
    outputs.append(silhouette_path)

    _write_manifest(
        prepared,
        "prepare",
        cfg,
        started,
        outputs,
        dropped_users=dropped,
        retained_ratings=len(retained),
        num_items=catalog.num_items,
        edge_trace_lengths={str(e): len(t) for e, t in sorted(traces.items())},
    )
    return prepared


# --------------------------------------------------------------------------
# prepared-data access
# --------------------------------------------------------------------------


@dataclass
class PreparedData:
    catalog: Catalog
    train: dict[int, list[Request]] = field(default_factory=dict)
    test: dict[int, list[Request]] = field(default_factory=dict)
    transfer_edge_id: int = -1
    transfer: list[Request] = field(default_factory=list)

    def full_trace(self, edge: int) -> list[Request]:
        if edge == self.transfer_edge_id:
            return self.transfer
        return self.train[edge] + self.test[edge]

    def training_edges(self) -> list[int]:
        return sorted(self.train)


def load_prepared(cfg: ExperimentConfig) -> PreparedData:
    prepared = cfg.prepared_dir()
    catalog_path = prepared / "catalog.csv"
    if not catalog_path.exists():
        raise DataError(f"prepared data not found under {prepared} (run prepare first)")
    try:
        data = PreparedData(
            catalog=read_catalog_csv(catalog_path),
            transfer_edge_id=cfg.transfer_edge,
        )
        for edge in range(cfg.edges):
            if edge == cfg.transfer_edge:
                data.transfer = read_trace_csv(prepared / f"edge_{edge}_full.csv")
            else:
                data.train[edge] = read_trace_csv(prepared / f"edge_{edge}_train.csv")
                data.test[edge] = read_trace_csv(prepared / f"edge_{edge}_test.csv")
    except TracePrepError as exc:
        raise DataError(str(exc)) from exc
    return data


def checkpoint_path(
    out_dir: str | Path, arch: str, edge: int, capacity: int, seed: int
) -> Path:
    return Path(out_dir) / f"{arch}_edge{edge}_cap{capacity}_seed{seed}.ckpt"


def curve_path(
    out_dir: str | Path, arch: str, edge: int, capacity: int, seed: int
) -> Path:
    return Path(out_dir) / f"curve_{arch}_edge{edge}_cap{capacity}_seed{seed}.csv"


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def cmd_train(
    cfg: ExperimentConfig,
    edge: int,
    archs: list[str] | None = None,
) -> list[Path]:
    """Train the learned policies on one edge's train split, per capacity and seed."""
    started = time.time()
    data = load_prepared(cfg)
    if edge == data.transfer_edge_id:
        raise ConfigError(
            f"edge {edge} is the transfer edge; it has no train split"
        )
    if edge not in data.train:
        raise DataError(f"edge {edge} has no prepared train split")
    archs = archs or [p for p in cfg.policies if p in LEARNED_POLICIES]
    bad = [a for a in archs if a not in LEARNED_POLICIES]
    if bad:
        raise ConfigError(f"not trainable: {bad}; trainable policies: dqn, drqn")
    windows = episode_windows(data.train[edge], cfg.episode_len)
    if not windows:
        raise DataError(
            f"edge {edge} train split has {len(data.train[edge])} requests, "
            f"fewer than one episode of {cfg.episode_len}"
        )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []
    for arch in archs:
        for capacity in cfg.capacities:
            for seed in cfg.seeds:
                agent = make_agent(arch, data.catalog.num_items, cfg.agent_config(seed))
                rows = train_agent(
                    agent,
                    windows,
                    data.catalog,
                    capacity,
                    cfg.train_episodes,
                    progress_every=cfg.progress_every,
                )
                ckpt = checkpoint_path(out_dir, arch, edge, capacity, seed)
                agent.save(ckpt)
                curve = curve_path(out_dir, arch, edge, capacity, seed)
                write_curve_csv(curve, rows)
                outputs.extend([ckpt, curve])
    _write_manifest(out_dir, "train", cfg, started, outputs, edge=edge, archs=archs)
    return outputs


# --------------------------------------------------------------------------
# eval / transfer
# --------------------------------------------------------------------------


def _build_policy(
    name: str,
    cfg: ExperimentConfig,
    data: PreparedData,
    seed: int,
    capacity: int,
    ranking_edge: int,
    checkpoint_edge: int | None = None,
):
    """Instantiate a policy by CLI name; learned ones load their checkpoint."""
    if name == "belady":
        return baselines.BeladyPrefetchPolicy()
    if name == "topk-pop":
        if ranking_edge not in data.train:
            raise DataError(
                f"topk-pop needs a train split for edge {ranking_edge} to rank items"
            )
        ranked = baselines.rank_by_popularity(
            data.train[ranking_edge], data.catalog.num_items
        )
        return baselines.TopKPolicy(ranked, name="topk-pop")
    if name == "topk-size":
        return baselines.TopKPolicy(baselines.rank_by_size(data.catalog), name="topk-size")
    if name == "pop-recent":
        return baselines.make_popularity_recent_policy()
    if name == "pop-all":
        return baselines.make_popularity_all_policy()
    if name == "random":
        return baselines.RandomPolicy(seed)
    if name in LEARNED_POLICIES:
        assert checkpoint_edge is not None
        ckpt = checkpoint_path(cfg.out_dir, name, checkpoint_edge, capacity, seed)
        if not ckpt.exists():
            raise DataError(f"checkpoint not found: {ckpt} (run train first)")
        agent = load_agent(ckpt)
        return agent.policy(explore=False)
    raise ConfigError(f"unknown policy {name!r}")


def _eval_rows(
    cfg: ExperimentConfig,
    data: PreparedData,
    trace: list[Request],
    policies: list[str],
    capacities: list[int],
    edge_label: int,
    split_label: str,
    ranking_edge: int,
    checkpoint_edge: int | None,
) -> list[ResultRow]:
    windows = episode_windows(trace, cfg.episode_len)
    if not windows:
        raise DataError(
            f"{split_label} trace for edge {edge_label} is shorter than one episode"
        )
    rows: list[ResultRow] = []
    for name in policies:
        for capacity in capacities:
            for seed in cfg.seeds:
                policy = _build_policy(
                    name, cfg, data, seed, capacity, ranking_edge, checkpoint_edge
                )
                mode = getattr(getattr(policy, "agent", None), "obs_mode", "drqn")
                report, _ = evaluate_policy(
                    policy,
                    windows,
                    data.catalog,
                    capacity,
                    mode=mode,
                    history_len=cfg.history_len,
                )
                rows.append(
                    row_from_report(name, edge_label, capacity, split_label, seed, report)
                )
    return rows


def cmd_eval(
    cfg: ExperimentConfig,
    edge: int,
    policies: list[str] | None = None,
    capacities: list[int] | None = None,
) -> list[ResultRow]:
    """Greedy evaluation on one edge's test split; appends rows to results.csv."""
    started = time.time()
    data = load_prepared(cfg)
    if edge == data.transfer_edge_id:
        raise ConfigError(
            f"edge {edge} is the transfer edge; use the transfer command"
        )
    if edge not in data.test:
        raise DataError(f"edge {edge} has no prepared test split")
    rows = _eval_rows(
        cfg,
        data,
        data.test[edge],
        policies or cfg.policies,
        capacities or cfg.capacities,
        edge_label=edge,
        split_label="test",
        ranking_edge=edge,
        checkpoint_edge=edge,
    )
    out = append_results(cfg.out_dir, rows)
    _write_manifest(Path(cfg.out_dir), "eval", cfg, started, [out], edge=edge)
    return rows


def cmd_transfer(
    cfg: ExperimentConfig,
    source_edge: int,
    target_edge: int | None = None,
    policies: list[str] | None = None,
    capacities: list[int] | None = None,
) -> list[ResultRow]:
    """Zero-shot evaluation of source-trained agents on the target edge's full trace.

    Baselines from the policy list are evaluated on the same trace for
    comparison; the popularity ranking for topk-pop still comes from the
    source edge's train split (the target edge may have none).
    """
    started = time.time()
    target = cfg.transfer_edge if target_edge is None else target_edge
    if source_edge == target:
        raise ConfigError("transfer requires distinct source and target edges")
    data = load_prepared(cfg)
    if source_edge == data.transfer_edge_id:
        raise ConfigError(
            f"source edge {source_edge} is the transfer edge; it has no checkpoints"
        )
    split_label = f"transfer:{source_edge}->{target}"
    rows = _eval_rows(
        cfg,
        data,
        data.full_trace(target),
        policies or cfg.policies,
        capacities or cfg.capacities,
        edge_label=target,
        split_label=split_label,
        ranking_edge=source_edge,
        checkpoint_edge=source_edge,
    )
    out = append_results(cfg.out_dir, rows)
    _write_manifest(
        Path(cfg.out_dir),
        "transfer",
        cfg,
        started,
        [out],
        source_edge=source_edge,
        target_edge=target,
    )
    return rows


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def cmd_report(cfg: ExperimentConfig, figures: bool = True) -> list[Path]:
    """Pivot results into per-split policy × capacity tables, render figures."""
    from . import report as report_mod

    started = time.time()
    rows = read_results(cfg.out_dir)
    if not rows:
        raise DataError(f"no result rows under {cfg.out_dir} (run eval first)")
    out_dir = Path(cfg.out_dir)
    outputs = report_mod.write_report(rows, out_dir)
    if figures:
        outputs.extend(report_mod.render_figures(cfg, rows, out_dir))
    _write_manifest(out_dir, "report", cfg, started, outputs)
    return outputs
