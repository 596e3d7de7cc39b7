"""Results table, counter sidecar, identity checks, and report rendering."""

from __future__ import annotations

import json

import pytest

from deepref.agents import CurveRow, write_curve_csv
from deepref.config import ExperimentConfig
from deepref.metrics import EpisodeCounters, aggregate
from deepref.report import render_figures, write_report
from deepref.results import (
    RESULTS_HEADER,
    MetricIdentityError,
    ResultRow,
    append_results,
    read_results,
    row_from_report,
    verify_result_identities,
)


def rr(policy="random", edge=0, capacity=5, split="test", seed=0,
       hits=10, misses=30, sent=20, used=5, episodes=1, **overrides):
    """A ResultRow whose ratios are exactly consistent with its counters."""
    requests = hits + misses
    base = dict(
        policy=policy, edge_id=edge, capacity=capacity, split=split,
        accuracy=hits / requests,
        coverage=(used / sent) if sent else 0.0,
        aggressiveness=sent / requests,
        timeliness_mean=0.0, timeliness_std=0.0,
        episodes=episodes, seed=seed,
        hits=hits, misses=misses, sent_prefetches=sent,
        used_prefetches=used, timeliness_count=0,
    )
    base.update(overrides)
    return ResultRow(**base)


def test_row_from_report_copies_metrics_and_counters():
    counters = EpisodeCounters(
        hits=3, misses=1, sent_prefetches=2, used_prefetches=1,
        timeliness_samples=(4.0, 6.0),
    )
    report = aggregate([counters])
    row = row_from_report("belady", 1, 5, "test", 3, report)
    assert row.policy == "belady"
    assert (row.edge_id, row.capacity, row.split, row.seed) == (1, 5, "test", 3)
    assert row.accuracy == 0.75
    assert row.coverage == 0.5
    assert row.aggressiveness == 0.5
    assert row.timeliness_mean == 5.0
    assert row.episodes == 1
    assert (row.hits, row.misses) == (3, 1)
    assert (row.sent_prefetches, row.used_prefetches, row.timeliness_count) == (2, 1, 2)


def test_identity_check_accepts_consistent_rows():
    verify_result_identities([rr(), rr(hits=1, misses=2, sent=0, used=0)])


def test_identity_check_rejects_tampered_ratio():
    with pytest.raises(MetricIdentityError, match="accuracy"):
        verify_result_identities([rr(accuracy=0.2500001)])
    with pytest.raises(MetricIdentityError, match="coverage"):
        verify_result_identities([rr(coverage=0.9)])


def test_identity_check_rejects_impossible_counters():
    empty = ResultRow(
        policy="random", edge_id=0, capacity=5, split="test",
        accuracy=0.0, coverage=0.0, aggressiveness=0.0,
        timeliness_mean=0.0, timeliness_std=0.0, episodes=1, seed=0,
    )
    with pytest.raises(MetricIdentityError, match="requests"):
        verify_result_identities([empty])
    with pytest.raises(MetricIdentityError, match="used > sent"):
        verify_result_identities([rr(used=21)])


def test_append_and_read_round_trip_is_exact(tmp_path):
    first = [rr(hits=1, misses=2, sent=3, used=1), rr(policy="belady", seed=4)]
    second = [rr(policy="dqn", hits=7, misses=13, sent=11, used=2)]
    append_results(tmp_path, first)
    append_results(tmp_path, second)

    text = (tmp_path / "results.csv").read_text().splitlines()
    assert text[0] == ",".join(RESULTS_HEADER)
    assert len(text) == 4  # one header, three rows, no repeated header

    rows = read_results(tmp_path)
    assert rows == first + second  # floats and counters bit-for-bit
    sidecar = json.loads((tmp_path / "results_counters.json").read_text())
    assert len(sidecar) == 3
    assert sidecar[0]["hits"] == 1


def test_append_rejects_bad_rows_before_writing(tmp_path):
    with pytest.raises(MetricIdentityError):
        append_results(tmp_path, [rr(accuracy=0.999)])
    assert not (tmp_path / "results.csv").exists()


def test_append_nothing_writes_nothing(tmp_path):
    append_results(tmp_path, [])
    assert not (tmp_path / "results.csv").exists()


def test_read_results_missing_dir_is_empty(tmp_path):
    assert read_results(tmp_path / "nowhere") == []


def test_read_results_rejects_foreign_header(tmp_path):
    (tmp_path / "results.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="header"):
        read_results(tmp_path)


def test_read_results_with_misaligned_sidecar_zeroes_counters(tmp_path):
    append_results(tmp_path, [rr(), rr(policy="belady")])
    (tmp_path / "results_counters.json").write_text("[]")
    rows = read_results(tmp_path)
    assert len(rows) == 2
    assert all(r.hits == 0 and r.sent_prefetches == 0 for r in rows)
    # The ratio columns themselves still round-trip.
    assert rows[0].accuracy == 0.25


# -- report tables -------------------------------------------------------------------


def test_report_averages_seeds_and_marks_missing_cells(tmp_path):
    rows = [
        rr(policy="random", capacity=5, seed=0, hits=1, misses=3),   # acc .25
        rr(policy="random", capacity=5, seed=1, hits=3, misses=1),   # acc .75
        rr(policy="random", capacity=10, seed=0, hits=1, misses=1),
        rr(policy="belady", capacity=5, seed=0, hits=4, misses=0, sent=4, used=4),
    ]
    csv_path, text_path = write_report(rows, tmp_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("split,edge_id,policy,capacity,")
    body = [l.split(",") for l in lines[1:]]
    by_key = {(r[2], r[3]): r for r in body}
    assert by_key[("random", "5")][4] == "0.5000"  # mean accuracy across seeds
    assert by_key[("random", "5")][8] == "2"       # n_seeds
    assert by_key[("belady", "5")][4] == "1.0000"
    assert by_key[("belady", "10")][4] == "-"      # missing cell, kept rectangular

    text = text_path.read_text()
    assert "== split=test edge=0 ==" in text
    assert "EC=5" in text and "EC=10" in text
    assert "belady" in text and "random" in text


def test_report_orders_policies_canonically(tmp_path):
    rows = [rr(policy=p) for p in ("random", "belady", "dqn")]
    csv_path, _ = write_report(rows, tmp_path)
    order = [l.split(",")[2] for l in csv_path.read_text().splitlines()[1:]]
    assert order == ["belady", "random", "dqn"]


# -- figures ------------------------------------------------------------------------


def test_render_figures_writes_metric_curve_and_silhouette_panels(tmp_path):
    data_dir = tmp_path / "data"
    out_dir = tmp_path / "runs"
    out_dir.mkdir()
    cfg = ExperimentConfig(data_dir=str(data_dir), out_dir=str(out_dir))

    prepared = cfg.prepared_dir()
    prepared.mkdir(parents=True)
    (prepared / "silhouette.csv").write_text(
        "k,silhouette_score\n2,0.41\n3,0.62\n4,\n"
    )
    write_curve_csv(
        out_dir / "curve_dqn_edge0_cap5_seed0.csv",
        [CurveRow(0, -1.0, 1.0, None), CurveRow(1, -0.5, 0.9, 0.4)],
    )
    rows = [
        rr(capacity=5), rr(capacity=10),
        rr(split="transfer:0->2", edge=2, capacity=5),
    ]
    outputs = render_figures(cfg, rows, out_dir)
    names = {p.name for p in outputs}
    assert names == {
        "metrics_test_edge0.png",
        "metrics_transfer_0_to_2_edge2.png",
        "training_curves.png",
        "silhouette.png",
    }
    for p in outputs:
        assert p.exists() and p.stat().st_size > 0


def test_render_figures_without_optional_inputs(tmp_path):
    out_dir = tmp_path / "runs"
    out_dir.mkdir()
    cfg = ExperimentConfig(data_dir=str(tmp_path / "data"), out_dir=str(out_dir))
    outputs = render_figures(cfg, [rr()], out_dir)
    assert {p.name for p in outputs} == {"metrics_test_edge0.png"}
