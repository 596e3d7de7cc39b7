"""Result rows: the per-run metrics table and its raw-counter sidecar.

`results.csv` carries the metric ratios; `results_counters.json` carries, row
for row, the integer counters the ratios were computed from. Keeping the
integers around makes the arithmetic auditable: anyone can recompute each
ratio and get the stored float bit for bit, which `verify_result_identities`
enforces after every run.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .metrics import MetricsReport

RESULTS_HEADER = [
    "policy",
    "edge_id",
    "capacity",
    "split",
    "accuracy",
    "coverage",
    "aggressiveness",
    "timeliness_mean",
    "timeliness_std",
    "episodes",
    "seed",
]


@dataclass(frozen=True)
class ResultRow:
    policy: str
    edge_id: int
    capacity: int
    split: str
    accuracy: float
    coverage: float
    aggressiveness: float
    timeliness_mean: float
    timeliness_std: float
    episodes: int
    seed: int
    # Raw counters (sidecar, not part of the CSV schema).
    hits: int = 0
    misses: int = 0
    sent_prefetches: int = 0
    used_prefetches: int = 0
    timeliness_count: int = 0


def row_from_report(
    policy: str,
    edge_id: int,
    capacity: int,
    split: str,
    seed: int,
    report: MetricsReport,
) -> ResultRow:
    return ResultRow(
        policy=policy,
        edge_id=edge_id,
        capacity=capacity,
        split=split,
        accuracy=report.accuracy,
        coverage=report.coverage,
        aggressiveness=report.aggressiveness,
        timeliness_mean=report.timeliness_mean,
        timeliness_std=report.timeliness_std,
        episodes=report.episodes,
        seed=seed,
        hits=report.hits,
        misses=report.misses,
        sent_prefetches=report.sent_prefetches,
        used_prefetches=report.used_prefetches,
        timeliness_count=report.timeliness_count,
    )


class MetricIdentityError(AssertionError):
    """A stored ratio does not reproduce from its integer counters."""


def verify_result_identities(rows: Sequence[ResultRow]) -> None:
    """Check each ratio against its integer counters, bit for bit.

    accuracy == hits / (hits + misses), coverage == used / sent (0.0 when
    nothing was sent), aggressiveness == sent / (hits + misses). Stated over
    integers: multiplying back by the denominator recovers the numerator
    because the stored float IS the exact rounding of that integer ratio.
    """
    for i, r in enumerate(rows):
        requests = r.hits + r.misses
        if requests <= 0:
            raise MetricIdentityError(f"row {i}: no requests recorded")
        if r.used_prefetches > r.sent_prefetches:
            raise MetricIdentityError(f"row {i}: used > sent")
        checks = [
            ("accuracy", r.accuracy, r.hits / requests),
            (
                "coverage",
                r.coverage,
                (r.used_prefetches / r.sent_prefetches) if r.sent_prefetches else 0.0,
            ),
            ("aggressiveness", r.aggressiveness, r.sent_prefetches / requests),
        ]
        for name, stored, recomputed in checks:
            if stored != recomputed:
                raise MetricIdentityError(
                    f"row {i}: {name} {stored!r} != {recomputed!r} from counters"
                )


def results_csv_path(out_dir: str | Path) -> Path:
    return Path(out_dir) / "results.csv"


def counters_sidecar_path(out_dir: str | Path) -> Path:
    return Path(out_dir) / "results_counters.json"


_COUNTER_KEYS = [
    "hits",
    "misses",
    "sent_prefetches",
    "used_prefetches",
    "timeliness_count",
]


def append_results(out_dir: str | Path, rows: Sequence[ResultRow]) -> Path:
    """Append rows to results.csv and their counters to the JSON sidecar."""
    if not rows:
        return results_csv_path(out_dir)
    verify_result_identities(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = results_csv_path(out_dir)
    new_file = not csv_path.exists()
    with csv_path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new_file:
            w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.policy,
                    r.edge_id,
                    r.capacity,
                    r.split,
                    repr(r.accuracy),
                    repr(r.coverage),
                    repr(r.aggressiveness),
                    repr(r.timeliness_mean),
                    repr(r.timeliness_std),
                    r.episodes,
                    r.seed,
                ]
            )
    sidecar = counters_sidecar_path(out_dir)
    existing: list[dict] = []
    if sidecar.exists():
        existing = json.loads(sidecar.read_text())
    existing.extend({k: asdict(r)[k] for k in _COUNTER_KEYS} for r in rows)
    sidecar.write_text(json.dumps(existing, indent=1) + "\n")
    return csv_path


def read_results(out_dir: str | Path) -> list[ResultRow]:
    """Read results.csv, joining raw counters back in when the sidecar aligns."""
    csv_path = results_csv_path(out_dir)
    if not csv_path.exists():
        return []
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ValueError(f"{csv_path}: unexpected header {header}")
        raw_rows = list(reader)
    sidecar = counters_sidecar_path(out_dir)
    counters: list[dict] = []
    if sidecar.exists():
        counters = json.loads(sidecar.read_text())
    if len(counters) != len(raw_rows):
        counters = [{} for _ in raw_rows]
    rows: list[ResultRow] = []
    for fields, extra in zip(raw_rows, counters):
        rows.append(
            ResultRow(
                policy=fields[0],
                edge_id=int(fields[1]),
                capacity=int(fields[2]),
                split=fields[3],
                accuracy=float(fields[4]),
                coverage=float(fields[5]),
                aggressiveness=float(fields[6]),
                timeliness_mean=float(fields[7]),
                timeliness_std=float(fields[8]),
                episodes=int(fields[9]),
                seed=int(fields[10]),
                **{k: int(extra.get(k, 0)) for k in _COUNTER_KEYS},
            )
        )
    return rows
