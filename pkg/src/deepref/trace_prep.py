"""Trace preparation: ratings ingest, geographic clustering, catalog and per-edge request traces.

The pipeline turns a ratings log into per-edge chronological request traces:
ratings are parsed, users are geocoded by zip, k-means groups users into edge
networks, items get randomized sizes with normalized fetch latencies, and each
edge's trace is split chronologically into train/test (the transfer edge keeps
its full trace for evaluation only).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# TCP throughput model defaults: receiver window 65536 bytes, 100 ms round trip.
DEFAULT_CWND_BYTES = 65536
DEFAULT_RTT_S = 0.1

WINDOW_24H_S = 86_400


class TracePrepError(ValueError):
    """Raised on malformed input files or violated preconditions."""


@dataclass(frozen=True)
class RawRating:
    """One row of the ratings log: a timestamped (user, item) watch event."""

    user_id: int
    item_id: int
    rating: int
    timestamp: int


@dataclass(frozen=True)
class UserGeo:
    user_id: int
    zip_code: str
    lat: float
    lon: float


@dataclass(frozen=True)
class Request:
    """One user demand for an item at an edge; the only signal policies see."""

    timestamp: int
    user_id: int
    item_id: int
    edge_id: int


@dataclass(frozen=True)
class ContentItem:
    item_id: int
    size_units: float
    latency_norm: float


@dataclass(frozen=True)
class Catalog:
    """The cloud's item set; ids are dense 0..M-1 and latencies normalized to (0, 1]."""

    items: tuple[ContentItem, ...]

    def __post_init__(self):
        ids = [it.item_id for it in self.items]
        if ids != list(range(len(ids))):
            raise TracePrepError("catalog item ids must be exactly 0..M-1")

    @property
    def num_items(self) -> int:
        return len(self.items)

    def latency(self, item_id: int) -> float:
        return self.items[item_id].latency_norm

    def size(self, item_id: int) -> float:
        return self.items[item_id].size_units


@dataclass
class TraceSplit:
    """Per-edge train/test traces; the transfer edge keeps its full trace, no train."""

    train: dict[int, list[Request]] = field(default_factory=dict)
    test: dict[int, list[Request]] = field(default_factory=dict)
    transfer_edge_id: int = -1
    transfer: list[Request] = field(default_factory=list)


def parse_ratings(path: str | Path) -> list[RawRating]:
    """Parse a 4-column (user, item, rating, timestamp) log, tab- or comma-separated."""
    path = Path(path)
    if not path.exists():
        raise TracePrepError(f"ratings file not found: {path}")
    out: list[RawRating] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t") if "\t" in line else line.split(",")
            if len(fields) != 4:
                raise TracePrepError(
                    f"{path}:{lineno}: expected 4 columns, got {len(fields)}"
                )
            try:
                user, item, rating, ts = (int(f) for f in fields)
            except ValueError as exc:
                raise TracePrepError(f"{path}:{lineno}: non-integer field") from exc
            if user <= 0 or item <= 0 or ts <= 0:
                raise TracePrepError(f"{path}:{lineno}: ids and timestamp must be positive")
            out.append(RawRating(user, item, rating, ts))
    if not out:
        raise TracePrepError(f"ratings file is empty: {path}")
    return out


def parse_user_zips(path: str | Path) -> dict[int, str]:
    """Parse a pipe-separated user table (user|age|gender|occupation|zip) into user -> zip."""
    path = Path(path)
    if not path.exists():
        raise TracePrepError(f"user file not found: {path}")
    zips: dict[int, str] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("|")
            if len(fields) < 5:
                raise TracePrepError(f"{path}:{lineno}: expected 5 pipe-separated fields")
            try:
                user = int(fields[0])
            except ValueError as exc:
                raise TracePrepError(f"{path}:{lineno}: bad user id") from exc
            zips[user] = _norm_zip(fields[4])
    if not zips:
        raise TracePrepError(f"user file is empty: {path}")
    return zips


def load_zip_table(path: str | Path) -> dict[str, tuple[float, float]]:
    """Load a zip,lat,lon CSV (header row optional) into zip -> (lat, lon)."""
    path = Path(path)
    if not path.exists():
        raise TracePrepError(f"zip geocode file not found: {path}")
    table: dict[str, tuple[float, float]] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0].strip().lower() == "zip":
                continue
            if len(row) < 3:
                raise TracePrepError(f"{path}:{lineno}: expected zip,lat,lon")
            try:
                lat, lon = float(row[1]), float(row[2])
            except ValueError as exc:
                raise TracePrepError(f"{path}:{lineno}: bad coordinates") from exc
            table[_norm_zip(row[0])] = (lat, lon)
    if not table:
        raise TracePrepError(f"zip geocode table is empty: {path}")
    return table


def _norm_zip(z: str) -> str:
    z = z.strip()
    if z.isdigit() and len(z) < 5:
        z = z.zfill(5)
    return z


def geocode_users(
    user_zips: dict[int, str], zip_table: dict[str, tuple[float, float]]
) -> tuple[list[UserGeo], int]:
    """Attach coordinates to users by zip lookup.

    Users whose zip is absent from the table are dropped (imputing a location
    would distort the geographic clusters). Returns (geocoded users, dropped count).
    """
    if not zip_table:
        raise TracePrepError("zip geocode table is empty")
    geos: list[UserGeo] = []
    dropped = 0
    for user_id in sorted(user_zips):
        z = _norm_zip(user_zips[user_id])
        coords = zip_table.get(z)
        if coords is None:
            dropped += 1
            continue
        lat, lon = coords
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise TracePrepError(f"zip {z}: coordinates out of range ({lat}, {lon})")
        geos.append(UserGeo(user_id, z, lat, lon))
    if dropped:
        log.warning("geocode: dropped %d of %d users with unresolvable zips",
                    dropped, len(user_zips))
    return geos, dropped


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    objective_history: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's k-means with seeded Forgy init (k distinct points chosen uniformly).

    Runs to an assignment fixpoint or the iteration cap. Nearest-centroid ties
    go to the lowest cluster index; a cluster that empties keeps its centroid.
    If `objective_history` is a list, the within-cluster sum of squares after
    each full iteration is appended to it (non-increasing by construction).
    Returns (assignments, centroids).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise TracePrepError("points must be a 2-d array")
    if k < 1:
        raise TracePrepError("k must be >= 1")
    distinct = np.unique(points, axis=0)
    if k > len(distinct):
        raise TracePrepError(f"k={k} exceeds {len(distinct)} distinct points")

    rng = np.random.default_rng(seed)
    centroids = distinct[rng.choice(len(distinct), size=k, replace=False)].copy()
    assignments = np.full(len(points), -1, dtype=int)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignments = np.argmin(d2, axis=1)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
        for c in range(k):
            members = points[assignments == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        if objective_history is not None:
            d2_now = ((points - centroids[assignments]) ** 2).sum()
            objective_history.append(float(d2_now))
    return assignments, centroids


def within_cluster_ss(points: np.ndarray, assignments: np.ndarray) -> float:
    """Sum over clusters of squared distances to the cluster mean."""
    points = np.asarray(points, dtype=float)
    total = 0.0
    for c in np.unique(assignments):
        members = points[assignments == c]
        total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def silhouette_score(points: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette over points, Euclidean distance.

    Per point: a = mean distance to its own cluster's other members, b = the
    smallest mean distance to another cluster, s = (b - a) / max(a, b).
    Singleton-cluster points score 0.
    """
    points = np.asarray(points, dtype=float)
    assignments = np.asarray(assignments, dtype=int)
    labels = np.unique(assignments)
    if len(labels) < 2:
        raise TracePrepError("silhouette needs at least 2 clusters")
    dists = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(len(points))
    for i in range(len(points)):
        own = assignments == assignments[i]
        n_own = own.sum() - 1
        if n_own == 0:
            scores[i] = 0.0
            continue
        a = dists[i, own].sum() / n_own
        b = min(dists[i, assignments == c].mean() for c in labels if c != assignments[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def build_catalog(
    item_ids: list[int],
    seed: int,
    size_min: float,
    size_max: float,
    cwnd_bytes: int = DEFAULT_CWND_BYTES,
    rtt_s: float = DEFAULT_RTT_S,
) -> Catalog:
    """Assign uniform random sizes and normalized fetch latencies to items.

    Raw fetch latency is (8 * size_bytes) / throughput with throughput =
    8 * CWND / RTT; latencies are then divided by the catalog-wide maximum so
    the largest item has latency exactly 1.0.
    """
    if not item_ids:
        raise TracePrepError("catalog needs at least one item")
    if list(item_ids) != list(range(len(item_ids))):
        raise TracePrepError("item ids must be dense 0..M-1")
    if not (size_max > size_min > 0):
        raise TracePrepError("need size_max > size_min > 0")
    rng = np.random.default_rng(seed)
    sizes = rng.uniform(size_min, size_max, size=len(item_ids))
    throughput_bps = 8.0 * cwnd_bytes / rtt_s
    raw_latency = 8.0 * (sizes * 1e6) / throughput_bps  # size units are abstract MB
    latency_norm = raw_latency / raw_latency.max()
    items = tuple(
        ContentItem(i, float(sizes[i]), float(latency_norm[i])) for i in item_ids
    )
    return Catalog(items)


def dense_item_map(ratings: list[RawRating]) -> dict[int, int]:
    """Map raw item ids to dense 0..M-1, ordered by raw id."""
    return {raw: dense for dense, raw in enumerate(sorted({r.item_id for r in ratings}))}


def build_edge_traces(
    ratings: list[RawRating],
    assignments: dict[int, int],
    catalog: Catalog,
    num_edges: int,
) -> dict[int, list[Request]]:
    """Partition remapped ratings into per-edge traces sorted by timestamp.

    Every rating's user must have an edge assignment and every item id must be
    a valid catalog id; an edge with no users yields an empty trace.
    """
    traces: dict[int, list[Request]] = {e: [] for e in range(num_edges)}
    for r in ratings:
        edge = assignments.get(r.user_id)
        if edge is None:
            raise TracePrepError(f"user {r.user_id} has no edge assignment")
        if not (0 <= r.item_id < catalog.num_items):
            raise TracePrepError(f"item {r.item_id} not in catalog of {catalog.num_items}")
        traces[edge].append(Request(r.timestamp, r.user_id, r.item_id, edge))
    for trace in traces.values():
        trace.sort(key=lambda q: q.timestamp)
    return traces


def split_traces(
    traces: dict[int, list[Request]], train_frac: float, transfer_edge_id: int
) -> TraceSplit:
    """Chronological train/test split per training edge; the transfer edge is eval-only."""
    if not (0.0 < train_frac < 1.0):
        raise TracePrepError("train_frac must be strictly between 0 and 1")
    if transfer_edge_id not in traces:
        raise TracePrepError(f"transfer edge {transfer_edge_id} is not a valid edge")
    split = TraceSplit(transfer_edge_id=transfer_edge_id)
    for edge, trace in traces.items():
        if edge == transfer_edge_id:
            split.transfer = list(trace)
            continue
        cut = int(len(trace) * train_frac)
        split.train[edge] = trace[:cut]
        split.test[edge] = trace[cut:]
    return split


def write_trace_csv(path: str | Path, trace: list[Request]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "user_id", "item_id", "edge_id"])
        for r in trace:
            w.writerow([r.timestamp, r.user_id, r.item_id, r.edge_id])


def read_trace_csv(path: str | Path) -> list[Request]:
    path = Path(path)
    if not path.exists():
        raise TracePrepError(f"trace file not found: {path}")
    out: list[Request] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "user_id", "item_id", "edge_id"]:
            raise TracePrepError(f"{path}: unexpected trace header {header}")
        for row in reader:
            ts, user, item, edge = (int(v) for v in row)
            out.append(Request(ts, user, item, edge))
    return out


def write_catalog_csv(path: str | Path, catalog: Catalog) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "size_units", "latency_norm"])
        for it in catalog.items:
            w.writerow([it.item_id, repr(it.size_units), f"{it.latency_norm:.9f}"])


def read_catalog_csv(path: str | Path) -> Catalog:
    path = Path(path)
    if not path.exists():
        raise TracePrepError(f"catalog file not found: {path}")
    items: list[ContentItem] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["item_id", "size_units", "latency_norm"]:
            raise TracePrepError(f"{path}: unexpected catalog header {header}")
        for row in reader:
            items.append(ContentItem(int(row[0]), float(row[1]), float(row[2])))
    return Catalog(tuple(items))
