"""Deterministic synthetic request corpus in the ratings-log file formats.

Produces the three files the preparation pipeline ingests — a tab-separated
ratings log, a pipe-separated user table with zip codes, and a zip,lat,lon
geocode CSV — so the full pipeline runs in environments where the real
dataset is not available. The generator plants structure the experiments
rely on: users live in a few geographic regions (so clustering finds edges),
item popularity drifts over time (items burst on a release day and fade with
a sub-day half-life, so windowed popularity rankings go stale the way they
do in a real request log), a per-region static preference floor makes edges
differ, and users tend to watch items in sequential runs along a global
chain (so request order carries learnable signal that survives an edge
change).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# (lat, lon) anchors far enough apart that clustering is unambiguous.
_REGION_ANCHORS = [
    (34.05, -118.24),
    (40.71, -74.00),
    (41.88, -87.63),
    (29.76, -95.37),
    (47.61, -122.33),
    (39.74, -104.99),
    (33.75, -84.39),
    (42.36, -71.06),
]

PROFILES: dict[str, dict] = {
    # Mirrors the real corpus's shape for full-scale runs.
    "ml-100k": dict(num_users=943, num_items=1682, num_events=100_000, num_regions=5),
    # Desk-scale: catalog much larger than the cache sizes under study (so
    # popularity baselines stay imperfect), small enough to train in minutes.
    # Dense traffic over a short span: an episode covers a fraction of a day,
    # so in-episode repeats are plentiful while day-windowed popularity
    # rankings trail the trend drift.
    "desk": dict(
        num_users=240,
        num_items=160,
        num_events=90_000,
        num_regions=3,
        span_days=8,
        trend_tau_days=0.0625,
        trend_share=0.90,
        sequential_prob=0.30,
    ),
    # Tiny: fast end-to-end pipeline and determinism checks.
    "mini": dict(num_users=48, num_items=24, num_events=12_000, num_regions=3),
}


@dataclass(frozen=True)
class CorpusPaths:
    ratings: Path
    users: Path
    zips: Path


def generate_corpus(
    out_dir: str | Path,
    num_users: int = 240,
    num_items: int = 120,
    num_events: int = 45_000,
    num_regions: int = 3,
    seed: int = 7,
    span_days: int = 120,
    sequential_prob: float = 0.65,
    trend_share: float = 0.8,
    trend_tau_days: float = 0.5,
    unresolvable_frac: float = 0.02,
) -> CorpusPaths:
    """Write u.data / u.user / zips.csv under out_dir and return their paths."""
    if num_regions > len(_REGION_ANCHORS):
        raise ValueError(f"at most {len(_REGION_ANCHORS)} regions supported")
    if num_users < num_regions:
        raise ValueError("need at least one user per region")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    # --- geography: zips jittered around region anchors ----------------------
    zips_per_region = max(3, num_users // (3 * num_regions))
    zip_rows: list[tuple[str, float, float]] = []
    region_zip_codes: list[list[str]] = []
    for r in range(num_regions):
        lat0, lon0 = _REGION_ANCHORS[r]
        codes = []
        for i in range(zips_per_region):
            code = f"{(r + 1) * 10000 + i:05d}"
            lat = lat0 + float(rng.uniform(-0.3, 0.3))
            lon = lon0 + float(rng.uniform(-0.3, 0.3))
            zip_rows.append((code, round(lat, 6), round(lon, 6)))
            codes.append(code)
        region_zip_codes.append(codes)

    # --- users: region membership, zip, activity weight ----------------------
    user_region = np.array([u % num_regions for u in range(num_users)])
    user_zip: list[str] = []
    for u in range(num_users):
        if rng.random() < unresolvable_frac:
            user_zip.append("00000")  # deliberately absent from the geocode table
        else:
            codes = region_zip_codes[user_region[u]]
            user_zip.append(codes[int(rng.integers(0, len(codes)))])
    activity = rng.lognormal(mean=0.0, sigma=0.8, size=num_users)
    activity /= activity.sum()

    # --- item preference ------------------------------------------------------
    # Static floor: a nearly flat long-tail (permuted per region, so regions
    # disagree slightly about which back-catalog items matter). Kept shallow
    # on purpose: no single cold item is requested often enough to rival a
    # trending burst in any count window.
    ranks = np.arange(num_items)
    zipf = 1.0 / (ranks + 100.0) ** 1.1
    zipf /= zipf.sum()
    region_floor = []
    for _ in range(num_regions):
        perm = rng.permutation(num_items)
        region_floor.append(zipf[np.argsort(perm)])

    # Trending overlay: each item bursts on a release day, fades with a
    # sub-day time constant, and leaves the rotation entirely after three
    # time constants — so at any moment a handful of recent releases dominate
    # traffic and yesterday's hits draw (next to) nothing. Release times are
    # global (the same items trend everywhere at the same time).
    release_day = rng.uniform(-2.0 * trend_tau_days, span_days, size=num_items)
    bins_per_day = max(4, math.ceil(4.0 / trend_tau_days))
    num_bins = span_days * bins_per_day
    bin_mid = (np.arange(num_bins) + 0.5) / bins_per_day
    age = bin_mid[:, None] - release_day[None, :]
    alive = (age >= 0.0) & (age <= 3.0 * trend_tau_days)
    boost = np.where(alive, np.exp(-np.maximum(age, 0.0) / trend_tau_days), 0.0)
    row_mass = boost.sum(axis=1, keepdims=True)
    trend = np.divide(boost, row_mass, out=np.zeros_like(boost), where=row_mass > 0)
    item_weight = []  # per region: (num_bins, num_items) request distribution
    for r in range(num_regions):
        weight = trend_share * trend + (1.0 - trend_share) * region_floor[r][None, :]
        item_weight.append(weight / weight.sum(axis=1, keepdims=True))

    # Sequential runs follow one global chain (successor = next item in a
    # shared ordering), so transition structure learned at one edge carries
    # over to another even though the popularity profiles differ.
    global_chain = rng.permutation(num_items)
    successor = np.empty(num_items, dtype=int)
    successor[global_chain] = np.roll(global_chain, -1)

    # --- events ---------------------------------------------------------------
    span_s = span_days * 86_400
    base_ts = 880_000_000
    counts = rng.multinomial(num_events, activity)
    lines: list[tuple[int, int, int, int]] = []  # (ts, user, item, rating)
    for u in range(num_users):
        n = int(counts[u])
        if n == 0:
            continue
        ts = np.sort(rng.integers(0, span_s, size=n)) + base_ts
        weight = item_weight[user_region[u]]
        current = -1
        for j in range(n):
            if j > 0 and rng.random() < sequential_prob:
                current = int(successor[current])
            else:
                b = min(int((ts[j] - base_ts) / 86_400 * bins_per_day), num_bins - 1)
                current = int(rng.choice(num_items, p=weight[b]))
            rating = int(rng.integers(1, 6))
            lines.append((int(ts[j]), u + 1, current + 1, rating))

    # Shuffle write order: the pipeline must not rely on input ordering.
    perm = rng.permutation(len(lines))

    ratings_path = out_dir / "u.data"
    with ratings_path.open("w") as fh:
        for idx in perm:
            ts, user, item, rating = lines[int(idx)]
            fh.write(f"{user}\t{item}\t{rating}\t{ts}\n")

    users_path = out_dir / "u.user"
    occupations = ["artist", "doctor", "educator", "engineer", "other"]
    with users_path.open("w") as fh:
        for u in range(num_users):
            age = int(rng.integers(18, 70))
            gender = "M" if rng.random() < 0.5 else "F"
            occupation = occupations[int(rng.integers(0, len(occupations)))]
            fh.write(f"{u + 1}|{age}|{gender}|{occupation}|{user_zip[u]}\n")

    zips_path = out_dir / "zips.csv"
    with zips_path.open("w") as fh:
        fh.write("zip,lat,lon\n")
        for code, lat, lon in zip_rows:
            fh.write(f"{code},{lat},{lon}\n")

    return CorpusPaths(ratings_path, users_path, zips_path)


def generate_profile(out_dir: str | Path, profile: str, seed: int = 7) -> CorpusPaths:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; have {sorted(PROFILES)}")
    return generate_corpus(out_dir, seed=seed, **PROFILES[profile])
