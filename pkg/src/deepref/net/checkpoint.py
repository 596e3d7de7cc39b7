"""Self-describing binary checkpoints for the Q-networks.

Layout: an 8-byte magic, an 8-byte little-endian header length, a UTF-8 JSON
header (format version, architecture tag, free-form metadata, and the ordered
parameter manifest with names and shapes), then every parameter's float64
values little-endian and row-major, concatenated in manifest order. Loading
validates the magic, version, and that the payload length matches the
manifest exactly — a truncated or padded file is an error, not a warning.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DREFCKPT"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised for unreadable, mismatched, or corrupt checkpoint files."""


def save_checkpoint(
    path: str | Path,
    arch: str,
    meta: dict,
    named_params: list[tuple[str, np.ndarray]],
) -> None:
    manifest = [{"name": n, "shape": list(p.shape)} for n, p in named_params]
    header = {
        "format_version": FORMAT_VERSION,
        "arch": arch,
        "meta": meta,
        "params": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, p in named_params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Returns (arch, meta, name -> float64 array)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<Q", blob[len(MAGIC) : len(MAGIC) + 8])
    header_start = len(MAGIC) + 8
    if header_start + header_len > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}"
        )
    payload = blob[header_start + header_len :]
    expected = sum(
        int(np.prod(entry["shape"], dtype=np.int64)) for entry in header["params"]
    )
    if len(payload) != expected * 8:
        raise CheckpointError(
            f"{path}: payload holds {len(payload)} bytes, manifest expects {expected * 8}"
        )
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(
            payload, dtype="<f8", count=count, offset=offset * 8
        ).astype(np.float64)
        params[entry["name"]] = arr.reshape(shape)
        offset += count
    return header["arch"], header.get("meta", {}), params


def restore_into(
    network, params: dict[str, np.ndarray], expected_arch: str, arch: str
) -> None:
    """Copy loaded arrays into a network, validating architecture and shapes."""
    if arch != expected_arch:
        raise CheckpointError(f"checkpoint is for arch {arch!r}, wanted {expected_arch!r}")
    for name, p in network.parameters():
        if name not in params:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        if params[name].shape != p.shape:
            raise CheckpointError(
                f"parameter {name!r}: checkpoint shape {params[name].shape}, "
                f"network shape {p.shape}"
            )
        p[:] = params[name]
    extra = set(params) - {name for name, _ in network.parameters()}
    if extra:
        raise CheckpointError(f"checkpoint has unknown parameters: {sorted(extra)}")
