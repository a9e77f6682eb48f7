"""Binary dataset containers and JSON sidecars.

Patch container layout (little-endian):

    magic    4 bytes  b"AIVD"
    version  uint32   1
    count    uint32   number of patches
    psize    uint32   patch edge length (15)
    flags    uint32   bit 0: a pair section follows the records
    then per-patch records, each:
        pixels   psize * psize float32, row-major
        tissue   uint8
        scanner  uint8 (ASCII of "A"/"B")
        subject  int32
        center   2 int32 (row, col)

Pair section (present when flag bit 0 is set; the patch records then
hold the pooled [source; target] patches):

    n_source  uint32   pooled split point (source rows come first)
    truncated uint8
    n_pairs   uint64
    index_a   n_pairs int64
    index_b   n_pairs int64

Pixels are stored as 32-bit floats, so loading quantizes them once;
a loaded container re-saves to byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .pairs import PairSet
from .phantom import PATCH_SIZE, PatchSet

DATA_MAGIC = b"AIVD"
DATA_VERSION = 1
FLAG_PAIRS = 1

_N_PIXELS = PATCH_SIZE * PATCH_SIZE
RECORD_DTYPE = np.dtype([
    ("pixels", "<f4", (PATCH_SIZE, PATCH_SIZE)),
    ("tissue", np.uint8),
    ("scanner", np.uint8),
    ("subject", "<i4"),
    ("center", "<i4", (2,)),
])


def save_patches(path, patches: PatchSet) -> None:
    with open(path, "wb") as f:
        _write_header(f, len(patches), flags=0)
        _write_records(f, patches)


def load_patches(path) -> PatchSet:
    with open(path, "rb") as f:
        count, flags = _read_header(f)
        if flags & FLAG_PAIRS:
            raise ValueError(f"{path} holds a pair set; use load_pairs")
        patches = _read_records(f, count)
        _expect_eof(f)
    return patches


def save_pairs(path, pairs: PairSet) -> None:
    pooled = pairs.pooled
    with open(path, "wb") as f:
        _write_header(f, len(pooled), flags=FLAG_PAIRS)
        _write_records(f, pooled)
        f.write(struct.pack("<IBQ", len(pairs.source), int(pairs.truncated), len(pairs)))
        f.write(np.ascontiguousarray(pairs.index_a, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(pairs.index_b, dtype="<i8").tobytes())


def load_pairs(path) -> PairSet:
    with open(path, "rb") as f:
        count, flags = _read_header(f)
        if not flags & FLAG_PAIRS:
            raise ValueError(f"{path} holds plain patches; use load_patches")
        pooled = _read_records(f, count)
        n_source, truncated, n_pairs = struct.unpack("<IBQ", _read_exact(f, 13))
        index_a = np.frombuffer(_read_exact(f, n_pairs * 8), dtype="<i8").copy()
        index_b = np.frombuffer(_read_exact(f, n_pairs * 8), dtype="<i8").copy()
        _expect_eof(f)
    source = pooled.select(np.arange(n_source))
    target = pooled.select(np.arange(n_source, len(pooled)))
    return PairSet(source, target, index_a, index_b, truncated=bool(truncated))


def _write_header(f, count: int, flags: int) -> None:
    f.write(DATA_MAGIC)
    f.write(struct.pack("<IIII", DATA_VERSION, count, PATCH_SIZE, flags))


def _read_header(f) -> tuple[int, int]:
    magic = _read_exact(f, 4)
    if magic != DATA_MAGIC:
        raise ValueError(f"not a dataset container: bad magic {magic!r}")
    version, count, psize, flags = struct.unpack("<IIII", _read_exact(f, 16))
    if version != DATA_VERSION:
        raise ValueError(f"unsupported dataset container version {version}")
    if psize != PATCH_SIZE:
        raise ValueError(f"unsupported patch size {psize}, expected {PATCH_SIZE}")
    return count, flags


def _write_records(f, patches: PatchSet) -> None:
    records = np.empty(len(patches), dtype=RECORD_DTYPE)
    records["pixels"] = patches.pixels.astype(np.float32)
    records["tissue"] = patches.tissues
    records["scanner"] = np.where(patches.scanner_ids == "B", ord("B"), ord("A"))
    records["subject"] = patches.subject_ids
    records["center"] = patches.centers
    f.write(records.tobytes())


def _read_records(f, count: int) -> PatchSet:
    buf = _read_exact(f, count * RECORD_DTYPE.itemsize)
    records = np.frombuffer(buf, dtype=RECORD_DTYPE)
    return PatchSet(
        pixels=records["pixels"].astype(np.float64),
        tissues=records["tissue"].copy(),
        scanner_ids=np.where(records["scanner"] == ord("B"), "B", "A").astype("U1"),
        subject_ids=records["subject"].copy(),
        centers=records["center"].copy(),
    )


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError("dataset container truncated")
    return buf


def _expect_eof(f) -> None:
    if f.read(1):
        raise ValueError("dataset container has trailing bytes")


def write_sidecar(path, payload: dict) -> None:
    """Write a human-readable JSON sidecar next to a binary artifact."""
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_sidecar(path) -> dict:
    with open(path) as f:
        return json.load(f)
