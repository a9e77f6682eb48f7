"""Similarity-labeled patch pairs.

Pairs are drawn from the pooled source+target patches and labeled
y=1 when both patches show the same tissue, y=0 otherwise. Each pair
also carries one of six combination types given by the scanner origins
of its two patches (AA / AB / BB) crossed with same / different tissue.

Two counting conventions coexist:

``count_pair_combinations``
    The quoted combinatorial expression
    sum_k (N_k+M_k)^2 + sum_{k<l} (N_k N_l + N_k M_l + M_k M_l),
    which counts same-tissue combinations ordered and with self-pairs,
    and lists only three of the four cross-scanner cross-tissue products.

``count_unordered_pairs``
    The number of unordered non-self pairs actually enumerated here:
    sum_k C(N_k+M_k, 2) + sum_{k<l} (N_k+M_k)(N_l+M_l).
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .phantom import PatchSet
from .seeding import as_generator


class PairType(IntEnum):
    AA_SAME = 0
    AB_SAME = 1
    BB_SAME = 2
    AA_DIFF = 3
    AB_DIFF = 4
    BB_DIFF = 5


SIMILAR_TYPES = (PairType.AA_SAME, PairType.AB_SAME, PairType.BB_SAME)
DISSIMILAR_TYPES = (PairType.AA_DIFF, PairType.AB_DIFF, PairType.BB_DIFF)


class PairSet:
    """Unordered patch pairs over pooled [source; target] patches.

    ``index_a`` / ``index_b`` index into the pooled patch set (source
    patches first, then target patches), with index_a < index_b for every
    pair. Immutable after construction.
    """

    def __init__(
        self,
        source: PatchSet,
        target: PatchSet,
        index_a: np.ndarray,
        index_b: np.ndarray,
        truncated: bool = False,
    ):
        self.source = source
        self.target = target
        self.index_a = np.asarray(index_a, dtype=np.int64)
        self.index_b = np.asarray(index_b, dtype=np.int64)
        self.truncated = bool(truncated)
        if self.index_a.shape != self.index_b.shape or self.index_a.ndim != 1:
            raise ValueError("pair index arrays must be 1-d and equal length")
        n_pool = len(source) + len(target)
        if len(self.index_a) and (
            self.index_a.min() < 0 or self.index_b.max() >= n_pool
        ):
            raise ValueError("pair indices out of range of the pooled patches")
        if np.any(self.index_a >= self.index_b):
            raise ValueError("pairs must satisfy index_a < index_b (unordered, non-self)")

        self._pooled = PatchSet.concat([source, target])
        tis_a = self._pooled.tissues[self.index_a]
        tis_b = self._pooled.tissues[self.index_b]
        self.y = (tis_a == tis_b).astype(np.float64)

        sc = (self._pooled.scanner_ids == "B").astype(np.int64)
        n_b_sides = sc[self.index_a] + sc[self.index_b]  # 0=AA, 1=AB, 2=BB
        self.pair_type = np.where(
            self.y == 1.0, n_b_sides, n_b_sides + 3
        ).astype(np.uint8)

    def __len__(self) -> int:
        return self.index_a.shape[0]

    @property
    def pooled(self) -> PatchSet:
        return self._pooled

    def type_counts(self) -> dict[PairType, int]:
        counts = np.bincount(self.pair_type, minlength=len(PairType))
        return {t: int(counts[t]) for t in PairType}

    def n_similar(self) -> int:
        return int(np.count_nonzero(self.y == 1.0))

    def n_dissimilar(self) -> int:
        return int(np.count_nonzero(self.y == 0.0))

    def inputs_a(self) -> np.ndarray:
        """Left-side patches as network inputs, shape (n, 15, 15, 1)."""
        return self._pooled.network_inputs()[self.index_a]

    def inputs_b(self) -> np.ndarray:
        return self._pooled.network_inputs()[self.index_b]


def count_pair_combinations(n_source: tuple[int, ...], m_target: tuple[int, ...]) -> int:
    """Quoted combination count over per-tissue source counts N and target counts M.

    Evaluates sum_k (N_k+M_k)^2 + sum_{k<l} (N_k N_l + N_k M_l + M_k M_l)
    exactly as written, keeping its conventions (ordered same-tissue
    combinations including self-pairs; no M_k N_l cross term).
    """
    n = [int(v) for v in n_source]
    m = [int(v) for v in m_target]
    _check_counts(n, m)
    k = len(n)
    total = sum((n[i] + m[i]) ** 2 for i in range(k))
    for i in range(k):
        for j in range(i + 1, k):
            total += n[i] * n[j] + n[i] * m[j] + m[i] * m[j]
    return total


def count_unordered_pairs(n_source: tuple[int, ...], m_target: tuple[int, ...]) -> int:
    """Number of unordered non-self pairs over the pooled per-tissue counts.

    Equals sum_k C(N_k+M_k, 2) + sum_{k<l} (N_k+M_k)(N_l+M_l); matches
    len(enumerate_pairs(...)) for patch sets with these counts.
    """
    n = [int(v) for v in n_source]
    m = [int(v) for v in m_target]
    _check_counts(n, m)
    pooled = [a + b for a, b in zip(n, m)]
    total = sum(c * (c - 1) // 2 for c in pooled)
    for i in range(len(pooled)):
        for j in range(i + 1, len(pooled)):
            total += pooled[i] * pooled[j]
    return total


def _check_counts(n: list[int], m: list[int]) -> None:
    if len(n) != len(m):
        raise ValueError(f"count vectors differ in length: {len(n)} vs {len(m)}")
    if len(n) < 1:
        raise ValueError("need at least one tissue class")
    if any(v < 0 for v in n + m):
        raise ValueError("counts must be nonnegative")


def enumerate_pairs(source: PatchSet, target: PatchSet) -> PairSet:
    """All unordered non-self pairs across the pooled source+target patches."""
    n_pool = len(source) + len(target)
    ia, ib = np.triu_indices(n_pool, k=1)
    return PairSet(source, target, ia, ib)


def sample_pairs(
    source: PatchSet,
    target: PatchSet,
    budget: int = 50_000,
    similar_fraction: float = 0.5,
    seed: int = 0,
) -> PairSet:
    """Sample up to ``budget`` pairs without replacement, stratified by type.

    The similar/dissimilar split follows ``similar_fraction``; within each
    label group the quota is spread uniformly over the pair types that
    exist, and an empty or exhausted type's share is redistributed to the
    remaining types of the same group. If a whole group runs out of pairs
    the result is shorter than the budget and flagged ``truncated``.
    Deterministic for a given seed.
    """
    if budget < 2:
        raise ValueError(f"budget must be at least 2, got {budget}")
    if not 0.0 < similar_fraction < 1.0:
        raise ValueError(f"similar_fraction must lie in (0, 1), got {similar_fraction}")
    rng = as_generator(seed)

    blocks = _type_blocks(source, target)
    quota_similar = int(round(budget * similar_fraction))
    quota_dissimilar = budget - quota_similar

    ia_all: list[np.ndarray] = []
    ib_all: list[np.ndarray] = []
    truncated = False
    for types, quota in ((SIMILAR_TYPES, quota_similar), (DISSIMILAR_TYPES, quota_dissimilar)):
        capacities = {t: sum(b.capacity for b in blocks[t]) for t in types}
        takes = _allocate(quota, [capacities[t] for t in types])
        if sum(takes) < quota:
            truncated = True
        for t, take in zip(types, takes):
            if take == 0:
                continue
            ia, ib = _sample_within_type(rng, blocks[t], take)
            ia_all.append(ia)
            ib_all.append(ib)

    if ia_all:
        index_a = np.concatenate(ia_all)
        index_b = np.concatenate(ib_all)
    else:
        index_a = np.zeros(0, dtype=np.int64)
        index_b = np.zeros(0, dtype=np.int64)
    lo = np.minimum(index_a, index_b)
    hi = np.maximum(index_a, index_b)
    return PairSet(source, target, lo, hi, truncated=truncated)


def _allocate(quota: int, capacities: list[int]) -> list[int]:
    """Spread ``quota`` uniformly over strata, respecting their capacities.

    Starts from an even split over non-empty strata and iteratively moves
    unusable shares to strata with remaining room.
    """
    takes = [0] * len(capacities)
    remaining = min(quota, sum(capacities))
    while remaining > 0:
        open_idx = [i for i, c in enumerate(capacities) if takes[i] < c]
        share, extra = divmod(remaining, len(open_idx))
        placed = 0
        for pos, i in enumerate(open_idx):
            want = share + (1 if pos < extra else 0)
            got = min(want, capacities[i] - takes[i])
            takes[i] += got
            placed += got
        remaining -= placed
    return takes


class _Block:
    """One disjoint chunk of a pair type with closed-form pair unranking."""

    def __init__(self, kind: str, left: np.ndarray, right: np.ndarray | None = None):
        self.kind = kind  # "within" (C(n,2) over left) or "cross" (left x right)
        self.left = left
        self.right = right
        if kind == "within":
            n = left.shape[0]
            self.capacity = n * (n - 1) // 2
        else:
            self.capacity = left.shape[0] * right.shape[0]

    def unrank(self, ranks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "cross":
            i, j = np.divmod(ranks, self.right.shape[0])
            return self.left[i], self.right[j]
        # Lexicographic unranking of combinations (i, j), i < j, over n items:
        # cums[i] = number of pairs whose first element is <= i.
        n = self.left.shape[0]
        firsts = np.arange(n - 1, dtype=np.int64)
        cums = np.cumsum(n - 1 - firsts)
        i = np.searchsorted(cums, ranks, side="right")
        before = np.where(i > 0, cums[np.maximum(i - 1, 0)], 0)
        j = i + 1 + (ranks - before)
        return self.left[i], self.left[j]


def _type_blocks(source: PatchSet, target: PatchSet) -> dict[PairType, list[_Block]]:
    """Decompose each pair type into disjoint tissue blocks over pooled indices."""
    pooled = PatchSet.concat([source, target])
    tissues = np.unique(pooled.tissues)
    by_scanner_tissue: dict[tuple[str, int], np.ndarray] = {}
    for sc in ("A", "B"):
        for t in tissues:
            mask = (pooled.scanner_ids == sc) & (pooled.tissues == t)
            by_scanner_tissue[(sc, int(t))] = np.nonzero(mask)[0].astype(np.int64)

    def grp(sc: str, t: int) -> np.ndarray:
        return by_scanner_tissue[(sc, t)]

    blocks: dict[PairType, list[_Block]] = {t: [] for t in PairType}
    for t in tissues:
        t = int(t)
        blocks[PairType.AA_SAME].append(_Block("within", grp("A", t)))
        blocks[PairType.BB_SAME].append(_Block("within", grp("B", t)))
        blocks[PairType.AB_SAME].append(_Block("cross", grp("A", t), grp("B", t)))
    for i, tk in enumerate(tissues):
        for tl in tissues[i + 1:]:
            tk_i, tl_i = int(tk), int(tl)
            blocks[PairType.AA_DIFF].append(_Block("cross", grp("A", tk_i), grp("A", tl_i)))
            blocks[PairType.BB_DIFF].append(_Block("cross", grp("B", tk_i), grp("B", tl_i)))
            blocks[PairType.AB_DIFF].append(_Block("cross", grp("A", tk_i), grp("B", tl_i)))
            blocks[PairType.AB_DIFF].append(_Block("cross", grp("A", tl_i), grp("B", tk_i)))
    return blocks


def _sample_within_type(
    rng: np.random.Generator, blocks: list[_Block], take: int
) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sample ``take`` distinct pairs from the union of blocks."""
    capacities = np.array([b.capacity for b in blocks], dtype=np.int64)
    per_block = rng.multivariate_hypergeometric(capacities, take, method="marginals")
    ia_parts, ib_parts = [], []
    for block, m in zip(blocks, per_block):
        if m == 0:
            continue
        ranks = _sample_ranks(rng, block.capacity, int(m))
        ia, ib = block.unrank(ranks)
        ia_parts.append(ia)
        ib_parts.append(ib)
    return np.concatenate(ia_parts), np.concatenate(ib_parts)


def _sample_ranks(rng: np.random.Generator, capacity: int, m: int) -> np.ndarray:
    """``m`` distinct integers from [0, capacity), uniform without replacement."""
    if capacity <= 16 * m or capacity <= 4096:
        return rng.choice(capacity, size=m, replace=False).astype(np.int64)
    # Sparse regime: rejection sampling keeps memory independent of capacity.
    picked = np.unique(rng.integers(0, capacity, size=m))
    while picked.shape[0] < m:
        extra = rng.integers(0, capacity, size=m - picked.shape[0])
        picked = np.unique(np.concatenate([picked, extra]))
    return picked[:m]
