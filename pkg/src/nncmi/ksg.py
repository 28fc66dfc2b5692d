"""KSG (Kraskov-Stoegbauer-Grassberger) estimators and their conditional forms.

The product space uses the maximum of the per-space distances. Variant 1
counts points strictly inside the distance to the k-th product-space
neighbour; variant 2 gives every space its own radius, the largest
per-space distance among the k nearest product-space neighbours, and
counts with ``<=``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nncmi.metric import Block, Dataset
from nncmi.special import digamma

_CHUNK_ENTRIES = 1_000_000


@dataclass(frozen=True)
class OuterCounts:
    """Outer counts for one seed.

    ``counts`` is ``(k_x, k_y)`` for mutual information and
    ``(k_z, k_xz, k_yz)`` for the conditional form. ``radii`` holds the
    per-space radii of variant 2 (empty for variant 1).
    """

    i: int
    k: int
    d_star: float
    counts: tuple[int, ...]
    variant: int
    radii: tuple[float, ...] = ()


def _check(k: int, n: int, variant: int) -> None:
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")


def _k_nearest(prod: np.ndarray, k: int):
    """Distance to the k-th neighbour and a mask of the k nearest.

    Ties at the k-th distance are resolved in favour of lower indices.
    """
    rows = np.arange(prod.shape[0])
    kth = np.argpartition(prod, k - 1, axis=1)[:, k - 1]
    d_star = prod[rows, kth]
    lt = prod < d_star[:, None]
    eq = prod == d_star[:, None]
    need = k - lt.sum(axis=1)
    chosen = lt | (eq & (np.cumsum(eq, axis=1) <= need[:, None]))
    return d_star, chosen


def _chunk_counts(blocks: list[Block], seeds: np.ndarray, k: int, variant: int):
    d = [b.distance_rows(seeds) for b in blocks]
    rows = np.arange(len(seeds))
    for ds in d:
        ds[rows, seeds] = np.inf
    prod = d[0]
    for ds in d[1:]:
        prod = np.maximum(prod, ds)
    d_star, chosen = _k_nearest(prod, k)
    if variant == 1:
        inside = [ds < d_star[:, None] for ds in d]
        radii = None
    else:
        radii = [np.max(np.where(chosen, ds, -np.inf), axis=1) for ds in d]
        inside = [ds <= r[:, None] for ds, r in zip(d, radii)]
    if len(blocks) == 2:
        counts = [inside[0].sum(axis=1), inside[1].sum(axis=1)]
    else:
        in_x, in_y, in_z = inside
        counts = [in_z.sum(axis=1), (in_x & in_z).sum(axis=1), (in_y & in_z).sum(axis=1)]
    return d_star, counts, radii


def outer_counts(blocks: list[Block], k: int, variant: int):
    """Batch outer counts for every seed.

    Returns ``(d_star, counts, radii)`` with ``counts`` a list of integer
    arrays in the order documented on :class:`OuterCounts`.
    """
    n = blocks[0].n
    _check(k, n, variant)
    chunk = max(1, _CHUNK_ENTRIES // n)
    parts = [_chunk_counts(blocks, np.arange(s, min(n, s + chunk)), k, variant)
             for s in range(0, n, chunk)]
    d_star = np.concatenate([p[0] for p in parts])
    counts = [np.concatenate([p[1][j] for p in parts]).astype(np.int64)
              for j in range(len(parts[0][1]))]
    radii = None
    if variant == 2:
        radii = [np.concatenate([p[2][j] for p in parts]) for j in range(len(blocks))]
    return d_star, counts, radii


def _single(blocks: list[Block], seed: int, k: int, variant: int) -> OuterCounts:
    _check(k, blocks[0].n, variant)
    d_star, counts, radii = _chunk_counts(blocks, np.array([seed]), k, variant)
    return OuterCounts(seed, k, float(d_star[0]), tuple(int(c[0]) for c in counts), variant,
                       tuple(float(r[0]) for r in radii) if radii is not None else ())


def outer_counts_mi(x: Block, y: Block, seed: int, k: int, variant: int) -> OuterCounts:
    return _single([x, y], seed, k, variant)


def outer_counts_cmi(x: Block, y: Block, z: Block, seed: int, k: int, variant: int) -> OuterCounts:
    return _single([x, y, z], seed, k, variant)


def ksg_mi_from_counts(k_x, k_y, n: int, k: int, variant: int) -> float:
    k_x = np.asarray(k_x, dtype=np.float64)
    k_y = np.asarray(k_y, dtype=np.float64)
    if variant == 1:
        terms = digamma(k_x + 1) + digamma(k_y + 1)
        return float(digamma(k) + digamma(n) - math.fsum(terms) / n)
    terms = digamma(k_x) + digamma(k_y)
    return float(digamma(k) - 1.0 / k + digamma(n) - math.fsum(terms) / n)


def ksg_cmi_from_counts(k_z, k_xz, k_yz, k: int, variant: int) -> float:
    k_z = np.asarray(k_z, dtype=np.float64)
    k_xz = np.asarray(k_xz, dtype=np.float64)
    k_yz = np.asarray(k_yz, dtype=np.float64)
    n = len(k_z)
    if variant == 1:
        terms = digamma(k_z + 1) - digamma(k_xz + 1) - digamma(k_yz + 1)
        return float(digamma(k) + math.fsum(terms) / n)
    # -1/k_xz and -1/k_yz inside the sum, as the estimator is usually printed
    terms = digamma(k_z) - digamma(k_xz) - 1.0 / k_xz - digamma(k_yz) - 1.0 / k_yz
    return float(digamma(k) - 2.0 / k + math.fsum(terms) / n)


def ksg_mi(data: Dataset, k: int = 4, variant: int = 1) -> float:
    """KSG estimate of I(X;Y) in nats."""
    _, (k_x, k_y), _ = outer_counts([data.x, data.y], k, variant)
    return ksg_mi_from_counts(k_x, k_y, data.n, k, variant)


def ksg_cmi(data: Dataset, k: int = 4, variant: int = 1) -> float:
    """KSG-style estimate of I(X;Y|Z) in nats."""
    if data.z is None:
        raise ValueError("conditional estimates need a z block")
    _, (k_z, k_xz, k_yz), _ = outer_counts([data.x, data.y, data.z], k, variant)
    return ksg_cmi_from_counts(k_z, k_xz, k_yz, k, variant)
