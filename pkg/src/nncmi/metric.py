"""Metrics, sorted neighbour rows and weighted balls.

Every estimator in the package works from per-space neighbour rows: for
each seed, all sample indices sorted by distance to it. Balls of a given
size are read off the front of a row; points tied on the ball boundary
share the leftover weight equally.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from nncmi import kernels

TWO_PI = 2.0 * math.pi

# Rows of the distance matrix are produced in chunks of about this many
# entries so large n never materialises a dense n x n array.
_CHUNK_ENTRIES = 4_000_000


class Metric:
    """A distance on the points of a :class:`Block`.

    Subclasses implement :meth:`pairwise`; :meth:`rows` exists so that a
    precomputed matrix can stand in for a point set.
    """

    name = "metric"

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rows(self, points: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        return self.pairwise(points[seeds], points)

    def validate(self, points: np.ndarray) -> None:
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self) -> int:
        return hash((type(self).__name__, repr(self)))


def _l2(parts):
    # Coordinates accumulated in column order so the sum is reproducible.
    total = None
    for d in parts:
        total = d * d if total is None else total + d * d
    return np.sqrt(total)


class Euclidean(Metric):
    name = "euclidean"

    def pairwise(self, a, b):
        if a.shape[1] == 1:
            return np.abs(a[:, 0][:, None] - b[:, 0][None, :])
        return _l2(a[:, k][:, None] - b[:, k][None, :] for k in range(a.shape[1]))


class Circular(Metric):
    """Arc length on the circle per coordinate, combined by the L2 norm."""

    name = "circular"

    def pairwise(self, a, b):
        def arc(k):
            d = np.abs(a[:, k][:, None] - b[:, k][None, :])
            return np.minimum(d, TWO_PI - d)

        if a.shape[1] == 1:
            return arc(0)
        return _l2(arc(k) for k in range(a.shape[1]))

    def validate(self, points):
        if points.size and (points.min() < 0.0 or points.max() >= TWO_PI):
            raise ValueError("circular points must lie in [0, 2*pi)")


class DiscreteCount(Metric):
    """Absolute difference of integer labels (e.g. spike counts)."""

    name = "discrete"

    def pairwise(self, a, b):
        return np.abs(a[:, 0][:, None] - b[:, 0][None, :])

    def validate(self, points):
        if points.shape[1] != 1:
            raise ValueError("discrete_count metric takes one label per sample")
        if not np.all(points == np.round(points)):
            raise ValueError("discrete_count metric needs integer labels")


class MaxProduct(Metric):
    """Lift of two metrics to the product space by taking the maximum.

    Points are the concatenated coordinates; ``split`` is the number of
    columns that belong to the first factor.
    """

    name = "max_product"

    def __init__(self, first: Metric, second: Metric, split: int):
        if split < 1:
            raise ValueError("split must leave at least one column for each factor")
        self.first = first
        self.second = second
        self.split = split

    def pairwise(self, a, b):
        s = self.split
        if a.shape[1] <= s:
            raise ValueError(f"max_product split {s} leaves no columns for the second factor")
        return np.maximum(self.first.pairwise(a[:, :s], b[:, :s]),
                          self.second.pairwise(a[:, s:], b[:, s:]))

    def validate(self, points):
        if points.shape[1] <= self.split:
            raise ValueError(f"max_product split {self.split} leaves no columns for the second factor")
        self.first.validate(points[:, : self.split])
        self.second.validate(points[:, self.split:])

    def __repr__(self):
        return f"MaxProduct({self.first!r}, {self.second!r}, split={self.split})"


class Precomputed(Metric):
    """The block's ``points`` already are the n x n distance matrix."""

    name = "precomputed"

    def pairwise(self, a, b):
        raise TypeError("precomputed distances have no pairwise form; use rows()")

    def rows(self, points, seeds):
        return np.array(points[seeds], dtype=np.float64)

    def validate(self, points):
        n = points.shape[0]
        if points.shape != (n, n):
            raise ValueError("precomputed distances must be a square matrix")
        if not np.array_equal(points, points.T):
            raise ValueError("precomputed distances must be symmetric")
        if np.any(np.diag(points) != 0) or np.any(points < 0):
            raise ValueError("precomputed distances need a zero diagonal and no negatives")


EUCLIDEAN = Euclidean()
CIRCULAR = Circular()
DISCRETE = DiscreteCount()

_NAMED = {"euclidean": EUCLIDEAN, "circular": CIRCULAR, "discrete": DISCRETE,
          "discrete_count": DISCRETE}


def get_metric(name: str | Metric) -> Metric:
    if isinstance(name, Metric):
        return name
    try:
        return _NAMED[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(_NAMED)}") from None


@dataclass(frozen=True)
class NeighbourIndex:
    """Per-seed neighbour rows, nearest first.

    ``rows[i, :length[i]]`` lists sample indices by distance from seed
    ``i``. The seed itself sits at position 0 in a group of its own;
    ``brk[i, p]`` is 1 where a new tie group starts. Rows may be cut after
    ``max_h`` entries, but never inside a tie group. Entries past
    ``length[i]`` are padding (-1).
    """

    rows: np.ndarray
    brk: np.ndarray
    length: np.ndarray
    max_h: int
    distances: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.rows[i, : self.length[i]]

    def tie_groups(self, i: int) -> list[np.ndarray]:
        """Row ``i`` split into its tie groups."""
        ln = self.length[i]
        starts = np.flatnonzero(self.brk[i, :ln])
        return np.split(self.rows[i, :ln], starts[1:])


@dataclass
class Block:
    """``n`` samples from one space together with the metric on it."""

    points: np.ndarray
    metric: Metric = field(default_factory=lambda: EUCLIDEAN)
    _index: NeighbourIndex | None = field(default=None, init=False, repr=False, compare=False)
    _dist: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.metric = get_metric(self.metric)
        pts = np.asarray(self.points)
        if pts.dtype == object:
            raise ValueError("points have inconsistent dimensions")
        pts = np.array(pts, dtype=np.float64)
        if pts.ndim == 1 and not isinstance(self.metric, Precomputed):
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError(f"expected an (n, d) array of points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.metric.validate(pts)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def distance_rows(self, seeds) -> np.ndarray:
        """Fresh (writable) distance rows for the given seeds."""
        if self._dist is not None:
            return self._dist[np.asarray(seeds)]
        return self.metric.rows(self.points, np.asarray(seeds))

    def precompute_distances(self) -> None:
        """Keep the full n x n matrix so repeated estimators skip recomputing it."""
        if self._dist is None:
            self._dist = distance_matrix(self)

    def index(self, max_h: int | None = None) -> NeighbourIndex:
        """Cached neighbour index covering balls up to ``max_h`` points."""
        max_h = self.n if max_h is None else max_h
        if self._index is None or self._index.max_h < max_h:
            self._index = build_index(self, max_h=max_h)
        return self._index


def distance_matrix(block: Block, metric: Metric | None = None) -> np.ndarray:
    """Full symmetric distance matrix of a block (zero diagonal)."""
    if metric is not None:
        block = Block(block.points if isinstance(block, Block) else block, metric)
    elif not isinstance(block, Block):
        block = Block(block)
    return block.distance_rows(np.arange(block.n))


def _group_breaks(d: np.ndarray, rtol: float) -> np.ndarray:
    brk = np.ones(d.shape, dtype=np.uint8)
    if rtol > 0.0:
        brk[:, 1:] = (d[:, 1:] - d[:, :-1]) > rtol * np.abs(d[:, 1:])
    else:
        brk[:, 1:] = d[:, 1:] != d[:, :-1]
    return brk


def _sort_rows(D: np.ndarray, seeds: np.ndarray, max_h: int, rtol: float):
    """Sorted neighbour rows for a chunk of seeds from their distance rows."""
    c, n = D.shape
    D[np.arange(c), seeds] = -1.0  # seed first, in a group of its own
    if 4 * max_h >= n:
        # a full sort beats partition-then-sort unless the cut is deep
        idx = np.argsort(D, axis=1)
        if max_h < n:
            v = np.take_along_axis(D, idx[:, max_h - 1: max_h], axis=1)
            length = (D <= v).sum(axis=1).astype(np.int32)
            idx = idx[:, : int(length.max())]
        else:
            length = np.full(c, n, dtype=np.int32)
    else:
        kth = max_h - 1
        idx = np.argpartition(D, kth, axis=1)
        v = np.take_along_axis(D, idx[:, kth: kth + 1], axis=1)
        length = (D <= v).sum(axis=1).astype(np.int32)
        m = int(length.max())
        if m > max_h:
            idx = np.argpartition(D, m - 1, axis=1)
        idx = idx[:, :m]
    d_sorted = np.take_along_axis(D, idx, axis=1)
    if 4 * max_h < n:
        order = np.argsort(d_sorted, axis=1)
        idx = np.take_along_axis(idx, order, axis=1)
        d_sorted = np.take_along_axis(d_sorted, order, axis=1)
    brk = _group_breaks(d_sorted, rtol)
    width = idx.shape[1]
    pad = np.arange(width)[None, :] >= length[:, None]
    brk[pad] = 1
    rows = idx.astype(np.int32)
    rows[pad] = -1
    # within a tie group the order is ascending sample index
    kernels.sort_tie_groups(rows, brk, length)
    d_sorted[pad] = np.inf
    d_sorted[:, 0] = 0.0
    return rows, brk, length, d_sorted


def _assemble(parts, n):
    width = max(p[1].shape[1] for p in parts)
    rows = np.full((n, width), -1, dtype=np.int32)
    brk = np.ones((n, width), dtype=np.uint8)
    length = np.empty(n, dtype=np.int32)
    for seeds, r, b, ln in parts:
        rows[seeds, : r.shape[1]] = r
        brk[seeds, : b.shape[1]] = b
        length[seeds] = ln
    return rows, brk, length


def _generic_parts(block: Block, seeds: np.ndarray, max_h: int, rtol: float, keep: bool):
    chunk = max(1, _CHUNK_ENTRIES // block.n)
    parts, dists = [], []
    for start in range(0, len(seeds), chunk):
        s = seeds[start: start + chunk]
        r, b, ln, d = _sort_rows(block.distance_rows(s), s, max_h, rtol)
        parts.append((s, r, b, ln))
        if keep:
            dists.append((s, d))
    return parts, dists


def build_index(source, max_h: int | None = None, rtol: float = 0.0,
                keep_distances: bool = False) -> NeighbourIndex:
    """Sort every row of a distance matrix.

    ``source`` is a :class:`Block` or a square symmetric distance matrix.
    ``max_h`` bounds the largest ball that will be requested; rows are cut
    after that many entries (extended to finish any tie group). ``rtol``
    groups distances within that relative gap into one tie group; the
    default 0 means exact equality.
    """
    if not isinstance(source, Block):
        source = Block(np.asarray(source, dtype=np.float64), Precomputed())
    n = source.n
    max_h = n if max_h is None else int(max_h)
    if not 1 <= max_h <= n:
        raise ValueError(f"max_h must be in [1, {n}], got {max_h}")
    if rtol > 0.0:
        max_h = n  # chained near-ties can reach arbitrarily far
    seeds = np.arange(n)

    fast = (kernels.neighbour_rows_1d is not None and rtol == 0.0 and not keep_distances
            and type(source.metric) in (Euclidean, Circular) and source.dim == 1)
    if fast:
        values = source.points[:, 0]
        perm = np.argsort(values, kind="stable").astype(np.int32)
        xs = np.ascontiguousarray(values[perm])
        # a tie group holds at most two runs of equal values, one either side
        runs = np.diff(np.flatnonzero(np.diff(xs, prepend=np.nan, append=np.nan) != 0))
        cap = min(n, max_h + 2 * int(runs.max()) + 1)
        rows = np.empty((n, cap), dtype=np.int32)
        brk = np.empty((n, cap), dtype=np.uint8)
        length = np.empty(n, dtype=np.int32)
        bad = np.zeros(n, dtype=np.uint8)
        kernels.neighbour_rows_1d(xs, perm, isinstance(source.metric, Circular), max_h,
                                  rows, brk, length, bad)
        kernels.sort_tie_groups(rows, brk, length)
        redo = np.flatnonzero(bad)
        parts = [(seeds, rows, brk, length)]
        if redo.size:
            parts += _generic_parts(source, redo, max_h, rtol, False)[0]
            rows, brk, length = _assemble(parts, n)
        return NeighbourIndex(rows, brk, length, max_h)

    parts, dists = _generic_parts(source, seeds, max_h, rtol, keep_distances)
    rows, brk, length = _assemble(parts, n)
    distances = None
    if keep_distances:
        distances = np.full(rows.shape, np.inf)
        for s, d in dists:
            distances[s, : d.shape[1]] = d
    return NeighbourIndex(rows, brk, length, max_h, distances)


@dataclass(frozen=True)
class WeightedBall:
    """Members of a ball around ``seed`` and their weights (summing to ``h``)."""

    seed: int
    members: np.ndarray
    weights: np.ndarray
    h: int

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def exact_weights(self) -> list[Fraction]:
        """The weights as exact rationals: 1 inside, ``(h - c) / b`` on the boundary.

        Float weights like ``1/3`` cannot add back to an integer exactly, so
        checks of the total should use these.
        """
        interior = int(np.count_nonzero(self.weights == 1.0))
        boundary = int(np.count_nonzero((self.weights > 0.0) & (self.weights < 1.0)))
        edge = Fraction(self.h - interior, boundary) if boundary else Fraction(0)
        return [Fraction(1) if w == 1.0 else edge if w > 0.0 else Fraction(0)
                for w in self.weights]


def ball_extent(index: NeighbourIndex, i: int, h: int) -> tuple[int, int]:
    """``(end, interior)``: the ball is ``row[:end]``; ``row[interior:end]``
    is the boundary tie group when ``end > h``."""
    brk = index.brk[i]
    end = h
    ln = index.length[i]
    while end < ln and not brk[end]:
        end += 1
    if end == h:
        return h, h
    c = h - 1
    while not brk[c]:
        c -= 1
    return end, c


def ball(index: NeighbourIndex, seed: int, h: int, truncate: bool = False) -> WeightedBall:
    """Smallest ball around ``seed`` with total weight ``h``.

    If the last tie group would overshoot, each of its ``b`` members gets
    ``(h - c) / b`` where ``c`` counts the strictly closer points (seed
    included). ``truncate`` drops the boundary group instead; it exists
    only to show the fractional rule matters.
    """
    if not 1 <= h <= index.n:
        raise ValueError(f"h must be in [1, {index.n}], got {h}")
    if h > index.max_h:
        raise ValueError(f"index was built for balls up to {index.max_h} points")
    end, c = ball_extent(index, seed, h)
    members = index.rows[seed, :end].copy()
    weights = np.ones(end)
    if end > c:
        weights[c:] = 0.0 if truncate else (h - c) / (end - c)
    return WeightedBall(seed, members, weights, h)


def weighted_intersection(balls) -> float:
    """Sum over common members of the product of their weights.

    Members sharing the same weight pattern are counted first and the
    patterns are added in descending lexicographic order, the order the
    batch kernels use, so the value is independent of member order.
    """
    balls = list(balls)
    if not balls:
        return 0.0
    common = {j: (w,) for j, w in zip(balls[0].members.tolist(), balls[0].weights.tolist())}
    for b in balls[1:]:
        other = dict(zip(b.members.tolist(), b.weights.tolist()))
        common = {j: w + (other[j],) for j, w in common.items() if j in other}
    total = 0.0
    for pattern, count in sorted(Counter(common.values()).items(), reverse=True):
        prod = pattern[0]
        for w in pattern[1:]:
            prod = prod * w
        total += count * prod
    return total


def as_block(obj, metric: Metric | str = EUCLIDEAN) -> Block:
    return obj if isinstance(obj, Block) else Block(obj, get_metric(metric))


@dataclass
class Dataset:
    """Aligned samples ``(x_i, y_i, z_i)``; ``z`` may be omitted for MI."""

    x: Block
    y: Block
    z: Block | None = None

    def __post_init__(self):
        self.x = as_block(self.x)
        self.y = as_block(self.y)
        if self.z is not None:
            self.z = as_block(self.z)
        sizes = {b.n for b in self.blocks}
        if len(sizes) != 1:
            raise ValueError(f"blocks have different sample counts: {sorted(sizes)}")

    @classmethod
    def from_arrays(cls, x, y, z=None, metric: Metric | str = EUCLIDEAN) -> "Dataset":
        m = get_metric(metric)
        return cls(Block(x, m), Block(y, m), None if z is None else Block(z, m))

    def precompute_distances(self) -> "Dataset":
        for b in self.blocks:
            b.precompute_distances()
        return self

    @property
    def blocks(self) -> list[Block]:
        return [b for b in (self.x, self.y, self.z) if b is not None]

    @property
    def n(self) -> int:
        return self.x.n
