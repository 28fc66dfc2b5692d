"""Count-ratio conditional mutual information with analytic bias correction.

For every seed ``i`` three balls of ``h`` points are grown around it, one
per space. With ``h_xz``, ``h_yz`` and ``h_xyz`` the (weighted) sizes of
the pairwise and triple intersections, each seed contributes
``log(h_xyz * h / (h_xz * h_yz))``. Under conditional independence the
triple intersection is hypergeometric given the pairwise ones, which gives
the expected value of that term in closed form; the estimate is the mean
term minus that bias, maximised over ``h``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from nncmi import kernels
from nncmi.metric import Block, Dataset, NeighbourIndex, ball, weighted_intersection

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

Counts = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class PointCounts:
    i: int
    h: int
    h_xz: float
    h_yz: float
    h_xyz: float


@dataclass
class CmiEstimate:
    value: float
    h_star: int
    raw: float
    bias: float
    per_point: np.ndarray | None = None
    # objective (raw - bias) at every h the search evaluated
    evaluated: dict[int, float] = field(default_factory=dict)


def point_counts(indices: tuple[NeighbourIndex, NeighbourIndex, NeighbourIndex],
                 seed: int, h: int) -> PointCounts:
    """Intersection sizes for one seed, from explicit weighted balls."""
    ix, iy, iz = indices
    bx, by, bz = (ball(ix, seed, h), ball(iy, seed, h), ball(iz, seed, h))
    return PointCounts(seed, h,
                       weighted_intersection([bx, bz]),
                       weighted_intersection([by, bz]),
                       weighted_intersection([bx, by, bz]))


def cmi_terms(h_xz, h_yz, h_xyz, h: int) -> np.ndarray:
    h_xz = np.asarray(h_xz, dtype=np.float64)
    h_yz = np.asarray(h_yz, dtype=np.float64)
    h_xyz = np.asarray(h_xyz, dtype=np.float64)
    if np.any(h_xyz <= 0) or np.any(h_xz <= 0) or np.any(h_yz <= 0):
        raise RuntimeError("zero intersection count; the seed must lie in every ball")
    return np.log(h_xyz * h / (h_xz * h_yz))


def cmi_point_term(c: PointCounts) -> float:
    return float(cmi_terms(c.h_xz, c.h_yz, c.h_xyz, c.h))


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def hypergeometric_support(h: int, h_xz: int, h_yz: int) -> range:
    return range(max(1, h_xz + h_yz - h), min(h_xz, h_yz) + 1)


def hypergeometric_pmf(h: int, h_xz: int, h_yz: int, r: int) -> float:
    """P(h_xyz = r) given the pairwise counts, under conditional independence.

    The seed is in every ball; of the other ``h - 1`` points of the Z-ball,
    ``h_xz - 1`` are also in the X-ball, and ``h_yz - 1`` are drawn for the
    Y-ball.
    """
    if not (1 <= h_xz <= h and 1 <= h_yz <= h):
        raise ValueError(f"need 1 <= h_xz, h_yz <= h, got h={h}, h_xz={h_xz}, h_yz={h_yz}")
    if r not in hypergeometric_support(h, h_xz, h_yz):
        return 0.0
    return math.exp(_log_comb(h_xz - 1, r - 1) + _log_comb(h - h_xz, h_yz - r)
                    - _log_comb(h - 1, h_yz - 1))


def integer_counts(counts, h: int) -> np.ndarray:
    """Weighted counts rounded to the nearest integer in ``[1, h]``."""
    return np.clip(np.floor(np.asarray(counts, dtype=np.float64) + 0.5), 1, h).astype(np.int64)


def point_bias(c: PointCounts) -> float:
    a = int(integer_counts(c.h_xz, c.h))
    b = int(integer_counts(c.h_yz, c.h))
    return math.fsum(hypergeometric_pmf(c.h, a, b, r) * math.log(r * c.h / (a * b))
                     for r in hypergeometric_support(c.h, a, b))


def _log_table(h: int) -> np.ndarray:
    logs = np.log(np.arange(h + 1, dtype=np.float64)[1:])
    return np.concatenate([[0.0], logs])


def bias_terms(h_xz, h_yz, h: int) -> np.ndarray:
    """Per-seed bias for a whole batch of pairwise counts."""
    a = integer_counts(h_xz, h)
    b = integer_counts(h_yz, h)
    out = np.empty(len(a))
    kernels.hypergeom_bias(h, a, b, _log_table(h), out)
    return out


class BallCounter:
    """Batch intersection counts for every seed at a given ``h``."""

    def __init__(self, data: Dataset, max_h: int, truncate: bool = False):
        if data.z is None:
            raise ValueError("conditional estimates need a z block")
        self.n = data.n
        self.max_h = max_h
        self.truncate = truncate
        self._ix = data.x.index(max_h)
        self._iy = data.y.index(max_h)
        self._iz = data.z.index(max_h)

    def __call__(self, h: int) -> Counts:
        if not 1 <= h <= self.max_h:
            raise ValueError(f"h must be in [1, {self.max_h}], got {h}")
        out = np.empty((3, self.n))
        ix, iy, iz = self._ix, self._iy, self._iz
        kernels.ball_counts(ix.rows, ix.brk, ix.length, iy.rows, iy.brk, iy.length,
                            iz.rows, iz.brk, iz.length, h, self.truncate,
                            out[0], out[1], out[2])
        return out[0], out[1], out[2]


def _check_h(h: int, n: int, lo: int = 1) -> None:
    if not lo <= h <= n:
        raise ValueError(f"h must be in [{lo}, {n}], got {h}")


def raw_cmi(data: Dataset, h: int, counts: Callable[[int], Counts] | None = None) -> float:
    _check_h(h, data.n)
    counts = counts or BallCounter(data, h)
    h_xz, h_yz, h_xyz = counts(h)
    return math.fsum(cmi_terms(h_xz, h_yz, h_xyz, h)) / data.n


def total_bias(data: Dataset, h: int, counts: Callable[[int], Counts] | None = None) -> float:
    _check_h(h, data.n)
    counts = counts or BallCounter(data, h)
    h_xz, h_yz, _ = counts(h)
    return math.fsum(bias_terms(h_xz, h_yz, h)) / data.n


def golden_section_max(f: Callable[[int], float], lo: int, hi: int,
                       min_width: int = 8) -> tuple[int, dict[int, float]]:
    """Maximise ``f`` over the integers in ``[lo, hi]``.

    Golden-section narrowing until the bracket is narrower than
    ``min_width``, then an exhaustive scan of what is left. Evaluations are
    memoised; the best evaluated point wins, smallest ``h`` on ties.
    """
    cache: dict[int, float] = {}

    def g(h: int) -> float:
        if h not in cache:
            cache[h] = f(h)
        return cache[h]

    a, b = lo, hi
    while b - a >= min_width:
        step = int(round((b - a) * INVPHI))
        c, d = b - step, a + step
        if g(c) >= g(d):
            b = d
        else:
            a = c
    for h in range(a, b + 1):
        g(h)
    best = max(cache, key=lambda h: (cache[h], -h))
    return best, cache


def default_h_range(n: int) -> tuple[int, int]:
    return 2, min(n, max(3, n // 2))


def estimate_cmi(data: Dataset, h_range: tuple[int, int] | None = None,
                 search: str = "golden", counts: Callable[[int], Counts] | None = None,
                 truncate: bool = False) -> CmiEstimate:
    """Bias-corrected estimate of I(X;Y|Z) in nats, maximised over ``h``.

    ``search="exhaustive"`` evaluates every ``h`` in the range, which is
    useful for checking that the objective is unimodal. ``counts`` replaces
    the batch counter (any callable ``h -> (h_xz, h_yz, h_xyz)``).
    """
    n = data.n
    h_min, h_max = h_range if h_range is not None else default_h_range(n)
    if not 2 <= h_min < h_max <= n:
        raise ValueError(f"need 2 <= h_min < h_max <= n={n}, got ({h_min}, {h_max})")
    if counts is None:
        counts = BallCounter(data, h_max, truncate=truncate)

    detail: dict[int, tuple[float, float, np.ndarray]] = {}

    def objective(h: int) -> float:
        h_xz, h_yz, h_xyz = counts(h)
        terms = cmi_terms(h_xz, h_yz, h_xyz, h)
        raw = math.fsum(terms) / n
        bias = math.fsum(bias_terms(h_xz, h_yz, h)) / n
        detail[h] = (raw, bias, terms)
        return raw - bias

    if search == "golden":
        h_star, evaluated = golden_section_max(objective, h_min, h_max)
    elif search == "exhaustive":
        evaluated = {h: objective(h) for h in range(h_min, h_max + 1)}
        h_star = max(evaluated, key=lambda h: (evaluated[h], -h))
    else:
        raise ValueError(f"unknown search {search!r}")
    raw, bias, terms = detail[h_star]
    return CmiEstimate(raw - bias, h_star, raw, bias, terms, dict(sorted(evaluated.items())))


def mi_terms(h_xy, n: int, h: int) -> np.ndarray:
    return np.log(n * np.asarray(h_xy, dtype=np.float64) / (h * h))


def estimate_mi(x: Block, y: Block, h: int) -> float:
    """Count-based mutual information at a fixed ``h`` (no bias correction)."""
    data = Dataset(x, y)
    n = data.n
    _check_h(h, n)
    ix, iy = data.x.index(h), data.y.index(h)
    h_xy = np.empty(n)
    kernels.ball_counts_pair(ix.rows, ix.brk, ix.length, iy.rows, iy.brk, iy.length,
                             h, False, h_xy)
    return math.fsum(mi_terms(h_xy, n, h)) / n


def interaction_information(data: Dataset, h: int | None = None) -> float:
    """I(X;Y;Z) = I(X;Y) - I(X;Y|Z), both count estimates at one shared ``h``.

    Without ``h`` the shared value is the one chosen for the conditional
    estimate. Neither term is bias corrected, so the difference keeps
    whatever bias gap the two count forms have at that ``h``.
    """
    if h is None:
        h = estimate_cmi(data).h_star
    return estimate_mi(data.x, data.y, h) - raw_cmi(data, h)
