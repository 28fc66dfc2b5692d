"""Binned plug-in estimator of I(X;Y|Z).

Every coordinate is cut into equal-width bins. The joint histogram is kept
sparse (only occupied cells are stored), so fine grids over many dimensions
cost memory proportional to the number of samples rather than to the number
of cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nncmi.metric import Block, Dataset

MAX_BINS = 64
MIN_BINS = 5


@dataclass(frozen=True)
class BinningSpec:
    """Equal-width binning of every coordinate.

    ``range_policy`` is ``"data_min_max"`` (each coordinate spans its own
    observed range) or ``"fixed"``, in which case every coordinate spans
    ``[lo, hi]`` and values outside are clipped into the edge bins.
    """

    bins_per_dim: int
    range_policy: str = "data_min_max"
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if int(self.bins_per_dim) != self.bins_per_dim or self.bins_per_dim < 2:
            raise ValueError(f"bins_per_dim must be an integer >= 2, got {self.bins_per_dim}")
        if self.range_policy == "fixed":
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"fixed range needs lo < hi, got ({self.lo}, {self.hi})")
        elif self.range_policy != "data_min_max":
            raise ValueError(f"unknown range policy {self.range_policy!r}")

    @classmethod
    def fixed(cls, bins_per_dim: int, lo: float, hi: float) -> "BinningSpec":
        return cls(bins_per_dim, "fixed", float(lo), float(hi))


def choose_bins(n: int, dims: int) -> BinningSpec:
    """Default grid: ``max(5, floor(n ** (1 / (dims + 2))))`` bins, at most 64."""
    if n < 1 or dims < 1:
        raise ValueError("need n >= 1 and dims >= 1")
    p = dims + 2
    b = int(round(n ** (1.0 / p)))
    # the float root can land a hair either side of an exact integer root
    while b ** p > n:
        b -= 1
    while (b + 1) ** p <= n:
        b += 1
    return BinningSpec(min(MAX_BINS, max(MIN_BINS, b)))


def bin_indices(points: np.ndarray, spec: BinningSpec) -> np.ndarray:
    """Integer bin of every coordinate, shape ``(n, d)``.

    The upper edge of the range belongs to the last bin.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not np.all(np.isfinite(pts)):
        raise ValueError("histogram estimator needs finite data")
    b = spec.bins_per_dim
    if spec.range_policy == "fixed":
        lo = np.full(pts.shape[1], spec.lo)
        hi = np.full(pts.shape[1], spec.hi)
    else:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
    width = hi - lo
    width[width == 0] = 1.0  # a constant coordinate lands in bin 0
    idx = np.floor((pts - lo) / width * b).astype(np.int64)
    return np.clip(idx, 0, b - 1)


def _block_points(block) -> np.ndarray:
    return block.points if isinstance(block, Block) else np.asarray(block, dtype=np.float64)


def _codes(block, spec: BinningSpec) -> np.ndarray:
    """Dense labels ``0..m-1`` for the occupied cells of one block, in lexicographic cell order."""
    idx = bin_indices(_block_points(block), spec)
    b, d = spec.bins_per_dim, idx.shape[1]
    if d * math.log2(b) < 62:
        key = np.ravel_multi_index(idx.T, (b,) * d)
        return np.unique(key, return_inverse=True)[1].reshape(-1)
    return np.unique(idx, axis=0, return_inverse=True)[1].reshape(-1)


def _pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # both label arrays are below n, so the product key fits easily in int64
    key = a * (int(b.max()) + 1) + b
    return np.unique(key, return_inverse=True)[1].reshape(-1)


def _plugin(c_xyz, c_xz, c_yz, c_z, n: int) -> float:
    c_xyz = np.asarray(c_xyz, dtype=np.float64)
    terms = c_xyz / n * np.log(c_xyz * c_z / (np.asarray(c_xz, dtype=np.float64) * c_yz))
    return math.fsum(terms)


def histogram_cmi(data: Dataset, spec: BinningSpec | None = None) -> float:
    """Plug-in I(X;Y|Z) in nats from a sparse joint histogram.

    Without a ``spec`` the grid comes from :func:`choose_bins` with the total
    dimension of the three blocks. Without a ``z`` block this is the plug-in
    mutual information.
    """
    n = data.n
    if spec is None:
        spec = choose_bins(n, sum(b.dim for b in data.blocks))
    cx, cy = _codes(data.x, spec), _codes(data.y, spec)
    cz = _codes(data.z, spec) if data.z is not None else np.zeros(n, dtype=np.int64)
    xz = _pair(cx, cz)
    yz = _pair(cy, cz)
    joint = _pair(xz, cy)
    first = np.unique(joint, return_index=True)[1]  # one sample per occupied cell
    c_xyz = np.bincount(joint)
    c_xz = np.bincount(xz)[xz[first]]
    c_yz = np.bincount(yz)[yz[first]]
    c_z = np.bincount(cz)[cz[first]]
    return _plugin(c_xyz, c_xz, c_yz, c_z, n)


def histogram_cmi_dense(data: Dataset, spec: BinningSpec | None = None) -> float:
    """Same estimate from a dense ``bins ** d`` array; only for small grids."""
    n = data.n
    if spec is None:
        spec = choose_bins(n, sum(b.dim for b in data.blocks))
    b = spec.bins_per_dim

    def flat(block):
        if block is None:
            return np.zeros(n, dtype=np.int64), 1
        idx = bin_indices(_block_points(block), spec)
        return np.ravel_multi_index(idx.T, (b,) * idx.shape[1]), b ** idx.shape[1]

    (fx, mx), (fy, my), (fz, mz) = flat(data.x), flat(data.y), flat(data.z)
    joint = np.zeros(mx * my * mz, dtype=np.int64)
    np.add.at(joint, (fx * my + fy) * mz + fz, 1)
    joint = joint.reshape(mx, my, mz)
    p_xz = joint.sum(axis=1)
    p_yz = joint.sum(axis=0)
    p_z = joint.sum(axis=(0, 1))
    i, j, k = np.nonzero(joint)
    return _plugin(joint[i, j, k], p_xz[i, k], p_yz[j, k], p_z[k], n)
