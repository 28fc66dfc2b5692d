"""Synthetic data with known dependence structure.

Two sources:

* a Gaussian Markov tree, a hidden ``w`` with three noisy copies ``x``,
  ``y``, ``z``, so that X and Y are conditionally independent given W but
  not given Z; its conditional mutual information has a closed form;
* an XY spin lattice on an ``L x L`` torus evolved by Metropolis sweeps, with
  one "causal" site that ignores the dynamics and performs a +-0.2 random
  walk while still coupling to its neighbours.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nncmi import kernels
from nncmi.metric import TWO_PI

# ---------------------------------------------------------------- Markov tree


@dataclass(frozen=True)
class MarkovTreeParams:
    sigma_w: float = 1.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    sigma_z: float = 1.0
    dims: int = 1
    n: int = 3500
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_w", "sigma_x", "sigma_y", "sigma_z"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.dims < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


def sample_markov_tree(params: MarkovTreeParams):
    """Draw ``(x, y, z, w)``, each of shape ``(n, dims)``.

    ``w ~ N(0, sigma_w^2)`` and each of ``x, y, z`` is ``w`` plus its own
    independent Gaussian noise, coordinate by coordinate.
    """
    rng = np.random.default_rng(params.seed)
    shape = (params.n, params.dims)
    w = params.sigma_w * rng.standard_normal(shape)
    x = w + params.sigma_x * rng.standard_normal(shape)
    y = w + params.sigma_y * rng.standard_normal(shape)
    z = w + params.sigma_z * rng.standard_normal(shape)
    return x, y, z, w


def markov_tree_covariance(params: MarkovTreeParams) -> np.ndarray:
    """Covariance of one coordinate of ``(x, y, z)``."""
    s = np.array([params.sigma_x, params.sigma_y, params.sigma_z]) ** 2
    return params.sigma_w ** 2 * np.ones((3, 3)) + np.diag(s)


def gaussian_cmi_oracle(params: MarkovTreeParams) -> float:
    """Exact I(X;Y|Z) in nats for the Markov tree."""
    c = markov_tree_covariance(params)
    det = np.linalg.det
    xz = det(c[np.ix_([0, 2], [0, 2])])
    yz = det(c[np.ix_([1, 2], [1, 2])])
    per_dim = 0.5 * math.log(xz * yz / (c[2, 2] * det(c)))
    return params.dims * per_dim


def gaussian_mi_oracle(params: MarkovTreeParams) -> float:
    """Exact I(X;Y) in nats, the large-``sigma_z`` limit of the conditional value."""
    c = markov_tree_covariance(params)
    return params.dims * 0.5 * math.log(c[0, 0] * c[1, 1] / (c[0, 0] * c[1, 1] - c[0, 1] ** 2))


# ------------------------------------------------------------------- XY model

ETA = 0.05
R_MIN, R_MAX = 1e-3, 1e3
_CHUNK = 1000


@dataclass(frozen=True)
class XYParams:
    """Lattice and dynamics settings.

    ``steps`` counts every sweep including the ``burn_in`` ones, so a
    recorded series has ``steps - burn_in`` entries. ``causal_site=None``
    turns the causal walker off.
    """

    L: int = 8
    J: float = 1.0
    T: float = 1.0
    target_accept: float = 0.5
    steps: int = 6000
    burn_in: int = 1000
    causal_site: tuple[int, int] | None = (0, 0)
    walk_step: float = 0.2
    seed: int = 0
    random_order: bool = False
    r0: float = 1.0

    def __post_init__(self):
        if self.L < 3:
            raise ValueError(f"L must be >= 3, got {self.L}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not 0 < self.target_accept < 1:
            raise ValueError(f"target_accept must be in (0, 1), got {self.target_accept}")
        if not 0 <= self.burn_in <= self.steps:
            raise ValueError(f"need 0 <= burn_in <= steps, got {self.burn_in}, {self.steps}")
        if not R_MIN <= self.r0 <= R_MAX:
            raise ValueError(f"r0 must be in [{R_MIN}, {R_MAX}], got {self.r0}")
        if self.causal_site is not None:
            r, c = self.causal_site
            if not (0 <= r < self.L and 0 <= c < self.L):
                raise ValueError(f"causal site {self.causal_site} is off the lattice")

    def flat(self, site: tuple[int, int]) -> int:
        r, c = site
        if not (0 <= r < self.L and 0 <= c < self.L):
            raise ValueError(f"site {site} is off the {self.L}x{self.L} lattice")
        return r * self.L + c


def site_at_distance(params: XYParams, distance: int) -> tuple[int, int]:
    """The site ``distance`` columns to the right of the causal site."""
    if params.causal_site is None:
        raise ValueError("no causal site configured")
    if not 1 <= distance <= params.L // 2:
        raise ValueError(f"distance must be in [1, {params.L // 2}], got {distance}")
    r, c = params.causal_site
    return r, (c + distance) % params.L


class _Streams:
    """Independent random streams, one per kind of draw.

    Keeping them apart makes the drawn values independent of how sweeps
    are batched: a thousand single sweeps see exactly the numbers one
    batch of a thousand sees.
    """

    def __init__(self, seed: int):
        init, coin, prop, unif, order = np.random.SeedSequence(seed).spawn(5)
        self.init = np.random.default_rng(init)
        self.coin = np.random.default_rng(coin)
        self.prop = np.random.default_rng(prop)
        self.unif = np.random.default_rng(unif)
        self.order = np.random.default_rng(order)

    def draw(self, B: int, N: int, r: float, walk_step: float, random_order: bool):
        walk = np.where(self.coin.random(B) < 0.5, walk_step, -walk_step)
        proposals = self.prop.vonmises(0.0, r, size=(B, N))
        uniforms = self.unif.random((B, N))
        if random_order:
            order = np.argsort(self.order.random((B, N)), axis=1, kind="stable").astype(np.int32)
        else:
            order = np.arange(N, dtype=np.int32)[None, :]
        return walk, proposals, uniforms, order


@dataclass
class XYLattice:
    params: XYParams
    angles: np.ndarray
    r: float
    accept_history: float = float("nan")
    t: int = 0
    _streams: _Streams = field(default=None, repr=False)

    @classmethod
    def initial(cls, params: XYParams) -> "XYLattice":
        """I.i.d. uniform angles and the starting concentration ``r0``."""
        streams = _Streams(params.seed)
        angles = streams.init.random((params.L, params.L)) * TWO_PI
        return cls(params, angles, params.r0, _streams=streams)

    @property
    def causal_index(self) -> int:
        p = self.params
        return -1 if p.causal_site is None else p.flat(p.causal_site)

    @property
    def movable(self) -> int:
        return self.params.L ** 2 - (self.causal_index >= 0)

    def sweeps(self, count: int, record=()) -> tuple[np.ndarray, np.ndarray]:
        """Run ``count`` sweeps with the current ``r`` (no adaptation).

        Returns the recorded angles, shape ``(count, len(record))``, and the
        number of accepted proposals in every sweep.
        """
        p = self.params
        N = p.L ** 2
        rec = np.array([p.flat(s) for s in record], dtype=np.int64)
        out = np.empty((count, len(rec)))
        acc = np.empty(count, dtype=np.int64)
        flat = self.angles.reshape(-1)
        for start in range(0, count, _CHUNK):
            B = min(_CHUNK, count - start)
            walk, prop, unif, order = self._streams.draw(B, N, self.r, p.walk_step,
                                                        p.random_order)
            kernels.xy_sweeps(flat, p.L, self.causal_index, p.J, p.T, walk, prop, unif,
                              order, rec, out[start:start + B], acc[start:start + B])
        self.t += count
        if count:
            self.accept_history = acc[-1] / self.movable
        return out, acc

    def adapt(self, accept_rate: float) -> None:
        # r is a concentration, so it moves against the acceptance error:
        # too many acceptances means the proposals should spread out.
        d = self.params.target_accept
        self.r = float(np.clip(self.r * math.exp(-ETA * (accept_rate - d)), R_MIN, R_MAX))

    def energy(self) -> float:
        return xy_energy(self.angles, self.params.J)


def xy_step(lattice: XYLattice, params: XYParams | None = None) -> XYLattice:
    """One sweep in place; adapts ``r`` while still inside the burn-in."""
    if params is not None and params != lattice.params:
        raise ValueError("lattice was built with different parameters")
    in_burn = lattice.t < lattice.params.burn_in
    _, acc = lattice.sweeps(1)
    if in_burn:
        lattice.adapt(acc[0] / lattice.movable)
    return lattice


def burn_in(lattice: XYLattice) -> XYLattice:
    while lattice.t < lattice.params.burn_in:
        xy_step(lattice)
    return lattice


def xy_series(params: XYParams, sites, return_lattice: bool = False):
    """Angles of ``sites`` after every post-burn-in sweep, shape ``(steps - burn_in, len(sites))``."""
    lattice = burn_in(XYLattice.initial(params))
    out, _ = lattice.sweeps(params.steps - params.burn_in, sites)
    return (out, lattice) if return_lattice else out


def xy_energy(angles: np.ndarray, J: float = 1.0) -> float:
    """H = -J * sum over sites of sum over the four neighbours of cos(difference).

    Every bond appears twice in the double sum.
    """
    a = np.asarray(angles, dtype=np.float64)
    bonds = np.cos(a - np.roll(a, 1, axis=0)) + np.cos(a - np.roll(a, 1, axis=1))
    return float(-2.0 * J * bonds.sum())
