import math

import numpy as np
import pytest

from nncmi import kernels
from nncmi.generators import (R_MAX, R_MIN, MarkovTreeParams, XYLattice, XYParams,
                              gaussian_cmi_oracle, gaussian_mi_oracle, markov_tree_covariance,
                              sample_markov_tree, site_at_distance, xy_energy, xy_series, xy_step)
from nncmi.kl import estimate_cmi
from nncmi.metric import TWO_PI, Dataset
from nncmi.transfer import transfer_entropy

# ------------------------------------------------------------- Markov tree

FROZEN_ORACLE = {0.25: 0.00155, 0.5: 0.01409, 1.0: 0.05889, 2.0: 0.11003, 4.0: 0.13399}


@pytest.mark.parametrize("sigma_z,value", sorted(FROZEN_ORACLE.items()))
def test_frozen_oracle_values(sigma_z, value):
    assert gaussian_cmi_oracle(MarkovTreeParams(sigma_z=sigma_z)) == pytest.approx(value, abs=5e-6)


def test_oracle_quadrature():
    """Integrate the CMI density on a grid, with every density obtained by
    integrating the hidden variable out numerically."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(60)
    weights = weights / math.sqrt(2 * math.pi)  # expectation over w ~ N(0, 1)
    step = 0.2
    g = np.arange(-9.0, 9.0 + step / 2, step)

    def phi(u):
        return np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)

    # per-node kernels on the grid, shape (len(g), nodes)
    K = phi(g[:, None] - nodes[None, :])
    p_xyz = np.einsum("ak,bk,ck,k->abc", K, K, K, weights)
    p_xz = np.einsum("ak,ck,k->ac", K, K, weights)
    p_z = K @ weights
    ratio = p_xyz * p_z[None, None, :] / (p_xz[:, None, :] * p_xz[None, :, :])
    value = float(np.sum(p_xyz * np.log(ratio)) * step ** 3)
    assert value == pytest.approx(gaussian_cmi_oracle(MarkovTreeParams()), abs=1e-6)


def test_oracle_limits():
    assert gaussian_cmi_oracle(MarkovTreeParams(sigma_z=1e-4)) < 1e-7
    big = gaussian_cmi_oracle(MarkovTreeParams(sigma_z=1e4))
    assert big == pytest.approx(gaussian_mi_oracle(MarkovTreeParams()), abs=1e-8)
    assert gaussian_mi_oracle(MarkovTreeParams()) == pytest.approx(0.5 * math.log(4 / 3))
    two = MarkovTreeParams(dims=2)
    assert gaussian_cmi_oracle(two) == pytest.approx(2 * gaussian_cmi_oracle(MarkovTreeParams()))


def test_covariance_matches_samples():
    params = MarkovTreeParams(sigma_w=1.5, sigma_x=0.7, sigma_y=1.2, sigma_z=2.0, n=100_000,
                              seed=1)
    x, y, z, _ = sample_markov_tree(params)
    cov = markov_tree_covariance(params)
    sample = np.cov(np.hstack([x, y, z]).T)
    for a in range(3):
        # standard error of a Gaussian sample variance is var * sqrt(2 / (n - 1))
        se = cov[a, a] * math.sqrt(2 / (params.n - 1))
        assert abs(sample[a, a] - cov[a, a]) < 3 * se
    assert np.allclose(sample, cov, atol=0.05)


def test_small_noise_tracks_hidden():
    x, _, _, w = sample_markov_tree(MarkovTreeParams(sigma_x=1e-3, n=10_000, dims=2, seed=2))
    for d in range(2):
        assert np.corrcoef(x[:, d], w[:, d])[0, 1] > 0.999


def test_markov_tree_deterministic_and_shaped():
    p = MarkovTreeParams(dims=3, n=50, seed=4)
    a, b = sample_markov_tree(p), sample_markov_tree(p)
    for u, v in zip(a, b):
        assert u.shape == (50, 3) and np.array_equal(u, v)


def test_markov_tree_validation():
    with pytest.raises(ValueError):
        MarkovTreeParams(sigma_x=0.0)
    with pytest.raises(ValueError):
        MarkovTreeParams(dims=0)


def test_conditioning_on_hidden_is_near_zero():
    x, y, _, w = sample_markov_tree(MarkovTreeParams(n=3500, seed=5))
    assert estimate_cmi(Dataset.from_arrays(x, y, w)).value <= 0.05


# ------------------------------------------------------------------ XY model

def test_xy_params_validation():
    with pytest.raises(ValueError):
        XYParams(L=2)
    with pytest.raises(ValueError):
        XYParams(T=0.0)
    with pytest.raises(ValueError):
        XYParams(target_accept=1.0)
    with pytest.raises(ValueError):
        XYParams(causal_site=(8, 0))
    with pytest.raises(ValueError):
        XYParams(burn_in=10, steps=5)


def test_site_at_distance_wraps():
    p = XYParams(causal_site=(2, 7))
    assert site_at_distance(p, 1) == (2, 0)
    with pytest.raises(ValueError):
        site_at_distance(p, 5)


def test_series_length_range_and_causal_walk():
    p = XYParams(steps=700, burn_in=200, seed=1)
    out, lattice = xy_series(p, [(0, 0), (0, 1)], return_lattice=True)
    assert out.shape == (500, 2)
    assert np.all((out >= 0) & (out < TWO_PI))
    assert np.all((lattice.angles >= 0) & (lattice.angles < TWO_PI))
    steps = np.mod(np.diff(out[:, 0]) + math.pi, TWO_PI) - math.pi
    assert np.allclose(np.abs(steps), 0.2, atol=1e-9)
    assert 0 < np.mean(steps > 0) < 1


def test_acceptance_near_target():
    p = XYParams(steps=1500, burn_in=1000, seed=2)
    lattice = XYLattice.initial(p)
    while lattice.t < p.burn_in:
        xy_step(lattice)
    _, acc = lattice.sweeps(500)
    assert abs(acc.sum() / (500 * lattice.movable) - 0.5) <= 0.05


def test_adaptation_direction_and_clamp():
    lattice = XYLattice.initial(XYParams())
    r = lattice.r
    lattice.adapt(0.9)
    assert lattice.r < r  # too many acceptances: widen the proposals
    lattice.adapt(0.1)
    lattice.adapt(0.1)
    assert lattice.r > r
    lattice.r = R_MAX
    lattice.adapt(0.0)
    assert lattice.r == R_MAX
    lattice.r = R_MIN
    lattice.adapt(1.0)
    assert lattice.r == R_MIN


def test_adaptation_stops_after_burn_in():
    p = XYParams(steps=40, burn_in=20, seed=3)
    lattice = XYLattice.initial(p)
    for _ in range(20):
        xy_step(lattice)
    r = lattice.r
    for _ in range(20):
        xy_step(lattice)
    assert lattice.r == r


def test_stepping_equals_batched_sweeps():
    p = XYParams(steps=2600, burn_in=100, seed=4, random_order=True)
    a = XYLattice.initial(p)
    while a.t < p.burn_in:
        xy_step(a)
    b = XYLattice.initial(p)
    while b.t < p.burn_in:
        xy_step(b)
    for _ in range(2500):
        xy_step(a)
    b.sweeps(2500)
    assert np.array_equal(a.angles, b.angles)


def test_xy_deterministic():
    p = XYParams(steps=300, burn_in=100, seed=5)
    assert np.array_equal(xy_series(p, [(1, 1)]), xy_series(p, [(1, 1)]))
    other = xy_series(XYParams(steps=300, burn_in=100, seed=6), [(1, 1)])
    assert not np.array_equal(xy_series(p, [(1, 1)]), other)


def _one_sweep(angles, J, T, prop, unif, causal=-1):
    L = angles.shape[0]
    flat = angles.reshape(-1).copy()
    N = L * L
    acc = np.empty(1, dtype=np.int64)
    kernels.xy_sweeps(flat, L, causal, J, T, np.zeros(1), np.full((1, N), prop),
                      np.full((1, N), unif), np.arange(N, dtype=np.int32)[None, :],
                      np.zeros(0, dtype=np.int64), np.empty((1, 0)), acc)
    return flat, int(acc[0])


def test_cold_aligned_lattice_rejects():
    flat, acc = _one_sweep(np.zeros((4, 4)), J=1.0, T=1e-9, prop=0.5, unif=1e-12)
    assert acc == 0 and np.all(flat == 0.0)


def test_zero_energy_change_always_accepted():
    flat, acc = _one_sweep(np.full((4, 4), 1.0), J=0.0, T=1.0, prop=0.3, unif=1 - 1e-16)
    assert acc == 16
    assert np.allclose(flat, 1.3)


def test_energy_of_aligned_lattice():
    # every site has four aligned neighbours, and each bond is counted twice
    assert xy_energy(np.zeros((5, 5))) == -2.0 * 2 * 25


def test_energy_stationary_without_causal_site():
    p = XYParams(steps=5000, burn_in=1000, seed=7, causal_site=None)
    lattice = XYLattice.initial(p)
    while lattice.t < p.burn_in:
        xy_step(lattice)
    energies = []
    for _ in range(4000):
        lattice.sweeps(1)
        energies.append(lattice.energy())
    e = np.array(energies)
    halves = e.reshape(2, -1)
    # batch means absorb the autocorrelation between sweeps
    batches = halves.reshape(2, 20, -1).mean(axis=2)
    se = math.sqrt(sum(b.var(ddof=1) / len(b) for b in batches))
    assert abs(halves[0].mean() - halves[1].mean()) < 3 * se


def test_decoupled_lattice_has_no_transfer():
    p = XYParams(J=0.0, steps=6000, burn_in=1000, seed=8)
    site = site_at_distance(p, 1)
    series = xy_series(p, [p.causal_site, site])
    te = transfer_entropy(series[::5, 0], series[::5, 1], metric="circular")
    assert -0.02 <= te <= 0.05
