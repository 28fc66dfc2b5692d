"""The compiled kernels and the pure-Python fallback must agree.

Counting, sorting and the lattice sweep agree bit for bit; the bias sum uses
a different (recurrence versus log-gamma) evaluation and agrees to 1e-12.
"""
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nncmi import _pykernels, kernels
from nncmi.kl import BallCounter
from nncmi.metric import DISCRETE, Block, Dataset

compiled = pytest.mark.skipif(not kernels.COMPILED, reason="compiled kernels not built")


def _indices(seed, n, k, max_h):
    rng = np.random.default_rng(seed)
    return [Block(rng.integers(0, k, size=n), DISCRETE).index(max_h) for _ in range(3)]


def _args(idx):
    out = []
    for i in idx:
        out += [i.rows, i.brk, i.length]
    return out


@compiled
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 80), k=st.integers(1, 6),
       truncate=st.booleans(), data=st.data())
def test_ball_counts_identical(seed, n, k, truncate, data):
    max_h = data.draw(st.integers(1, n))
    h = data.draw(st.integers(1, max_h))
    idx = _indices(seed, n, k, max_h)
    a = np.empty((3, n))
    b = np.empty((3, n))
    kernels.ball_counts(*_args(idx), h, truncate, a[0], a[1], a[2])
    _pykernels.ball_counts(*_args(idx), h, truncate, b[0], b[1], b[2])
    assert np.array_equal(a, b)
    p, q = np.empty(n), np.empty(n)
    kernels.ball_counts_pair(*_args(idx[:2]), h, truncate, p)
    _pykernels.ball_counts_pair(*_args(idx[:2]), h, truncate, q)
    assert np.array_equal(p, q)


@compiled
@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 2000), seed=st.integers(0, 10_000))
def test_bias_close(h, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(1, h + 1, size=50)
    b = rng.integers(1, h + 1, size=50)
    logs = np.concatenate([[0.0], np.log(np.arange(1, h + 1, dtype=np.float64))])
    x, y = np.empty(50), np.empty(50)
    kernels.hypergeom_bias(h, a, b, logs, x)
    _pykernels.hypergeom_bias(h, a, b, logs, y)
    assert np.allclose(x, y, rtol=0, atol=1e-12)


@compiled
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40), w=st.integers(1, 40))
def test_sort_tie_groups_identical(seed, n, w):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 1000, size=(n, w)).astype(np.int32)
    brk = (rng.random((n, w)) < 0.3).astype(np.uint8)
    brk[:, 0] = 1
    length = rng.integers(0, w + 1, size=n).astype(np.int32)
    brk[np.arange(w)[None, :] >= length[:, None]] = 1  # padding is never tied
    a, b = rows.copy(), rows.copy()
    kernels.sort_tie_groups(a, brk, length)
    _pykernels.sort_tie_groups(b, brk, length)
    assert np.array_equal(a, b)


@compiled
@pytest.mark.parametrize("random_order", [False, True])
def test_xy_sweeps_identical(random_order):
    rng = np.random.default_rng(0)
    L, B = 6, 50
    N = L * L
    angles = rng.random(N) * 2 * np.pi
    walk = np.where(rng.random(B) < 0.5, 0.2, -0.2)
    prop = rng.vonmises(0.0, 2.0, size=(B, N))
    unif = rng.random((B, N))
    order = (np.argsort(rng.random((B, N)), axis=1).astype(np.int32) if random_order
             else np.arange(N, dtype=np.int32)[None, :])
    record = np.array([0, 1, 7], dtype=np.int64)
    results = []
    for impl in (kernels, _pykernels):
        a = angles.copy()
        out, acc = np.empty((B, 3)), np.empty(B, dtype=np.int64)
        impl.xy_sweeps(a, L, 3, 1.0, 0.8, walk, prop, unif, order, record, out, acc)
        results.append((a, out, acc))
    for x, y in zip(*results):
        assert np.array_equal(x, y)


def test_large_inputs_route_to_fallback():
    n = 70_000
    x = np.arange(n, dtype=np.float64)
    data = Dataset.from_arrays(x, x[::-1].copy(), np.sin(x))
    h_xz, h_yz, h_xyz = BallCounter(data, 3)(3)
    assert np.all(h_xyz >= 1) and np.all(h_xz <= 3) and np.all(h_yz <= 3)


def test_environment_forces_fallback():
    code = "from nncmi import kernels; print(kernels.BACKEND)"
    env = {"NNCMI_PURE_PYTHON": "1", "PATH": ""}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env=env, check=True)
    assert out.stdout.strip() == "python"


def test_estimate_same_under_both_backends():
    code = ("import numpy as np; from nncmi import *; "
            "x, y, z, _ = sample_markov_tree(MarkovTreeParams(n=300, seed=1)); "
            "e = estimate_cmi(Dataset.from_arrays(x, y, z)); print(repr(e.value), e.h_star)")
    outs = []
    for env in ({}, {"NNCMI_PURE_PYTHON": "1"}):
        res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                             env=env, check=True)
        outs.append(res.stdout.split())
    assert outs[0][1] == outs[1][1]
    assert float(outs[0][0]) == pytest.approx(float(outs[1][0]), abs=1e-12)
