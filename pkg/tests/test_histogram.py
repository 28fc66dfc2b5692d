import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference
from nncmi.generators import MarkovTreeParams, gaussian_cmi_oracle, sample_markov_tree
from nncmi.histogram import (BinningSpec, bin_indices, choose_bins, histogram_cmi,
                             histogram_cmi_dense)
from nncmi.metric import Dataset


@pytest.mark.parametrize("n,dims,bins", [(100, 3, 5), (10 ** 9, 3, 63), (10 ** 9, 1, 64),
                                         (5 * 10 ** 6, 3, 21), (3 ** 5, 3, 5), (6 ** 5, 3, 6),
                                         (6 ** 5 - 1, 3, 5), (1, 1, 5)])
def test_choose_bins(n, dims, bins):
    assert choose_bins(n, dims).bins_per_dim == bins


def test_choose_bins_cap():
    assert choose_bins(10 ** 12, 1).bins_per_dim == 64


def test_spec_validation():
    with pytest.raises(ValueError):
        BinningSpec(1)
    with pytest.raises(ValueError):
        BinningSpec.fixed(4, 1.0, 1.0)
    with pytest.raises(ValueError):
        BinningSpec(4, "quantile")


def test_upper_edge_in_last_bin_and_constant_column():
    idx = bin_indices(np.array([[0.0, 3.0], [0.5, 3.0], [1.0, 3.0]]), BinningSpec(4))
    assert idx[:, 0].tolist() == [0, 2, 3]
    assert idx[:, 1].tolist() == [0, 0, 0]


def test_fixed_range_clips():
    idx = bin_indices(np.array([-1.0, 0.0, 0.99, 5.0]), BinningSpec.fixed(2, 0.0, 1.0))
    assert idx[:, 0].tolist() == [0, 0, 1, 1]


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        Dataset.from_arrays([0.0, np.inf, 1.0], [0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        bin_indices(np.array([0.0, np.nan]), BinningSpec(3))


def _labels(seed, n, k):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, k, size=n).astype(float)
    y = np.where(rng.random(n) < 0.4, x, rng.integers(0, k, size=n)).astype(float)
    z = rng.integers(0, k, size=(n, 2)).astype(float)
    return x, y, z


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 300), k=st.integers(1, 6),
       bins=st.integers(2, 7))
def test_sparse_dense_reference_agree(seed, n, k, bins):
    x, y, z = _labels(seed, n, k)
    data = Dataset.from_arrays(x, y, z)
    spec = BinningSpec(bins)
    sparse = histogram_cmi(data, spec)
    assert sparse == histogram_cmi_dense(data, spec)
    bx, by = bin_indices(x, spec), bin_indices(y, spec)
    bz = bin_indices(z, spec)
    want = reference.histogram_cmi([tuple(r) for r in bx], [tuple(r) for r in by],
                                   [tuple(r) for r in bz])
    assert sparse == pytest.approx(want, abs=1e-12)
    assert sparse >= -1e-9


def test_many_dimensions_use_tuple_keys():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, size=(200, 12)).astype(float)
    y = rng.integers(0, 2, size=(200, 12)).astype(float)
    z = rng.integers(0, 2, size=(200, 12)).astype(float)
    data = Dataset.from_arrays(x, y, z)
    spec = BinningSpec(64)  # 12 * log2(64) bits forces the unique-row path
    assert histogram_cmi(data, spec) == histogram_cmi(data, BinningSpec(2))


def test_determined_by_z_is_zero():
    labels = np.random.default_rng(1).integers(0, 5, size=500).astype(float)
    data = Dataset.from_arrays(labels, labels, labels)
    assert histogram_cmi(data, BinningSpec(5)) == 0.0


def test_mi_without_z():
    labels = np.random.default_rng(1).integers(0, 4, size=4000).astype(float)
    value = histogram_cmi(Dataset.from_arrays(labels, labels), BinningSpec(4))
    assert value == pytest.approx(math.log(4), abs=0.01)


def test_independent_positive_and_shrinking():
    values = []
    for n in (1000, 10_000, 100_000):
        rng = np.random.default_rng(n)
        data = Dataset.from_arrays(*(rng.random(n) for _ in range(3)))
        values.append(histogram_cmi(data, BinningSpec(6)))
    assert all(v > 0 for v in values)
    assert values[0] > values[1] > values[2]


def test_refinement_consistency():
    params = MarkovTreeParams(n=1, seed=0)
    truth = gaussian_cmi_oracle(params)
    errors = {}
    for n in (5_000, 10_000):
        errs = []
        for seed in range(20):
            x, y, z, _ = sample_markov_tree(MarkovTreeParams(n=n, seed=seed))
            errs.append(abs(histogram_cmi(Dataset.from_arrays(x, y, z), BinningSpec(8)) - truth))
        errors[n] = np.mean(errs)
    assert errors[10_000] < errors[5_000]


def test_large_gaussian_close_to_oracle():
    params = MarkovTreeParams(n=2_000_000, seed=7)
    x, y, z, _ = sample_markov_tree(params)
    value = histogram_cmi(Dataset.from_arrays(x, y, z), BinningSpec(20))
    assert value == pytest.approx(gaussian_cmi_oracle(params), abs=0.01)
