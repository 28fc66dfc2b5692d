"""Transfer entropy by time-delay embedding.

T(X -> Y) is the information the past of X carries about the present of Y
beyond what the past of Y already carries, I(Y_t ; X_past | Y_past). The
embedding builds the three blocks and any conditional estimator in the
package evaluates it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nncmi.histogram import BinningSpec, choose_bins, histogram_cmi
from nncmi.kl import estimate_cmi
from nncmi.ksg import ksg_cmi
from nncmi.metric import CIRCULAR, TWO_PI, Block, Dataset, Metric, get_metric

ESTIMATORS = ("kl", "ksg1", "ksg2", "histogram")


@dataclass(frozen=True)
class EmbeddingSpec:
    ell: int = 1
    stride: int = 1
    source_target: tuple[str, str] = ("x", "y")

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def _as_series(s) -> np.ndarray:
    a = np.asarray(s, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("a series must be 1-D or (T, d)")
    return a


def _past(a: np.ndarray, times: np.ndarray, ell: int) -> np.ndarray:
    # columns: lag 1 first, then lag 2, ...; each lag keeps its d coordinates
    return np.concatenate([a[times - lag] for lag in range(1, ell + 1)], axis=1)


def embedding_times(length: int, spec: EmbeddingSpec) -> np.ndarray:
    """Time indices of the present values, ``n = (length - ell) // stride`` of them."""
    if length <= spec.ell:
        raise ValueError(f"series of length {length} is too short for ell={spec.ell}")
    n = (length - spec.ell) // spec.stride
    if n < 1:
        raise ValueError(f"length {length} with ell={spec.ell}, stride={spec.stride} gives no samples")
    return spec.ell + spec.stride * np.arange(n)


def embed(series_x, series_y, spec: EmbeddingSpec = EmbeddingSpec(),
          metric: Metric | str = "euclidean") -> Dataset:
    """Triples for T(X -> Y).

    The returned dataset has ``x`` = present of Y, ``y`` = past of X and
    ``z`` = past of Y, pasts ordered most recent first, so a conditional
    estimate on it is exactly the transfer entropy from X to Y.
    """
    sx, sy = _as_series(series_x), _as_series(series_y)
    if len(sx) != len(sy):
        raise ValueError(f"series lengths differ: {len(sx)} vs {len(sy)}")
    t = embedding_times(len(sx), spec)
    m = get_metric(metric)
    return Dataset(Block(sy[t], m), Block(_past(sx, t, spec.ell), m),
                   Block(_past(sy, t, spec.ell), m))


def transfer_entropy(series_x, series_y, spec: EmbeddingSpec = EmbeddingSpec(),
                     estimator: str = "kl", metric: Metric | str = "euclidean",
                     k: int = 4, h_range: tuple[int, int] | None = None,
                     bins: BinningSpec | int | None = None) -> float:
    """T(X -> Y) in nats.

    With the circular metric the histogram grid spans ``[0, 2*pi)`` unless
    an explicit :class:`BinningSpec` is passed.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    data = embed(series_x, series_y, spec, metric)
    if estimator == "kl":
        return estimate_cmi(data, h_range=h_range).value
    if estimator == "ksg1":
        return ksg_cmi(data, k=k, variant=1)
    if estimator == "ksg2":
        return ksg_cmi(data, k=k, variant=2)
    if bins is None:
        bins = choose_bins(data.n, sum(b.dim for b in data.blocks)).bins_per_dim
    if isinstance(bins, int):
        circular = get_metric(metric) == CIRCULAR
        bins = BinningSpec.fixed(bins, 0.0, TWO_PI) if circular else BinningSpec(bins)
    return histogram_cmi(data, bins)
