"""Digamma function."""
import numpy as np

# Coefficients of x**-(2k) in the asymptotic expansion, k = 1..7
_ASYMPTOTIC = np.array([
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
])
_SHIFT_TO = 10.0


def digamma(x):
    """psi(x) for x > 0, absolute error below 1e-13.

    Arguments below 10 are shifted up with psi(x) = psi(x + 1) - 1/x, then
    the asymptotic series is summed.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValueError("digamma is only defined here for x > 0")
    v = np.array(arr, ndmin=1, copy=True)
    acc = np.zeros_like(v)
    small = v < _SHIFT_TO
    while small.any():
        acc[small] -= 1.0 / v[small]
        v[small] += 1.0
        small = v < _SHIFT_TO
    inv2 = 1.0 / (v * v)
    series = np.zeros_like(v)
    for c in _ASYMPTOTIC[::-1]:
        series = (series + c) * inv2
    out = acc + np.log(v) - 0.5 / v + series
    return out.reshape(arr.shape) if arr.ndim else float(out[0])
