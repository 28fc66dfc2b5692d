"""Kernel selection.

The compiled extension is used when it imports cleanly; setting the
environment variable ``NNCMI_PURE_PYTHON=1`` forces the fallback.
"""
import os

from nncmi import _pykernels

COMPILED = False
_impl = _pykernels
if not os.environ.get("NNCMI_PURE_PYTHON"):
    try:
        from nncmi import _kernels as _impl

        COMPILED = True
    except ImportError:
        _impl = _pykernels



def _sized(compiled, fallback):
    # the compiled counters pack per-class tallies into 16-bit fields
    limit = getattr(_impl, "MAX_PACKED_N", None)
    if limit is None:
        return compiled

    def call(rx, *args):
        return (compiled if rx.shape[0] <= limit else fallback)(rx, *args)

    call.__doc__ = compiled.__doc__
    return call


ball_counts = _sized(_impl.ball_counts, _pykernels.ball_counts)
ball_counts_pair = _sized(_impl.ball_counts_pair, _pykernels.ball_counts_pair)
hypergeom_bias = _impl.hypergeom_bias
xy_sweeps = _impl.xy_sweeps
sort_tie_groups = _impl.sort_tie_groups
# No fallback twin: without the extension 1-D rows go through the generic sort.
neighbour_rows_1d = getattr(_impl, "neighbour_rows_1d", None)

BACKEND = "compiled" if COMPILED else "python"
