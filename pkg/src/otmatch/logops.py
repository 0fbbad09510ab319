"""Stabilized log-domain reductions shared across the package.

Every exponential in the solver stack goes through ``logsumexp`` with
max-subtraction; cost/regularization ratios routinely reach 10^2-10^3 in
stress settings and raw ``exp`` would overflow.  Summation order is the
fixed order numpy uses for contiguous arrays, so repeated runs on the same
platform produce bit-identical results.
"""

from __future__ import annotations

import numpy as np

__all__ = ["logsumexp"]


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """log(sum(exp(a))) along ``axis`` with max-subtraction.

    Inputs may contain ``-inf`` (zero mass) but not ``+inf`` or NaN.
    """
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    # an all -inf slice would turn (a - amax) into nan; pin those maxima to 0
    amax_safe = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax_safe), axis=axis))
    if axis is None:
        return float(out + amax_safe.reshape(()))
    return out + np.squeeze(amax_safe, axis=axis)
