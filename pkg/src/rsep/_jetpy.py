"""Pure numpy jet kernels; used when the compiled ``_jetcore`` extension is unavailable."""
import numpy as np


def mul(a, b, ia, ib, ic, size):
    return np.bincount(ic, weights=a[ia] * b[ib], minlength=size)


def compose(a, taylor, ia, ib, ic, size):
    """Evaluate sum_k taylor[k] * (a - a[0])**k by Horner's rule on truncated series."""
    d = a.copy()
    d[0] = 0.0
    out = np.zeros(size)
    out[0] = taylor[-1]
    for k in range(len(taylor) - 2, -1, -1):
        out = np.bincount(ic, weights=out[ia] * d[ib], minlength=size)
        out[0] += taylor[k]
    return out
