"""Hot numeric kernels: numba-jitted inner loops with a pure-numpy fallback.

The numba path is the default. Set ``MSGT_NO_NUMBA=1`` to force the numpy
fallback (or it is selected automatically when numba is not importable).
``benchmarks/bench_kernels.py`` times both paths side by side.

All kernels operate on contiguous float64 arrays. Matmuls are deliberately
not here; BLAS already owns those.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import erf as _erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_rows_bwd(y, gy):
    # dL/dx = y * (gy - sum(gy * y, row))
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def _np_gelu(x):
    return 0.5 * x * (1.0 + _erf(x * _INV_SQRT2))


def _np_gelu_bwd(x, gy):
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return gy * (cdf + x * pdf)


def _np_bucket_scatter_add(table_grad, idx, gout):
    # table_grad: (B, H); idx: (n, n) int64; gout: (H, n, n)
    for h in range(gout.shape[0]):
        np.add.at(table_grad[:, h], idx.ravel(), gout[h].ravel())


def _np_adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


NUMPY_KERNELS = {
    "softmax_rows": _np_softmax_rows,
    "softmax_rows_bwd": _np_softmax_rows_bwd,
    "gelu": _np_gelu,
    "gelu_bwd": _np_gelu_bwd,
    "bucket_scatter_add": _np_bucket_scatter_add,
    "adam_step": _np_adam_step,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def nb_softmax_rows(x):
        n, k = x.shape
        out = np.empty((n, k))
        for i in range(n):
            row_max = x[i, 0]
            for j in range(1, k):
                if x[i, j] > row_max:
                    row_max = x[i, j]
            total = 0.0
            for j in range(k):
                e = math.exp(x[i, j] - row_max)
                out[i, j] = e
                total += e
            inv = 1.0 / total
            for j in range(k):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def nb_softmax_rows_bwd(y, gy):
        n, k = y.shape
        gx = np.empty((n, k))
        for i in range(n):
            dot = 0.0
            for j in range(k):
                dot += gy[i, j] * y[i, j]
            for j in range(k):
                gx[i, j] = y[i, j] * (gy[i, j] - dot)
        return gx

    @njit(cache=True)
    def nb_gelu(x):
        flat = x.ravel()
        out = np.empty_like(flat)
        for i in range(flat.size):
            out[i] = 0.5 * flat[i] * (1.0 + math.erf(flat[i] * _INV_SQRT2))
        return out.reshape(x.shape)

    @njit(cache=True)
    def nb_gelu_bwd(x, gy):
        fx = x.ravel()
        fg = gy.ravel()
        out = np.empty_like(fx)
        for i in range(fx.size):
            cdf = 0.5 * (1.0 + math.erf(fx[i] * _INV_SQRT2))
            pdf = math.exp(-0.5 * fx[i] * fx[i]) * _INV_SQRT2PI
            out[i] = fg[i] * (cdf + fx[i] * pdf)
        return out.reshape(x.shape)

    @njit(cache=True)
    def nb_bucket_scatter_add(table_grad, idx, gout):
        nh, n, _ = gout.shape
        for h in range(nh):
            for i in range(n):
                for j in range(n):
                    table_grad[idx[i, j], h] += gout[h, i, j]

    @njit(cache=True)
    def nb_adam_step(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
        fp = p.ravel()
        fg = g.ravel()
        fm = m.ravel()
        fv = v.ravel()
        for i in range(fp.size):
            fm[i] = beta1 * fm[i] + (1.0 - beta1) * fg[i]
            fv[i] = beta2 * fv[i] + (1.0 - beta2) * fg[i] * fg[i]
            fp[i] -= lr * (fm[i] / bc1) / (math.sqrt(fv[i] / bc2) + eps)

    return {
        "softmax_rows": nb_softmax_rows,
        "softmax_rows_bwd": nb_softmax_rows_bwd,
        "gelu": nb_gelu,
        "gelu_bwd": nb_gelu_bwd,
        "bucket_scatter_add": nb_bucket_scatter_add,
        "adam_step": nb_adam_step,
    }


def _numba_disabled() -> bool:
    return os.environ.get("MSGT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


NUMBA_KERNELS = None
if not _numba_disabled():
    try:
        NUMBA_KERNELS = _build_numba_kernels()
    except ImportError:
        NUMBA_KERNELS = None

if NUMBA_KERNELS is not None:
    BACKEND = "numba"
    _active = NUMBA_KERNELS
else:
    BACKEND = "numpy"
    _active = NUMPY_KERNELS

softmax_rows = _active["softmax_rows"]
softmax_rows_bwd = _active["softmax_rows_bwd"]
gelu = _active["gelu"]
gelu_bwd = _active["gelu_bwd"]
bucket_scatter_add = _active["bucket_scatter_add"]
adam_step = _active["adam_step"]
