# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused inner-loop kernels for the split-step integrator.

These are the memory-bound pointwise updates of the hot loop; fusing them
into single passes avoids the temporaries the numpy fallback allocates.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def milstein_update(cnp.ndarray u, cnp.ndarray dw, double eps, double c0dt):
    """u += eps*u*dw + 0.5*eps^2*u*(dw^2 - c0dt), in place."""
    cdef double[::1] uv = u.reshape(-1)
    cdef double[::1] wv = dw.reshape(-1)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double w, half = 0.5 * eps * eps
    for i in range(n):
        w = wv[i]
        uv[i] = uv[i] * (1.0 + eps * w + half * (w * w - c0dt))


def axpy(cnp.ndarray out, cnp.ndarray x, cnp.ndarray y, double alpha):
    """out = x + alpha*y (out may alias x)."""
    cdef double[::1] ov = out.reshape(-1)
    cdef double[::1] xv = x.reshape(-1)
    cdef double[::1] yv = y.reshape(-1)
    cdef Py_ssize_t i, n = ov.shape[0]
    for i in range(n):
        ov[i] = xv[i] + alpha * yv[i]


def sqr(cnp.ndarray out, cnp.ndarray x):
    """out = x*x."""
    cdef double[::1] ov = out.reshape(-1)
    cdef double[::1] xv = x.reshape(-1)
    cdef Py_ssize_t i, n = ov.shape[0]
    for i in range(n):
        ov[i] = xv[i] * xv[i]
