"""Pure-numpy fallbacks for the fused inner-loop kernels.

Same signatures as the compiled module ``_kernels_c``; everything operates
in place on float64 arrays whose last axis is the grid axis.
"""

import numpy as np

BACKEND = "python"


def milstein_update(u, dw, eps, c0dt):
    """u += eps*u*dw + 0.5*eps^2*u*(dw^2 - c0dt), in place."""
    corr = dw * dw
    corr -= c0dt
    corr *= 0.5 * eps
    corr += dw
    corr *= eps
    corr += 1.0
    u *= corr


def axpy(out, x, y, alpha):
    """out = x + alpha*y (out may alias x)."""
    np.multiply(y, alpha, out=out)
    out += x


def sqr(out, x):
    """out = x*x."""
    np.multiply(x, x, out=out)
