"""
Fractional norms of curve data
==============================

The Gagliardo seminorm of cos(kx) against its Fourier multiplier, and the
weighted half-order norm near a corner.
"""

####################################################################
import numpy as np

from cornerwaves import sobolev

P = 2 * np.pi
for k in (1, 2, 4):
    f = sobolev.CurveFunction.periodic(lambda x: np.cos(k * x), P, 256)
    num = sobolev.gagliardo_seminorm_sq(f, 0.5)
    print(k, num, sobolev.fourier_seminorm_sq(f.values, P, 0.5))

####################################################################
# Data that does not vanish at the corner has an infinite weighted norm.
for name, fun in (("sqrt(rho)", np.sqrt), ("one", np.ones_like)):
    res = sobolev.tilde_half_norm(sobolev.CurveFunction.from_callable(fun, 1.0, 256, 3))
    print(name, res.norm, res.diverges)
