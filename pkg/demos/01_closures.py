"""
Drag law, its inverse and the gas density
=========================================

The Forchheimer drag ``G(v) = (alpha + beta |v|) v`` grows quadratically for
fast flow.  Its inverse returns the mass flux driven by a pressure-squared
gradient, and ``rho`` converts pressure-squared to density.
"""

import numpy as np

from forchmix.kernel import ClosureParams, f_closure, g_closure, rho

params = ClosureParams(alpha=1.0, beta=1.0, gamma=1.0)

# %%
# Flux for growing driving forces: the response is linear for weak
# gradients and square-root-like for strong ones.
for magnitude in (1e-3, 1e-1, 1.0, 10.0, 1e3):
    g = np.array([magnitude, 0.0])
    m = f_closure(params, g)
    print(f"|g| = {magnitude:8.1e}   |F(g)| = {np.linalg.norm(m):.6e}   |g|/alpha = {magnitude:.1e}")

# %%
# The inverse is exact to round-off, also near zero where the closed form
# would divide zero by zero.
g = np.array([3.0, -4.0])
print("G(F(g)) - g =", g_closure(params, f_closure(params, g)) - g)
print("F(0) =", f_closure(params, np.zeros(2)))

# %%
# Density from pressure-squared is odd and monotone.
for s in (-9.0, 0.0, 4.0):
    print(f"rho({s:+.0f}) = {rho(params, s):+.3f}")
