"""
Mesh refinement against a manufactured solution
================================================

``S = sin(pi x) sin(pi y) exp(x - y/2)`` vanishes on the boundary of the unit
square; the matching source is computed from the exact flux.  Errors are
measured in the cell-average and flux-interpolant norms.
"""

from forchmix.verify import convergence_study, skewed_case

# %%
# Linear Darcy drag first, then the quadratic Forchheimer term.
for beta in (0.0, 1.0):
    table = convergence_study(skewed_case(alpha=1.0, beta=beta), [4, 8, 16, 32])
    print(table.summary())
    print()
