"""Randomized checks of the pointwise and discrete monotonicity inequalities."""

import numpy as np

from .. import kernel
from ..assembly import CoefficientField, MixedSystem, a_vector
from ..errors import ContractError
from ..grid import BoundaryData, ScalarField, build_structured_mesh, centroid_vectors

TINY = 1e-300


def relative_slack(small, large):
    """``(large - small) / max(|small|, |large|)``; nonnegative when ``small <= large``."""
    small = np.asarray(small, dtype=float)
    large = np.asarray(large, dtype=float)
    scale = np.maximum(np.maximum(np.abs(small), np.abs(large)), TINY)
    return (large - small) / scale


def random_vectors(rng, n, dim=2):
    """Vectors with log-uniform magnitudes over twelve decades and random directions."""
    d = rng.standard_normal((n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * 10.0 ** rng.uniform(-6, 6, (n, 1))


def vector_pairs(rng, n, dim=2):
    """Generic pairs plus near-coincident, antipodal, parallel and zero cases."""
    x = random_vectors(rng, n, dim)
    y = random_vectors(rng, n, dim)
    kind = rng.integers(0, 5, n)
    close = kind == 1
    y[close] = x[close] * (1 + 1e-3 * rng.standard_normal((close.sum(), 1)))
    anti = kind == 2
    y[anti] = -x[anti] * rng.uniform(0.5, 1.5, (anti.sum(), 1))
    exact_anti = anti & (rng.random(n) < 0.5)
    y[exact_anti] = -x[exact_anti]
    par = kind == 3
    y[par] = x[par] * rng.uniform(-3, 3, (par.sum(), 1))
    zero = kind == 4
    y[zero] = 0.0
    return x, y


def scalar_pairs(rng, n):
    x = np.sign(rng.standard_normal(n)) * 10.0 ** rng.uniform(-8, 8, n)
    y = np.sign(rng.standard_normal(n)) * 10.0 ** rng.uniform(-8, 8, n)
    kind = rng.integers(0, 4, n)
    y[kind == 1] = -x[kind == 1]
    y[kind == 2] = 0.0
    close = kind == 3
    y[close] = x[close] * (1 + 1e-4 * rng.standard_normal(close.sum()))
    return x, y


def discrete_monotonicity_sides(sys: MixedSystem, u, v):
    """``<A u - A v, u - v>`` and ``(beta_lo / 2) sum area |u_c - v_c|^3``."""
    mesh = sys.mesh
    lhs = float((a_vector(sys, u) - a_vector(sys, v)) @ (u - v))
    diff = centroid_vectors(mesh, u - v)
    rhs = 0.5 * sys.coeffs.lower("beta") * float(np.sum(mesh.cell_measures * np.linalg.norm(diff, axis=1) ** 3))
    return lhs, rhs


def random_flux_system(rng, n=4):
    mesh = build_structured_mesh(n, n)
    nc = mesh.n_cells
    coeffs = CoefficientField.constant(mesh, rng.uniform(0.5, 2.0, nc), rng.uniform(0.5, 2.0, nc),
                                       rng.uniform(0.5, 2.0, nc), rng.uniform(0.5, 2.0, nc))
    return MixedSystem(mesh, coeffs, BoundaryData.zeros(mesh), ScalarField.zeros(mesh))


def inequality_sweep(seed, samples, discrete_samples=None, mesh_n=4, dim=2):
    """Worst relative slack of each inequality over seeded random samples.

    Keys ``continuity``, ``monotonicity`` (vector inequalities),
    ``holder``, ``root_monotonicity`` (scalar inequalities) and
    ``discrete_monotonicity`` (edge-flux pairs on a ``mesh_n`` square mesh).
    Every value should be ``>= -1e-12``.
    """
    if samples < 1:
        raise ContractError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x, y = vector_pairs(rng, samples, dim)
    lhs, rhs = kernel.vector_continuity_sides(x, y)
    out = {"continuity": float(relative_slack(lhs, rhs).min())}
    lhs, rhs = kernel.vector_monotonicity_sides(x, y)
    out["monotonicity"] = float(relative_slack(rhs, lhs).min())
    s, t = scalar_pairs(rng, samples)
    hl, hr, ml, mr = kernel.sqrt_inequality_sides(s, t)
    out["holder"] = float(relative_slack(hl, hr).min())
    out["root_monotonicity"] = float(relative_slack(ml, mr).min())
    n_disc = samples if discrete_samples is None else discrete_samples
    if n_disc:
        sys = random_flux_system(rng, mesh_n)
        worst = np.inf
        ne = sys.mesh.n_edges
        for _ in range(n_disc):
            scale = 10.0 ** rng.uniform(-3, 3)
            u = scale * rng.standard_normal(ne)
            v = scale * rng.standard_normal(ne) if rng.random() < 0.8 else -u
            lhs, rhs = discrete_monotonicity_sides(sys, u, v)
            worst = min(worst, float(relative_slack(rhs, lhs)))
        out["discrete_monotonicity"] = worst
    return out
