"""Primal convex-minimization oracle.

The pressure-squared field is sought as a continuous piecewise-linear
function on the triangles obtained by cutting every rectangle along its
bottom-left/top-right diagonal, vanishing on the boundary.  It minimizes::

    J(S) = sum_t area_t Phi(|grad S|) - int f S  (+ lumped time term)

with ``Phi' = |F|``.  ``grad J`` only needs ``F`` itself, so the oracle never
touches the mixed operators.  Descent directions are Newton directions of ``J``
(the stiffness matrix weighted by the Jacobian of ``F``) safeguarded by
Armijo backtracking on ``J``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .. import kernel
from ..assembly import MixedSystem
from ..errors import ContractError, OracleError
from ..grid import Mesh, ScalarField

ARMIJO_C = 1e-4


def _potential_selfcheck():
    """Compare the closed-form potential with quadrature of its derivative."""
    for a, b, r in ((1.0, 1.0, 2.5), (0.3, 4.0, 0.7), (2.0, 1e-9, 1.3)):
        exact = float(kernel.forchheimer_potential(a, b, r))
        quad, _ = integrate.quad(lambda s: float(kernel.f_magnitude(a, b, s)), 0.0, r, epsabs=1e-14)
        if abs(exact - quad) > 1e-10 * (1 + abs(quad)):
            raise OracleError(f"potential mismatch at a={a}, b={b}, r={r}: {exact} vs {quad}")


_potential_selfcheck()


@dataclass(frozen=True, eq=False)
class NodalField:
    """Vertex values of a continuous piecewise-linear field on ``mesh``."""

    mesh: Mesh
    values: np.ndarray

    def cell_averages(self) -> ScalarField:
        """Exact rectangle means (the two triangles have equal area)."""
        v = self.values[self.mesh.cells]
        bl, br, tr, tl = v[:, 0], v[:, 1], v[:, 2], v[:, 3]
        lower = (bl + br + tr) / 3.0
        upper = (bl + tr + tl) / 3.0
        return ScalarField(self.mesh, 0.5 * (lower + upper))


@dataclass
class OracleResult:
    field: NodalField
    iterations: int
    gradient_norm: float
    energy: float


class _Triangulation:
    def __init__(self, mesh: Mesh):
        c = mesh.cells
        # two triangles per rectangle, both containing the BL-TR diagonal
        self.tris = np.concatenate([c[:, [0, 1, 2]], c[:, [0, 2, 3]]])
        self.parent = np.concatenate([np.arange(mesh.n_cells)] * 2)
        p = mesh.vertices[self.tris]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.area = 0.5 * np.abs(det)
        # inverse of the affine map [d1 d2]; barycentric gradients are ref @ inv
        inv = np.stack([np.stack([d2[:, 1], -d2[:, 0]], -1), np.stack([-d1[:, 1], d1[:, 0]], -1)], -2) / det[:, None, None]
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        # barycentric gradients, shape (nt, 3, 2)
        self.grads = np.einsum("ij,tjk->tik", ref, inv)
        self.n = mesh.n_vertices

    def gradient(self, S):
        return np.einsum("tik,ti->tk", self.grads, S[self.tris])

    def scatter(self, vec3):
        out = np.zeros(self.n)
        np.add.at(out, self.tris, vec3)
        return out

    def stiffness(self, weights):
        """``sum_t area_t grad phi_i . W_t grad phi_j`` for scalar or 2x2 weights ``W_t``."""
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 1:
            weights = weights[:, None, None] * np.eye(2)
        local = np.einsum("tik,tkl,tjl->tij", self.grads, weights, self.grads) * self.area[:, None, None]
        rows = np.repeat(self.tris, 3, axis=1)
        cols = np.tile(self.tris, (1, 3))
        return sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(self.n, self.n))


def _descend(energy, gradient, precond, x, tol, max_iter):
    e = energy(x)
    g = gradient(x)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > tol:
        if it >= max_iter:
            raise OracleError(f"primal descent stalled: gradient norm {gnorm:.3e} after {max_iter} iterations")
        d = -precond(x, g)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -gnorm ** 2
        lam = 1.0
        while True:
            trial = x + lam * d
            e_trial = energy(trial)
            if e_trial <= e + ARMIJO_C * lam * slope:
                break
            # energy differences at round-off level: fall back on the gradient norm
            if abs(e_trial - e) <= 1e-13 * (1.0 + abs(e)) and np.linalg.norm(gradient(trial)) < gnorm:
                break
            lam *= 0.5
            if lam < 1e-12:
                raise OracleError(f"primal line search failed at gradient norm {gnorm:.3e}")
        x, e = trial, e_trial
        g = gradient(x)
        gnorm = float(np.linalg.norm(g))
        it += 1
    return x, it, gnorm, e


def flux_derivative(alpha, beta, grad):
    """Jacobian of ``g -> F(g)``, i.e. the inverse Jacobian of ``G`` at ``F(g)``."""
    m = kernel.f_array(alpha, beta, grad)
    return np.linalg.inv(kernel.g_jacobian_array(alpha, beta, m))


def primal_oracle(sys: MixedSystem, tol=1e-11, max_iter=500, prev_nodal: NodalField | None = None) -> OracleResult:
    """Minimize the primal energy for the data of ``sys`` (zero boundary values).

    Coefficients and the source are taken cellwise from ``sys``.  For a
    semi-discrete ``sys`` the lagged state must be supplied as
    ``prev_nodal``; the time term is mass-lumped.
    """
    if not sys.boundary.is_homogeneous:
        raise ContractError("the primal oracle needs homogeneous Dirichlet data")
    if sys.eps != 0:
        raise ContractError("the primal oracle solves the unregularized problem")
    mesh = sys.mesh
    tri = _Triangulation(mesh)
    alpha = sys.coeffs.alpha.values[tri.parent]
    beta = sys.coeffs.beta.values[tri.parent]
    fvals = sys.source.values[tri.parent]
    load = tri.scatter(np.repeat((fvals * tri.area / 3.0)[:, None], 3, axis=1))
    lump_w = np.zeros(mesh.n_vertices)
    lag = np.zeros(mesh.n_vertices)
    if sys.semi_discrete:
        if prev_nodal is None:
            raise ContractError("a semi-discrete problem needs prev_nodal")
        mesh.check_same(prev_nodal.mesh)
        phi = sys.coeffs.phi.values[tri.parent]
        w_now = phi * sys.coeffs.gamma.values[tri.parent] / sys.dt
        w_prev = phi * sys.prev_gamma.values[tri.parent] / sys.dt
        lump_w = tri.scatter(np.repeat((w_now * tri.area / 3.0)[:, None], 3, axis=1))
        prev_root = kernel.signed_sqrt(prev_nodal.values)
        lag = tri.scatter((w_prev * tri.area / 3.0)[:, None] * prev_root[tri.tris])
    interior = np.ones(mesh.n_vertices, dtype=bool)
    interior[mesh.edges[mesh.boundary_edges].ravel()] = False
    idx = np.nonzero(interior)[0]

    def full(x):
        S = np.zeros(mesh.n_vertices)
        S[idx] = x
        return S

    def energy(x):
        S = full(x)
        r = np.linalg.norm(tri.gradient(S), axis=1)
        val = np.sum(tri.area * kernel.forchheimer_potential(alpha, beta, r)) - load @ S
        val += np.sum(lump_w * (2.0 / 3.0) * np.abs(S) ** 1.5) - lag @ S
        return float(val)

    def gradient(x):
        S = full(x)
        flux = kernel.f_array(alpha, beta, tri.gradient(S))
        g = tri.scatter(np.einsum("tik,tk->ti", tri.grads, flux) * tri.area[:, None])
        g += lump_w * kernel.signed_sqrt(S) - lag - load
        return g[idx]

    def precond(x, g):
        S = full(x)
        K = tri.stiffness(flux_derivative(alpha, beta, tri.gradient(S)))[idx][:, idx]
        if sys.semi_discrete:
            # derivative of t -> t/sqrt|t|, floored to stay bounded at zero
            K = K + sp.diags(0.5 * lump_w[idx] / np.sqrt(np.maximum(np.abs(S[idx]), 1e-8)))
        return spla.spsolve(K.tocsc(), g)

    x0 = np.zeros(len(idx))
    x, it, gnorm, e = _descend(energy, gradient, precond, x0, tol, max_iter)
    return OracleResult(NodalField(mesh, full(x)), it, gnorm, e)


def primal_oracle_1d(n_intervals, alpha=1.0, beta=1.0, source=1.0, length=1.0, tol=1e-13, max_iter=200):
    """Interior nodal values of the 1-D minimizer with zero end values."""
    if n_intervals < 2:
        raise ContractError("need at least two intervals")
    h = length / n_intervals
    n_in = n_intervals - 1
    D = sp.diags([np.ones(n_in), -np.ones(n_in)], [0, -1], shape=(n_intervals, n_in)).tocsr() / h
    load = np.full(n_in, source * h)

    def energy(x):
        return float(h * np.sum(kernel.forchheimer_potential(alpha, beta, np.abs(D @ x))) - load @ x)

    def gradient(x):
        flux = kernel.f_array(alpha, beta, (D @ x)[:, None])[:, 0]
        return h * (D.T @ flux) - load

    def precond(x, g):
        slope = flux_derivative(alpha, beta, (D @ x)[:, None])[:, 0, 0]
        K = (h * D.T @ sp.diags(slope) @ D).tocsc()
        return spla.spsolve(K, g)

    x, it, gnorm, e = _descend(energy, gradient, precond, np.zeros(n_in), tol, max_iter)
    return x
