"""Discrete forms of the mixed Darcy-Forchheimer problem.

Unknowns are the edge fluxes ``m`` and the cell values ``S``.  The discrete
equations are::

    A(m) + D_eps(m) - B^T S = g
    C(S) + B m              = f~

``A`` is the Forchheimer drag (corner rule), ``D_eps`` the divergence
regularization, ``B`` the signed cell/edge incidence (``b(v, q) = q^T B v``),
and ``C`` either the regularization ``eps * rho`` (stationary) or the
implicit-Euler accumulation ``phi gamma / dt * rho`` (semi-discrete).
"""

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernel
from .errors import ConditioningError, ContractError
from .grid import BoundaryData, FluxField, Mesh, ScalarField, corner_vectors, flux_sums

COEFFICIENTS = ("alpha", "beta", "gamma", "phi")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Cellwise ``alpha, beta, gamma, phi`` with declared bounds.

    ``bounds`` maps a coefficient name to ``(lower, upper)``; missing entries
    default to the observed range.  ``alpha``, ``gamma`` and ``phi`` need a
    positive lower bound.  ``beta`` may be identically zero (linear Darcy);
    its positivity is enforced where the model requires it (see
    :func:`forchmix.cli.ingest`).
    """

    alpha: ScalarField
    beta: ScalarField
    gamma: ScalarField
    phi: ScalarField
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        mesh = self.alpha.mesh
        bounds = dict(self.bounds)
        for name in COEFFICIENTS:
            f = getattr(self, name)
            mesh.check_same(f.mesh)
            lo, hi = bounds.get(name, (float(f.values.min()), float(f.values.max())))
            if name == "beta":
                if lo < 0:
                    raise ContractError("beta lower bound must be nonnegative")
            elif lo <= 0:
                raise ContractError(f"{name} lower bound must be positive")
            if np.any(f.values < lo) or np.any(f.values > hi):
                raise ContractError(f"{name} violates its declared bounds [{lo}, {hi}]")
            bounds[name] = (float(lo), float(hi))
        object.__setattr__(self, "bounds", bounds)

    @property
    def mesh(self) -> Mesh:
        return self.alpha.mesh

    @classmethod
    def constant(cls, mesh, alpha=1.0, beta=1.0, gamma=1.0, phi=1.0, bounds=None):
        def make(v):
            return v if isinstance(v, ScalarField) else ScalarField(mesh, v)

        return cls(make(alpha), make(beta), make(gamma), make(phi), bounds or {})

    def lower(self, name):
        return self.bounds[name][0]

    def upper(self, name):
        return self.bounds[name][1]


@dataclass(frozen=True, eq=False)
class MixedSystem:
    """Data of one stationary or semi-discrete solve.

    Stationary when ``dt`` is None; otherwise ``prev_S`` and ``prev_gamma``
    supply the lagged density of the previous time level.
    """

    mesh: Mesh
    coeffs: CoefficientField
    boundary: BoundaryData
    source: ScalarField
    eps: float = 0.0
    dt: float | None = None
    prev_S: ScalarField | None = None
    prev_gamma: ScalarField | None = None

    def __post_init__(self):
        for part in (self.coeffs, self.boundary, self.source):
            self.mesh.check_same(part.mesh)
        if self.eps < 0:
            raise ContractError("eps must be nonnegative")
        if self.dt is not None:
            if self.dt <= 0:
                raise ContractError("dt must be positive")
            if self.prev_S is None:
                raise ContractError("semi-discrete system needs prev_S")
            self.mesh.check_same(self.prev_S.mesh)
            if self.prev_gamma is None:
                object.__setattr__(self, "prev_gamma", self.coeffs.gamma)

    @property
    def semi_discrete(self):
        return self.dt is not None

    @property
    def time_weight(self) -> np.ndarray:
        """Cellwise ``phi gamma / dt``; zero for a stationary system."""
        if self.dt is None:
            return np.zeros(self.mesh.n_cells)
        return self.coeffs.phi.values * self.coeffs.gamma.values / self.dt

    @property
    def c_weight(self) -> np.ndarray:
        """Weight of the ``rho``-type term actually present in the equations."""
        if self.dt is None:
            return np.full(self.mesh.n_cells, float(self.eps))
        return self.time_weight

    def with_eps(self, eps):
        return MixedSystem(self.mesh, self.coeffs, self.boundary, self.source, eps,
                           self.dt, self.prev_S, self.prev_gamma)

    @property
    def n_dofs(self):
        return self.mesh.n_edges + self.mesh.n_cells


# -- cached mesh operators ---------------------------------------------------

_B_CACHE = weakref.WeakKeyDictionary()


def incidence_matrix(mesh: Mesh) -> sp.csr_matrix:
    """``B`` with ``(B v)_K`` the net outward flux of cell ``K``."""
    if mesh not in _B_CACHE:
        rows = np.repeat(np.arange(mesh.n_cells), 4)
        cols = mesh.cell_edges.ravel()
        vals = mesh.cell_edge_signs.ravel()
        _B_CACHE[mesh] = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_cells, mesh.n_edges))
    return _B_CACHE[mesh]


# -- operator vectors --------------------------------------------------------


def _corner_data(sys, m):
    mesh = sys.mesh
    u = corner_vectors(mesh, m)
    w = 0.25 * mesh.cell_measures[:, None]
    return mesh, u, w


def a_vector(sys: MixedSystem, m) -> np.ndarray:
    """``A(m)``: the vector ``v -> a(m, v)`` in edge coordinates."""
    mesh, u, w = _corner_data(sys, m)
    coef = sys.coeffs.alpha.values[:, None] + sys.coeffs.beta.values[:, None] * np.linalg.norm(u, axis=-1)
    ce = mesh.corner_edges
    out = np.zeros(mesh.n_edges)
    np.add.at(out, ce[..., 0], w * coef * u[..., 0] / mesh.cell_hy[:, None])
    np.add.at(out, ce[..., 1], w * coef * u[..., 1] / mesh.cell_hx[:, None])
    return out


def a_jacobian(sys: MixedSystem, m, delta=0.0) -> sp.csr_matrix:
    mesh, u, w = _corner_data(sys, m)
    jac = kernel.g_jacobian_array(sys.coeffs.alpha.values[:, None], sys.coeffs.beta.values[:, None], u, delta)
    ce = mesh.corner_edges
    scale = np.stack([1.0 / mesh.cell_hy, 1.0 / mesh.cell_hx], axis=-1)[:, None, :]
    blocks = w[..., None, None] * jac * scale[..., :, None] * scale[..., None, :]
    rows = np.broadcast_to(ce[..., :, None], blocks.shape)
    cols = np.broadcast_to(ce[..., None, :], blocks.shape)
    n = mesh.n_edges
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def _cell_div(sys, m):
    return flux_sums(sys.mesh, m) / sys.mesh.cell_measures


def d_vector(sys: MixedSystem, m) -> np.ndarray:
    if sys.eps == 0:
        return np.zeros(sys.mesh.n_edges)
    d = _cell_div(sys, m)
    return sys.eps * (incidence_matrix(sys.mesh).T @ (np.abs(d) * d))


def d_jacobian(sys: MixedSystem, m) -> sp.csr_matrix:
    B = incidence_matrix(sys.mesh)
    if sys.eps == 0:
        return sp.csr_matrix((sys.mesh.n_edges, sys.mesh.n_edges))
    d = _cell_div(sys, m)
    return (B.T @ sp.diags(sys.eps * 2.0 * np.abs(d) / sys.mesh.cell_measures) @ B).tocsr()


def c_vector(sys: MixedSystem, S) -> np.ndarray:
    return sys.mesh.cell_measures * sys.c_weight * kernel.signed_sqrt(S)


def c_jacobian_diag(sys: MixedSystem, S, delta=0.0) -> np.ndarray:
    weight = sys.mesh.cell_measures * sys.c_weight
    out = np.zeros(sys.mesh.n_cells)
    on = weight > 0
    out[on] = weight[on] * kernel.signed_sqrt_derivative(np.asarray(S)[on], delta)
    return out


def g_vector(sys: MixedSystem) -> np.ndarray:
    mesh = sys.mesh
    out = np.zeros(mesh.n_edges)
    out[mesh.boundary_edges] = -sys.boundary.values * mesh.boundary_signs
    return out


def f_tilde_vector(sys: MixedSystem) -> np.ndarray:
    mesh = sys.mesh
    out = mesh.cell_measures * sys.source.values
    if sys.semi_discrete:
        lagged = sys.coeffs.phi.values * sys.prev_gamma.values / sys.dt
        out = out + mesh.cell_measures * lagged * kernel.signed_sqrt(sys.prev_S.values)
    return out


def residual(sys: MixedSystem, m, S) -> np.ndarray:
    """Mixed residual ``[A m + D m - B^T S - g ; C S + B m - f~]`` with exact closures."""
    B = incidence_matrix(sys.mesh)
    r1 = a_vector(sys, m) + d_vector(sys, m) - B.T @ S - g_vector(sys)
    r2 = c_vector(sys, S) + B @ m - f_tilde_vector(sys)
    return np.concatenate([r1, r2])


def residual_norm(r) -> float:
    """Euclidean residual norm scaled by the square root of the dof count."""
    return float(np.linalg.norm(r) / np.sqrt(len(r)))


def linearize(sys: MixedSystem, state, smoothing_delta=1e-8):
    """Jacobian ``[[A' + D', -B^T], [B, C']]`` and the residual at ``state``.

    ``state`` is ``(FluxField, ScalarField)`` or a pair of arrays.  The
    Jacobian uses ``|.|`` smoothed by ``smoothing_delta``; the residual uses
    the exact closures.
    """
    m, S = _state_arrays(sys, state)
    B = incidence_matrix(sys.mesh)
    top = a_jacobian(sys, m, smoothing_delta) + d_jacobian(sys, m)
    J = sp.bmat([[top, -B.T], [B, sp.diags(c_jacobian_diag(sys, S, smoothing_delta))]], format="csc")
    return J, residual(sys, m, S)


def _state_arrays(sys, state):
    m, S = state
    if isinstance(m, FluxField):
        sys.mesh.check_same(m.mesh)
        m = m.edge_fluxes
    if isinstance(S, ScalarField):
        sys.mesh.check_same(S.mesh)
        S = S.values
    m = np.asarray(m, dtype=float)
    S = np.asarray(S, dtype=float)
    if m.shape != (sys.mesh.n_edges,) or S.shape != (sys.mesh.n_cells,):
        raise ContractError("state does not match the mesh")
    return m, S


def solve_linear(J, rhs, rcond=1e-14):
    """Sparse LU solve; a vanishing pivot raises :class:`ConditioningError`."""
    try:
        lu = spla.splu(sp.csc_matrix(J))
    except RuntimeError as exc:
        raise ConditioningError(f"singular linearization: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    k = int(np.argmin(diag))
    if diag[k] <= rcond * diag.max():
        raise ConditioningError(f"pivot {k} is {diag[k]:.3e} relative to {diag.max():.3e}", pivot=k)
    return lu.solve(rhs)


def export_matrix_market(sys: MixedSystem, state, path, smoothing_delta=1e-8):
    """Write the Jacobian at ``state`` as MatrixMarket coordinate text."""
    J, _ = linearize(sys, state, smoothing_delta)
    scipy.io.mmwrite(str(path), J, comment="mixed Darcy-Forchheimer Jacobian [[A'+D', -B^T], [B, C']]")


# -- scalar forms ------------------------------------------------------------


def apply_a(sys: MixedSystem, u: FluxField, v: FluxField) -> float:
    sys.mesh.check_same(u.mesh)
    sys.mesh.check_same(v.mesh)
    return float(a_vector(sys, u.edge_fluxes) @ v.edge_fluxes)


def apply_b(v: FluxField, q: ScalarField) -> float:
    v.mesh.check_same(q.mesh)
    return float(flux_sums(v.mesh, v.edge_fluxes) @ q.values)


def apply_c(sys: MixedSystem, p: ScalarField, q: ScalarField, eps_mode: bool) -> float:
    sys.mesh.check_same(p.mesh)
    sys.mesh.check_same(q.mesh)
    weight = np.full(sys.mesh.n_cells, float(sys.eps)) if eps_mode else sys.time_weight
    if not np.any(weight):
        raise ContractError("the c-form weight is identically zero")
    return float(np.sum(sys.mesh.cell_measures * weight * kernel.signed_sqrt(p.values) * q.values))


def apply_d(sys: MixedSystem, u: FluxField, v: FluxField) -> float:
    sys.mesh.check_same(u.mesh)
    sys.mesh.check_same(v.mesh)
    return float(d_vector(sys, u.edge_fluxes) @ v.edge_fluxes)


def rhs_g(sys: MixedSystem, v: FluxField) -> float:
    sys.mesh.check_same(v.mesh)
    return float(g_vector(sys) @ v.edge_fluxes)


def rhs_f_tilde(sys: MixedSystem, q: ScalarField, prev_S=None, prev_gamma=None) -> float:
    sys.mesh.check_same(q.mesh)
    if sys.semi_discrete or prev_S is not None:
        prev_S = prev_S if prev_S is not None else sys.prev_S
        if prev_S is None or sys.dt is None:
            raise ContractError("semi-discrete right-hand side needs prev_S and dt")
        prev_gamma = prev_gamma if prev_gamma is not None else (sys.prev_gamma or sys.coeffs.gamma)
        sys = MixedSystem(sys.mesh, sys.coeffs, sys.boundary, sys.source, sys.eps, sys.dt, prev_S, prev_gamma)
    return float(f_tilde_vector(sys) @ q.values)


def lagged_matrices(sys: MixedSystem, m):
    """Picard matrices with the nonlinear coefficients frozen at ``m``.

    Returns ``(A_lag, D_lag)`` with ``A_lag v = sum w (alpha + beta |m|) m_q . v_q``
    and ``D_lag v = eps B^T (|div m| div v)``.
    """
    mesh, u, w = _corner_data(sys, m)
    coef = sys.coeffs.alpha.values[:, None] + sys.coeffs.beta.values[:, None] * np.linalg.norm(u, axis=-1)
    ce = mesh.corner_edges
    da = w * coef / mesh.cell_hy[:, None] ** 2
    db = w * coef / mesh.cell_hx[:, None] ** 2
    n = mesh.n_edges
    diag = np.zeros(n)
    np.add.at(diag, ce[..., 0], da)
    np.add.at(diag, ce[..., 1], db)
    A_lag = sp.diags(diag).tocsr()
    B = incidence_matrix(mesh)
    if sys.eps == 0:
        D_lag = sp.csr_matrix((n, n))
    else:
        d = _cell_div(sys, m)
        D_lag = (B.T @ sp.diags(sys.eps * np.abs(d) / mesh.cell_measures) @ B).tocsr()
    return A_lag, D_lag
