"""Nonlinear solvers for the mixed problem.

``solve_regularized`` runs damped Newton on one regularized system.
``solve_stationary`` drives the regularization to zero along a geometric
schedule and finishes with an unregularized Newton solve.
``solve_homogeneous_divfree`` handles zero sources directly on the
divergence-free subspace.

When the ``rho``-type term is present (``eps > 0`` or a time step) Newton
iterates on the pressure ``P = S / sqrt(|S|)`` instead of ``S``: the
accumulation term is then linear in ``P`` and its derivative stays bounded
where ``S`` vanishes.  Residuals are always evaluated in terms of ``S``.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import assembly, kernel
from .assembly import MixedSystem
from .errors import ConditioningError, ContinuationError, ContractError, NonConvergenceError, StagnationError
from .grid import FluxField, ScalarField, lp_norm, ws_div_norm

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 30
PICARD_SWEEPS = 5


@dataclass(frozen=True)
class ContinuationSchedule:
    """Regularization parameters ``eps0 * factor**k`` for ``k < max_stages``.

    ``stage_tol`` bounds the distance between successive stage solutions;
    ``None`` means ``1e-6 * (1 + data norm)``.
    """

    eps0: float = 1.0
    factor: float = 0.25
    max_stages: int = 16
    stage_tol: float | None = None

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ContractError("eps0 must be positive")
        if not 0 < self.factor < 1:
            raise ContractError("factor must lie in (0, 1)")
        if self.max_stages < 1:
            raise ContractError("max_stages must be >= 1")
        if self.stage_tol is not None and not self.stage_tol > 0:
            raise ContractError("stage_tol must be positive")

    def eps(self, k):
        return self.eps0 * self.factor ** k


@dataclass
class StageRecord:
    eps: float
    newton_iters: int
    final_residual: float
    residual_history: list
    m_norm: float = float("nan")
    S_norm: float = float("nan")
    distance: float = float("nan")
    picard_sweeps: int = 0


@dataclass
class SolveReport:
    converged: bool = False
    stages: list = field(default_factory=list)
    monitored_norms: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def summary(self):
        """Flat, deterministic key/value view (no timing)."""
        out = {"converged": self.converged, "n_stages": len(self.stages)}
        if self.stages:
            out["final_eps"] = self.stages[-1].eps
            out["final_residual"] = self.stages[-1].final_residual
            out["newton_iterations"] = sum(s.newton_iters for s in self.stages)
        out.update(self.monitored_norms)
        return out


def state_distance(a, b):
    """``||m_a - m_b||_{W^3(div)} + ||S_a - S_b||_{3/2}``."""
    (ma, Sa), (mb, Sb) = a, b
    return ws_div_norm(ma - mb, 3) + lp_norm(Sa - Sb, 1.5)


def monitored_norms(sys: MixedSystem, m: FluxField, S: ScalarField):
    mesh = sys.mesh
    div = assembly.flux_sums(mesh, m.edge_fluxes) / mesh.cell_measures
    return {
        "m_w3div": ws_div_norm(m, 3),
        "S_l32": lp_norm(S, 1.5),
        "mass_defect_l32": lp_norm(ScalarField(mesh, div - sys.source.values), 1.5),
    }


def data_norm(sys: MixedSystem):
    """``||f~ / area||_3 + max |S_b|``; ``f~`` includes the lagged density of a time step."""
    mesh = sys.mesh
    f = lp_norm(ScalarField(mesh, assembly.f_tilde_vector(sys) / mesh.cell_measures), 3)
    sb = float(np.max(np.abs(sys.boundary.values))) if len(sys.boundary.values) else 0.0
    return f + sb


# -- Newton core ---------------------------------------------------------------


class _Newton:
    """Damped Newton with Armijo backtracking and a Picard fallback."""

    def __init__(self, sys: MixedSystem, delta=0.0):
        self.sys = sys
        self.delta = delta
        self.B = assembly.incidence_matrix(sys.mesh)
        self.ne = sys.mesh.n_edges
        weight = sys.c_weight
        self.use_pressure = bool(np.all(weight > 0))
        self.cdiag = sys.mesh.cell_measures * weight

    def to_unknowns(self, S):
        return kernel.signed_sqrt(S) if self.use_pressure else S

    def to_S(self, y):
        return np.abs(y) * y if self.use_pressure else y

    def split(self, x):
        return x[: self.ne], x[self.ne:]

    def residual(self, x):
        m, y = self.split(x)
        return assembly.residual(self.sys, m, self.to_S(y))

    def jacobian(self, x):
        sys, B = self.sys, self.B
        m, y = self.split(x)
        top = assembly.a_jacobian(sys, m, self.delta) + assembly.d_jacobian(sys, m)
        if self.use_pressure:
            coupling = -B.T @ sp.diags(2.0 * np.abs(y))
            lower = sp.diags(self.cdiag)
        else:
            coupling = -B.T
            lower = sp.diags(assembly.c_jacobian_diag(sys, y, self.delta))
        return sp.bmat([[top, coupling], [B, lower]], format="csc")

    def picard(self, x):
        """One lagged-coefficient sweep; returns the new iterate."""
        sys, B = self.sys, self.B
        m, y = self.split(x)
        A_lag, D_lag = assembly.lagged_matrices(sys, m)
        if self.use_pressure:
            coupling = -B.T @ sp.diags(np.abs(y))
            lower = sp.diags(self.cdiag)
        else:
            lower = sp.diags(self.cdiag / np.sqrt(np.abs(y) + 1e-300))
            coupling = -B.T
        J = sp.bmat([[A_lag + D_lag, coupling], [B, lower]], format="csc")
        rhs = np.concatenate([assembly.g_vector(sys), assembly.f_tilde_vector(sys)])
        return assembly.solve_linear(J, rhs)

    def run(self, m0, S0, tol, max_iter):
        x = np.concatenate([m0, self.to_unknowns(S0)])
        r = self.residual(x)
        norm = assembly.residual_norm(r)
        history = [norm]
        iters = sweeps = 0
        full_step = False
        while True:
            if norm == 0.0 or (norm <= tol and full_step):
                break
            if iters >= max_iter:
                raise NonConvergenceError(
                    f"Newton did not reach {tol:.2e} in {max_iter} iterations (residual {norm:.3e})",
                    report=history, state=self.state(x))
            dx = assembly.solve_linear(self.jacobian(x), -r)
            iters += 1
            if norm <= tol:
                # one undamped step so the linear constraints hold to round-off
                trial = x + dx
                r_trial = self.residual(trial)
                n_trial = assembly.residual_norm(r_trial)
                if n_trial <= tol:
                    x, r, norm = trial, r_trial, n_trial
                    history.append(norm)
                break
            lam = 1.0
            for _ in range(MAX_HALVINGS):
                trial = x + lam * dx
                r_trial = self.residual(trial)
                n_trial = assembly.residual_norm(r_trial)
                if n_trial <= (1.0 - ARMIJO_C * lam) * norm:
                    x, r, norm = trial, r_trial, n_trial
                    full_step = lam == 1.0
                    history.append(norm)
                    break
                lam *= 0.5
            else:
                log.debug("line search stalled at residual %.3e, trying Picard", norm)
                start = norm
                for _ in range(PICARD_SWEEPS):
                    x = self.picard(x)
                    sweeps += 1
                    r = self.residual(x)
                    norm = assembly.residual_norm(r)
                    history.append(norm)
                full_step = False
                if not norm < start:
                    raise StagnationError(
                        f"line search and Picard both stalled at residual {start:.3e}",
                        report=history, state=self.state(x))
        return self.state(x), iters, history, sweeps

    def state(self, x):
        m, y = self.split(x)
        mesh = self.sys.mesh
        return FluxField(mesh, m), ScalarField(mesh, self.to_S(y))


def _initial_arrays(sys, initial):
    if initial is None:
        return np.zeros(sys.mesh.n_edges), np.zeros(sys.mesh.n_cells)
    m, S = initial
    sys.mesh.check_same(m.mesh)
    sys.mesh.check_same(S.mesh)
    return np.array(m.edge_fluxes), np.array(S.values)


def _solve(sys, initial, tol, max_iter, delta):
    m0, S0 = _initial_arrays(sys, initial)
    state, iters, history, sweeps = _Newton(sys, delta).run(m0, S0, tol, max_iter)
    record = StageRecord(sys.eps, iters, history[-1], history, picard_sweeps=sweeps)
    return state, record


# -- public solvers --------------------------------------------------------------


def solve_regularized(sys: MixedSystem, initial=None, tol=1e-10, max_iter=50, smoothing_delta=0.0):
    """Solve one regularized system from ``initial`` (zero when None)."""
    if not sys.semi_discrete and not sys.eps > 0:
        raise ContractError("the stationary regularized problem needs eps > 0")
    if not tol > 0:
        raise ContractError("tol must be positive")
    t0 = time.perf_counter()
    report = SolveReport()
    try:
        (m, S), record = _solve(sys, initial, tol, max_iter, smoothing_delta)
    except NonConvergenceError as exc:
        report.stages.append(StageRecord(sys.eps, max_iter, exc.report[-1], exc.report))
        report.wall_time = time.perf_counter() - t0
        exc.report = report
        raise
    norms = monitored_norms(sys, m, S)
    record.m_norm, record.S_norm = norms["m_w3div"], norms["S_l32"]
    report.stages.append(record)
    report.converged = True
    report.monitored_norms = norms
    report.wall_time = time.perf_counter() - t0
    return (m, S), report


def solve_stationary(sys: MixedSystem, schedule: ContinuationSchedule | None = None, tol=1e-10,
                     initial=None, max_iter=50, smoothing_delta=0.0):
    """Regularization continuation followed by an unregularized Newton solve.

    ``sys.eps`` is ignored.  For a semi-discrete system the schedule only
    scales the divergence penalty, since the accumulation term already
    makes each step well posed.
    """
    schedule = schedule or ContinuationSchedule()
    if not tol > 0:
        raise ContractError("tol must be positive")
    stage_tol = schedule.stage_tol
    if stage_tol is None:
        stage_tol = 1e-6 * (1.0 + data_norm(sys))
    t0 = time.perf_counter()
    report = SolveReport()
    state = initial
    stage_solutions = []
    met = False
    for k in range(schedule.max_stages):
        stage_sys = sys.with_eps(schedule.eps(k))
        try:
            state, record = _solve(stage_sys, state, tol, max_iter, smoothing_delta)
        except NonConvergenceError as exc:
            report.wall_time = time.perf_counter() - t0
            raise ContinuationError(f"stage {k} (eps={stage_sys.eps:.3e}) failed: {exc}",
                                    report=report, stage_solutions=stage_solutions) from exc
        norms = monitored_norms(stage_sys, *state)
        record.m_norm, record.S_norm = norms["m_w3div"], norms["S_l32"]
        if stage_solutions:
            record.distance = state_distance(state, stage_solutions[-1])
        report.stages.append(record)
        stage_solutions.append(state)
        log.debug("stage %d eps=%.3e iters=%d distance=%.3e", k, record.eps, record.newton_iters, record.distance)
        if record.distance <= stage_tol:
            met = True
            break
    if not met and schedule.max_stages > 1:
        report.wall_time = time.perf_counter() - t0
        raise ContinuationError(
            f"schedule exhausted after {schedule.max_stages} stages without stage distance <= {stage_tol:.3e}",
            report=report, stage_solutions=stage_solutions)
    final_sys = sys.with_eps(0.0)
    try:
        state, record = _solve(final_sys, state, tol, max_iter, smoothing_delta)
    except NonConvergenceError as exc:
        report.wall_time = time.perf_counter() - t0
        raise ContinuationError(f"unregularized solve failed: {exc}", report=report,
                                stage_solutions=stage_solutions) from exc
    norms = monitored_norms(final_sys, *state)
    record.m_norm, record.S_norm = norms["m_w3div"], norms["S_l32"]
    record.distance = state_distance(state, stage_solutions[-1])
    report.stages.append(record)
    report.converged = True
    report.monitored_norms = norms
    report.wall_time = time.perf_counter() - t0
    return state, report


def streamfunction_basis(mesh):
    """Edge fluxes of the discrete curls of corner hat functions.

    Column ``j`` is the flux field of the streamfunction equal to 1 at vertex
    ``j + 1`` (vertex 0 is pinned).  Its columns span the kernel of ``B``.
    """
    ne = mesh.n_edges
    start, end = mesh.edges[:, 0], mesh.edges[:, 1]
    vertical = mesh.edge_normals[:, 0] > 0.5
    sign = np.where(vertical, 1.0, -1.0)
    rows = np.concatenate([np.arange(ne), np.arange(ne)])
    cols = np.concatenate([end, start])
    vals = np.concatenate([sign, -sign])
    C = sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_vertices))
    return C[:, 1:].tocsc()


def solve_homogeneous_divfree(sys: MixedSystem, tol=1e-10, max_iter=50):
    """Zero-source problem solved on ``ker B`` without regularization.

    The flux is ``m = C psi`` with ``C`` the streamfunction basis; ``psi``
    solves ``C^T (A(C psi) - g) = 0`` by damped Newton.  ``S`` is then
    recovered from ``B^T S = A(m) - g`` in the least-squares sense, which is
    exact because ``B^T`` is injective.
    """
    if np.any(sys.source.values != 0.0):
        raise ContractError("solve_homogeneous_divfree requires a zero source")
    if sys.semi_discrete:
        raise ContractError("solve_homogeneous_divfree is for stationary systems")
    t0 = time.perf_counter()
    sys0 = sys.with_eps(0.0)
    mesh = sys.mesh
    C = streamfunction_basis(mesh)
    g = assembly.g_vector(sys0)

    def reduced_residual(psi):
        return C.T @ (assembly.a_vector(sys0, C @ psi) - g)

    psi = np.zeros(C.shape[1])
    r = reduced_residual(psi)
    norm = assembly.residual_norm(r)
    history = [norm]
    iters = 0
    while norm > tol:
        if iters >= max_iter:
            raise NonConvergenceError(f"divergence-free Newton stalled at {norm:.3e}", report=history)
        J = (C.T @ assembly.a_jacobian(sys0, C @ psi) @ C).tocsc()
        try:
            step = assembly.solve_linear(J, -r)
        except ConditioningError:
            raise
        lam = 1.0
        for _ in range(MAX_HALVINGS):
            trial = psi + lam * step
            r_trial = reduced_residual(trial)
            n_trial = assembly.residual_norm(r_trial)
            if n_trial <= (1.0 - ARMIJO_C * lam) * norm:
                break
            lam *= 0.5
        else:
            raise StagnationError(f"divergence-free line search stalled at {norm:.3e}", report=history)
        psi, r, norm = trial, r_trial, n_trial
        history.append(norm)
        iters += 1
    m = C @ psi
    B = assembly.incidence_matrix(mesh)
    rhs = B @ (assembly.a_vector(sys0, m) - g)
    S = assembly.solve_linear((B @ B.T).tocsc(), rhs)
    state = (FluxField(mesh, m), ScalarField(mesh, S))
    norms = monitored_norms(sys0, *state)
    record = StageRecord(0.0, iters, assembly.residual_norm(assembly.residual(sys0, m, S)), history,
                         m_norm=norms["m_w3div"], S_norm=norms["S_l32"])
    report = SolveReport(True, [record], norms, time.perf_counter() - t0)
    return state, report
