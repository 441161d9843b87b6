"""Implicit-Euler time stepping of the mixed gas-flow problem.

Step ``k`` solves::

    A^k(m) + D_eps(m) - B^T S = g^k
    phi (rho^k(S) - rho^{k-1}(S^{k-1})) / dt * area + B m = f^k * area

where the lagged density uses the previous step's ``gamma``.  The time loop
in :func:`run` is restricted to zero boundary data and records the energy,
flux and increment monitors of every step in a :class:`BoundMonitor`.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import assembly, kernel
from .assembly import CoefficientField, MixedSystem
from .errors import ContractError, NonConvergenceError
from .grid import BoundaryData, FluxField, Mesh, ScalarField, flux_lp_norm, flux_sums, lp_norm
from .io import write_csv, write_vtk
from .stationary import ContinuationSchedule, solve_stationary

log = logging.getLogger(__name__)

# slack allowed when checking declared Lipschitz constants against the data
LIPSCHITZ_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ContractError("horizon must be a positive time")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ContractError("steps must be an integer >= 1")

    @property
    def dt(self):
        return self.horizon / self.steps

    def time(self, k):
        return self.horizon * k / self.steps

    @property
    def times(self):
        return self.horizon * np.arange(self.steps + 1) / self.steps


def _per_step(value, n, what, kind):
    if isinstance(value, kind):
        return [value] * n
    value = list(value)
    if len(value) != n:
        raise ContractError(f"{what} needs {n} entries (one per time level), got {len(value)}")
    for v in value:
        if not isinstance(v, kind):
            raise ContractError(f"{what} entries must be {kind.__name__}")
    return value


@dataclass(frozen=True, eq=False)
class TransientProblem:
    """Data of the time-dependent problem on levels ``k = 0..K``.

    Coefficients, sources and boundary values are either one object (constant
    in time) or a sequence of ``K + 1`` objects.  ``lipschitz`` declares
    ``L(alpha), L(beta), L(gamma), L(f)``; undeclared constants are taken
    from the data.  Declared constants are checked against consecutive
    levels.
    """

    mesh: Mesh
    time_grid: TimeGrid
    coeffs: CoefficientField | Sequence[CoefficientField]
    initial_S: ScalarField
    sources: ScalarField | Sequence[ScalarField] | None = None
    boundary: BoundaryData | Sequence[BoundaryData] | None = None
    lipschitz: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.time_grid.steps + 1
        mesh = self.mesh
        coeffs = _per_step(self.coeffs, n, "coeffs", CoefficientField)
        sources = _per_step(self.sources if self.sources is not None else ScalarField.zeros(mesh),
                            n, "sources", ScalarField)
        boundary = _per_step(self.boundary if self.boundary is not None else BoundaryData.zeros(mesh),
                             n, "boundary", BoundaryData)
        for c in coeffs:
            mesh.check_same(c.mesh)
        for s in sources:
            mesh.check_same(s.mesh)
        for b in boundary:
            mesh.check_same(b.mesh)
        mesh.check_same(self.initial_S.mesh)
        for k in range(1, n):
            if np.any(coeffs[k].phi.values != coeffs[0].phi.values):
                raise ContractError("phi must not depend on time")
        object.__setattr__(self, "coeffs", tuple(coeffs))
        object.__setattr__(self, "sources", tuple(sources))
        object.__setattr__(self, "boundary", tuple(boundary))
        object.__setattr__(self, "lipschitz", self._validated_lipschitz(dict(self.lipschitz)))

    def _validated_lipschitz(self, declared):
        dt = self.time_grid.dt
        rates = {}
        for name in ("alpha", "beta", "gamma"):
            diffs = [np.max(np.abs(getattr(b, name).values - getattr(a, name).values))
                     for a, b in zip(self.coeffs[:-1], self.coeffs[1:])]
            rates[name] = max(diffs, default=0.0) / dt
        fd = [lp_norm(b - a, 3) for a, b in zip(self.sources[:-1], self.sources[1:])]
        rates["f"] = max(fd, default=0.0) / dt
        out = {}
        for name, observed in rates.items():
            if name in declared:
                L = float(declared[name])
                if L < 0:
                    raise ContractError(f"L({name}) must be nonnegative")
                if observed > L * (1 + LIPSCHITZ_RTOL) + 1e-14:
                    raise ContractError(
                        f"{name} changes by {observed:.6g} per unit time, above its Lipschitz constant {L:.6g}")
                out[name] = L
            else:
                out[name] = float(observed)
        return out

    @property
    def dt(self):
        return self.time_grid.dt

    @property
    def steps(self):
        return self.time_grid.steps

    def lower(self, name):
        return min(c.lower(name) for c in self.coeffs)

    @property
    def homogeneous(self):
        return all(b.is_homogeneous for b in self.boundary)

    def system(self, k, prev_S, eps=0.0):
        """Semi-discrete system of step ``k`` with lagged state ``prev_S``."""
        if not 1 <= k <= self.steps:
            raise ContractError(f"step index {k} outside 1..{self.steps}")
        return MixedSystem(self.mesh, self.coeffs[k], self.boundary[k], self.sources[k], eps,
                           self.dt, prev_S, self.coeffs[k - 1].gamma)


def check_dt_admissible(problem: TransientProblem):
    """``(C dt < 1, C dt)`` with ``C = 2 (1/(phi_lo gamma_lo) + L(gamma)/gamma_lo)``."""
    phi_lo = problem.lower("phi")
    gamma_lo = problem.lower("gamma")
    c = 2.0 * (1.0 / (phi_lo * gamma_lo) + problem.lipschitz["gamma"] / gamma_lo)
    c_dt = c * problem.dt
    return bool(c_dt < 1.0), float(c_dt)


def weighted_energy(mesh, phi, gamma, S):
    """``sum area phi gamma |S|^{3/2}``."""
    return float(np.sum(mesh.cell_measures * phi * gamma * np.abs(S) ** 1.5))


def stored_mass(mesh, phi, gamma, S):
    """``sum area phi rho(S)``."""
    return float(np.sum(mesh.cell_measures * phi * kernel.rho_array(gamma, S)))


def boundary_outflow(mesh, m):
    """Net flux leaving the domain."""
    return float(np.sum(flux_sums(mesh, m)))


def jump_seminorm(mesh, S, p=1.5):
    """Finite-difference surrogate of ``|S|_{1,p}`` with zero exterior values.

    Each edge contributes ``|jump / d|^p`` over its diamond of area ``len * d``,
    ``d`` being the centroid distance (half a cell towards the boundary).
    """
    S = np.asarray(S, dtype=float)
    minus, plus = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    inner = (minus >= 0) & (plus >= 0)
    centre = mesh.cell_centroids
    jump = np.empty(mesh.n_edges)
    dist = np.empty(mesh.n_edges)
    jump[inner] = S[plus[inner]] - S[minus[inner]]
    dist[inner] = np.linalg.norm(centre[plus[inner]] - centre[minus[inner]], axis=1)
    outer = ~inner
    owner = np.where(minus[outer] >= 0, minus[outer], plus[outer])
    jump[outer] = S[owner]
    dist[outer] = np.linalg.norm(centre[owner] - mesh.edge_midpoints[outer], axis=1)
    total = np.sum(mesh.edge_lengths * dist * np.abs(jump / dist) ** p)
    return float(total ** (1.0 / p))


MONITOR_COLUMNS = ("step", "time", "energy", "flux_norm", "increment", "increment_sum",
                   "jump_seminorm", "stored_mass", "outflow", "mass_defect",
                   "recursion_bound", "recursion_slack")


@dataclass
class BoundMonitor:
    """Per-step observables of the a-priori bounds.

    ``energy`` is ``sum area phi gamma^k |S^k|^{3/2}``; ``recursion_bound``
    is ``(energy^{k-1} + dt ||f^k||_3^3) / (1 - C dt)``, which must dominate
    ``energy`` at every step; ``mass_defect`` is the mismatch between the
    change of stored mass and ``dt (int f - outflow)``.
    """

    c_dt: float
    rows: list = field(default_factory=list)

    def column(self, name):
        i = MONITOR_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def record(self, **values):
        row = tuple(values[c] for c in MONITOR_COLUMNS)
        if not all(np.isfinite(v) for v in row):
            raise FloatingPointError(f"non-finite monitor value at step {values['step']}")
        self.rows.append(row)

    def recursion_violations(self, rtol=0.0):
        """Steps ``k >= 1`` where ``energy > recursion_bound (1 + rtol)``."""
        e = self.column("energy")[1:]
        bound = self.column("recursion_bound")[1:]
        return [k + 1 for k in np.nonzero(e > bound * (1.0 + rtol))[0]]

    def to_csv(self, path):
        return write_csv(path, MONITOR_COLUMNS, self.rows)


@dataclass
class Trajectory:
    """States ``(m^k, S^k)`` on the levels ``t^k``, ``k = 0..K``."""

    times: np.ndarray
    fluxes: list
    pressures: list
    reports: list = field(default_factory=list)

    def __len__(self):
        return len(self.pressures)

    def __getitem__(self, k):
        return self.fluxes[k], self.pressures[k]

    def _locate(self, t):
        T = self.times[-1]
        if not 0.0 <= t <= T * (1 + 1e-14):
            raise ContractError(f"time {t} outside [0, {T}]")
        k = int(np.searchsorted(self.times, t, side="left"))
        return min(max(k, 0), len(self.times) - 1)

    def piecewise_constant(self, t):
        """``S^k`` on ``(t^{k-1}, t^k]`` and ``S^0`` at ``t = 0``."""
        return self.pressures[self._locate(t)]

    def piecewise_constant_flux(self, t):
        return self.fluxes[self._locate(t)]

    def piecewise_linear(self, t):
        """Linear interpolation of ``S`` between levels."""
        k = self._locate(t)
        if k == 0:
            return self.pressures[0]
        t0, t1 = self.times[k - 1], self.times[k]
        lam = (t - t0) / (t1 - t0)
        return self.pressures[k - 1] * (1.0 - lam) + self.pressures[k] * lam

    def to_vtk(self, directory, steps=None, prefix="state"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        steps = range(len(self)) if steps is None else steps
        paths = []
        for k in steps:
            m, S = self[k]
            paths.append(write_vtk(directory / f"{prefix}_{k:05d}.vtk", S.mesh, S, m,
                                   title=f"step {k} t={self.times[k]!r}"))
        return paths


# -- steps -------------------------------------------------------------------


def default_step_schedule(problem: TransientProblem):
    """Penalty continuation scaled to the step: divergences grow like ``1/dt``."""
    return ContinuationSchedule(eps0=problem.dt, factor=0.25, max_stages=16)


def step(problem: TransientProblem, k, prev_S: ScalarField, tol=1e-10, initial=None,
         schedule: ContinuationSchedule | None = None):
    """Solve step ``k`` from ``prev_S``; divergence-penalty continuation only."""
    problem.mesh.check_same(prev_S.mesh)
    if not np.all(np.isfinite(prev_S.values)):
        raise ContractError("prev_S must be finite")
    sys = problem.system(k, prev_S)
    if schedule is None:
        schedule = default_step_schedule(problem)
    if initial is None:
        initial = (FluxField.zeros(problem.mesh), prev_S)
    try:
        return solve_stationary(sys, schedule, tol=tol, initial=initial)
    except NonConvergenceError as exc:
        exc.step = k
        exc.args = (f"step {k}: {exc}",)
        raise


def initial_flux(problem: TransientProblem, tol=1e-12, max_iter=50):
    """Flux ``m^0`` solving ``A^0(m) = B^T S^0 + g^0``.

    This is the discrete counterpart of ``m^0 = F^0(-grad S^0)``; the time
    scheme itself never uses it.
    """
    mesh = problem.mesh
    sys = MixedSystem(mesh, problem.coeffs[0], problem.boundary[0], problem.sources[0])
    B = assembly.incidence_matrix(mesh)
    rhs = B.T @ problem.initial_S.values + assembly.g_vector(sys)
    m = np.zeros(mesh.n_edges)
    r = assembly.a_vector(sys, m) - rhs
    norm = assembly.residual_norm(r)
    for _ in range(max_iter):
        if norm <= tol:
            break
        dm = assembly.solve_linear(assembly.a_jacobian(sys, m).tocsc(), -r)
        lam = 1.0
        while lam > 1e-9:
            r_new = assembly.a_vector(sys, m + lam * dm) - rhs
            if assembly.residual_norm(r_new) < norm:
                break
            lam *= 0.5
        m = m + lam * dm
        r = r_new
        norm = assembly.residual_norm(r)
    else:
        if norm > tol:
            raise NonConvergenceError(f"initial flux solve stalled at {norm:.3e}")
    return FluxField(mesh, m)


def continuity_residual(problem: TransientProblem, k, state, prev_S):
    """Scaled residual of the primal continuity equation at step ``k``.

    The gradient is reconstructed cellwise as ``-G^k(m^k)`` at the corners,
    mapped back through ``F^k`` and inserted into
    ``phi (rho^k(S^k) - rho^{k-1}(S^{k-1})) / dt + div F^k(-grad S^k) = f^k``.
    """
    m, S = state
    mesh = problem.mesh
    c = problem.coeffs[k]
    alpha, beta = c.alpha.values[:, None], c.beta.values[:, None]
    u = m.corner_vectors()
    grad = -kernel.g_array(alpha, beta, u)
    back = kernel.f_array(alpha, beta, -grad)
    # corner components back to edge fluxes: average the corners touching each edge
    ce = mesh.corner_edges
    acc = np.zeros(mesh.n_edges)
    cnt = np.zeros(mesh.n_edges)
    np.add.at(acc, ce[..., 0], back[..., 0] * mesh.cell_hy[:, None])
    np.add.at(acc, ce[..., 1], back[..., 1] * mesh.cell_hx[:, None])
    np.add.at(cnt, ce[..., 0], 1.0)
    np.add.at(cnt, ce[..., 1], 1.0)
    flux = acc / cnt
    phi = c.phi.values
    accum = phi * (kernel.rho_array(c.gamma.values, S.values)
                   - kernel.rho_array(problem.coeffs[k - 1].gamma.values, prev_S.values)) / problem.dt
    res = mesh.cell_measures * (accum - problem.sources[k].values) + flux_sums(mesh, flux)
    return assembly.residual_norm(res)


def run(problem: TransientProblem, tol=1e-10, schedule: ContinuationSchedule | None = None):
    """March ``K`` implicit-Euler steps from ``S^0``.

    The first step runs the full continuation schedule; later steps start
    at its final regularization level, warm-started from the previous state.
    Returns ``(trajectory, monitor)``.
    """
    if not problem.homogeneous:
        raise ContractError("the time loop needs homogeneous (zero) Dirichlet boundary data")
    ok, c_dt = check_dt_admissible(problem)
    if not ok:
        raise ContractError(f"time step too large: C*dt = {c_dt:.6g} must be < 1")
    schedule = schedule or default_step_schedule(problem)
    mesh = problem.mesh
    dt = problem.dt
    phi = problem.coeffs[0].phi.values
    monitor = BoundMonitor(c_dt)
    m_prev, S_prev = initial_flux(problem, tol=min(tol, 1e-12)), problem.initial_S
    traj = Trajectory(problem.time_grid.times, [m_prev], [S_prev])
    gamma0 = problem.coeffs[0].gamma.values
    energy = weighted_energy(mesh, phi, gamma0, S_prev.values)
    mass = stored_mass(mesh, phi, gamma0, S_prev.values)
    monitor.record(step=0, time=0.0, energy=energy, flux_norm=flux_lp_norm(m_prev, 3), increment=0.0,
                   increment_sum=0.0, jump_seminorm=jump_seminorm(mesh, S_prev.values), stored_mass=mass,
                   outflow=0.0, mass_defect=0.0, recursion_bound=energy, recursion_slack=0.0)
    increment_sum = 0.0
    step_schedule = schedule
    for k in range(1, problem.steps + 1):
        (m, S), report = step(problem, k, S_prev, tol, initial=(m_prev, S_prev), schedule=step_schedule)
        if k == 1:
            # regularized stages actually used; the last one is the floor for later steps
            floor = report.stages[-2].eps if len(report.stages) > 1 else schedule.eps0
            step_schedule = ContinuationSchedule(eps0=floor, factor=schedule.factor, max_stages=1,
                                                 stage_tol=schedule.stage_tol)
        gamma = problem.coeffs[k].gamma.values
        new_energy = weighted_energy(mesh, phi, gamma, S.values)
        f_norm3 = lp_norm(problem.sources[k], 3) ** 3
        bound = (energy + dt * f_norm3) / (1.0 - c_dt)
        increment = dt * lp_norm(ScalarField(mesh, (S.values - S_prev.values) / dt), 1.5) ** 1.5
        increment_sum += increment
        new_mass = stored_mass(mesh, phi, gamma, S.values)
        outflow = boundary_outflow(mesh, m.edge_fluxes)
        source_total = float(np.sum(mesh.cell_measures * problem.sources[k].values))
        defect = abs((new_mass - mass) - dt * (source_total - outflow))
        monitor.record(step=k, time=problem.time_grid.time(k), energy=new_energy,
                       flux_norm=flux_lp_norm(m, 3), increment=increment, increment_sum=increment_sum,
                       jump_seminorm=jump_seminorm(mesh, S.values), stored_mass=new_mass, outflow=outflow,
                       mass_defect=defect, recursion_bound=bound, recursion_slack=bound - new_energy)
        traj.fluxes.append(m)
        traj.pressures.append(S)
        traj.reports.append(report)
        log.debug("step %d energy=%.6e bound=%.6e", k, new_energy, bound)
        energy, mass = new_energy, new_mass
        m_prev, S_prev = m, S
    return traj, monitor
