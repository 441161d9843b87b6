import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import brentq

from forchmix.assembly import CoefficientField, MixedSystem, residual, residual_norm
from forchmix.errors import ContinuationError, ContractError, NonConvergenceError
from forchmix.grid import BoundaryData, FluxField, ScalarField, build_structured_mesh, divergence
from forchmix.stationary import (ContinuationSchedule, solve_homogeneous_divfree, solve_regularized,
                                 solve_stationary, streamfunction_basis)
from oracles import linear_saddle_solution


def make_system(mesh, alpha=1.0, beta=1.0, source=0.0, boundary=None, eps=0.0):
    coeffs = CoefficientField.constant(mesh, alpha, beta)
    bd = boundary if boundary is not None else BoundaryData.zeros(mesh)
    return MixedSystem(mesh, coeffs, bd, ScalarField(mesh, source), eps)


def test_zero_data_gives_zero_solution():
    mesh = build_structured_mesh(3, 3)
    (m, S), report = solve_regularized(make_system(mesh, eps=0.5))
    assert report.converged
    assert np.all(m.edge_fluxes == 0) and np.all(S.values == 0)
    (m, S), report = solve_stationary(make_system(mesh))
    assert np.all(m.edge_fluxes == 0) and np.all(S.values == 0)


def test_regularized_needs_positive_eps():
    mesh = build_structured_mesh(1, 1)
    with pytest.raises(ContractError):
        solve_regularized(make_system(mesh))


@pytest.mark.parametrize("eps", [0.0, 1e-2, 1.0])
def test_linear_case_matches_direct_solve(eps):
    mesh = build_structured_mesh(2, 2)
    bd = BoundaryData.from_function(mesh, lambda p: p[:, 0] - p[:, 1])
    sys = make_system(mesh, beta=0.0, source=1.0, boundary=bd)
    m_ref, S_ref = linear_saddle_solution(mesh, 1.0, 1.0, bd.values)
    if eps == 0.0:
        (m, S), _ = solve_stationary(sys, tol=1e-13)
        np.testing.assert_allclose(m.edge_fluxes, m_ref, atol=1e-10)
        np.testing.assert_allclose(S.values, S_ref, atol=1e-10)
    else:
        # the regularized solution approaches the oracle as eps shrinks
        (m, S), _ = solve_regularized(sys.with_eps(eps), tol=1e-13)
        assert np.max(np.abs(S.values - S_ref)) < 20 * eps


def single_cell_solution(c, eps, alpha=1.0, beta=1.0):
    # equal outflow q through all four edges; flux equation gives S(q), mass equation fixes q
    def pressure(q):
        return 0.5 * (alpha * q + np.sqrt(2.0) * beta * q ** 2) + 16.0 * eps * q ** 2

    q = brentq(lambda q: eps * np.sqrt(pressure(q)) + 4.0 * q - c, 0.0, c / 4.0 + 1.0, xtol=1e-15)
    return q, pressure(q)


@pytest.mark.parametrize("c", [0.5, 1.0, 7.0])
def test_single_cell_matches_bisection(c):
    mesh = build_structured_mesh(1, 1)
    eps = 1e-3
    q, S_ref = single_cell_solution(c, eps)
    (m, S), _ = solve_regularized(make_system(mesh, source=c, eps=eps), tol=1e-13)
    outflow = m.edge_fluxes[mesh.cell_edges[0]] * np.array([-1, 1, -1, 1])
    np.testing.assert_allclose(outflow, q, rtol=1e-10)
    assert S.values[0] == pytest.approx(S_ref, rel=1e-10)


def test_nonconvergence_carries_history():
    mesh = build_structured_mesh(4, 4)
    with pytest.raises(NonConvergenceError) as info:
        solve_regularized(make_system(mesh, source=50.0, eps=1e-3), max_iter=1)
    assert info.value.report.stages[0].residual_history


def test_single_stage_schedule_skips_distance_check():
    mesh = build_structured_mesh(3, 3)
    sys = make_system(mesh, source=1.0)
    (m, S), report = solve_stationary(sys, ContinuationSchedule(eps0=1e-3, max_stages=1))
    assert report.converged and len(report.stages) == 2
    assert residual_norm(residual(sys, m.edge_fluxes, S.values)) <= 1e-10


def test_exhausted_schedule_reports_stages():
    mesh = build_structured_mesh(3, 3)
    sys = make_system(mesh, source=1.0)
    with pytest.raises(ContinuationError) as info:
        solve_stationary(sys, ContinuationSchedule(eps0=1.0, factor=0.9, max_stages=3, stage_tol=1e-14))
    assert len(info.value.stage_solutions) == 3
    assert len(info.value.report.stages) == 3


def test_continuation_report_is_consistent():
    mesh = build_structured_mesh(4, 4)
    bd = BoundaryData.from_function(mesh, lambda p: 1 + p[:, 0] ** 2)
    sys = make_system(mesh, alpha=0.5, beta=2.0, source=1.0, boundary=bd)
    (m, S), report = solve_stationary(sys)
    eps = [s.eps for s in report.stages]
    assert eps[-1] == 0.0 and all(a > b for a, b in zip(eps, eps[1:]))
    assert report.stages[-1].final_residual <= 1e-10
    np.testing.assert_allclose(divergence(m).values, 1.0, atol=1e-12)
    summary = report.summary()
    assert summary["converged"] and "wall_time" not in summary


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_solution_does_not_depend_on_start(seed):
    mesh = build_structured_mesh(4, 4)
    rng = np.random.default_rng(seed)
    bd = BoundaryData.from_function(mesh, lambda p: np.sin(3 * p[:, 0]) + p[:, 1])
    sys = make_system(mesh, alpha=rng.uniform(0.5, 2), beta=rng.uniform(0.5, 2), source=rng.uniform(-2, 2),
                      boundary=bd)
    tol = 1e-11
    (m0, S0), _ = solve_stationary(sys, tol=tol)
    start = (FluxField(mesh, rng.standard_normal(mesh.n_edges)), ScalarField(mesh, rng.standard_normal(mesh.n_cells)))
    (m1, S1), _ = solve_stationary(sys, tol=tol, initial=start)
    assert np.max(np.abs(m0.edge_fluxes - m1.edge_fluxes)) <= 10 * tol
    assert np.max(np.abs(S0.values - S1.values)) <= 10 * tol


def test_streamfunction_basis_spans_divergence_free_fields():
    mesh = build_structured_mesh(3, 2)
    C = streamfunction_basis(mesh)
    B = sp.csr_matrix(np.array([np.bincount(mesh.cell_edges[K], weights=[-1, 1, -1, 1], minlength=mesh.n_edges)
                                for K in range(mesh.n_cells)]))
    assert abs(B @ C).max() == 0
    # dimension of ker B is n_edges - n_cells
    assert np.linalg.matrix_rank(C.toarray()) == mesh.n_edges - mesh.n_cells


def test_divfree_zero_and_constant_boundary():
    mesh = build_structured_mesh(3, 3)
    (m, S), _ = solve_homogeneous_divfree(make_system(mesh))
    assert np.all(m.edge_fluxes == 0) and np.allclose(S.values, 0)
    bd = BoundaryData(mesh, np.full(len(mesh.boundary_edges), 2.5))
    (m, S), _ = solve_homogeneous_divfree(make_system(mesh, boundary=bd))
    np.testing.assert_allclose(m.edge_fluxes, 0.0, atol=1e-14)
    np.testing.assert_allclose(S.values, 2.5, rtol=1e-13)


def test_divfree_matches_continuation_solver():
    mesh = build_structured_mesh(4, 4)
    bd = BoundaryData.from_function(mesh, lambda p: p[:, 0])
    sys = make_system(mesh, boundary=bd)
    (m0, S0), _ = solve_homogeneous_divfree(sys, tol=1e-13)
    (m1, S1), _ = solve_stationary(sys, tol=1e-13)
    np.testing.assert_allclose(m0.edge_fluxes, m1.edge_fluxes, atol=1e-9)
    np.testing.assert_allclose(S0.values, S1.values, atol=1e-9)


def test_divfree_rejects_source():
    mesh = build_structured_mesh(2, 2)
    with pytest.raises(ContractError):
        solve_homogeneous_divfree(make_system(mesh, source=1.0))


@pytest.mark.parametrize("kwargs", [dict(eps0=0.0), dict(factor=1.0), dict(max_stages=0), dict(stage_tol=-1.0)])
def test_schedule_validation(kwargs):
    with pytest.raises(ContractError):
        ContinuationSchedule(**kwargs)
