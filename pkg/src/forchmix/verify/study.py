"""Mesh-refinement studies against manufactured solutions."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NonConvergenceError
from ..grid import Mesh, build_structured_mesh, flux_lp_norm, lp_norm
from ..io import write_csv
from ..stationary import solve_stationary
from .manufactured import ManufacturedCase

STUDY_COLUMNS = ("h", "n_edges", "n_cells", "error_S", "error_m", "order_S", "order_m")


def observed_order(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 2 or np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class StudyTable:
    case: str
    rows: list = field(default_factory=list)

    def column(self, name):
        i = STUDY_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def order_S(self):
        return observed_order(self.column("h"), self.column("error_S"))

    @property
    def order_m(self):
        return observed_order(self.column("h"), self.column("error_m"))

    def to_csv(self, path):
        return write_csv(path, STUDY_COLUMNS, self.rows)

    def summary(self):
        lines = [f"convergence study: {self.case}",
                 f"{'h':>10} {'error_S':>12} {'error_m':>12} {'order_S':>8} {'order_m':>8}"]
        for h, _, _, es, em, os_, om in self.rows:
            lines.append(f"{h:10.4g} {es:12.4e} {em:12.4e} {os_:8.3f} {om:8.3f}")
        lines.append(f"least-squares order: S {self.order_S:.3f}, m {self.order_m:.3f}")
        return "\n".join(lines)


def convergence_study(case: ManufacturedCase, meshes, schedule=None, tol=1e-10, min_meshes=3):
    """Solve ``case`` on each mesh and tabulate errors and pairwise orders.

    ``meshes`` holds :class:`Mesh` objects or cell counts per side.  Errors
    are ``||S_h - mean S||_{3/2}`` and ``||m_h - interp m||_{0,3}``.  A failed
    solve raises :class:`NonConvergenceError` whose ``report`` is the partial
    table.
    """
    if len(meshes) < min_meshes:
        raise ContractError(f"a study needs at least {min_meshes} meshes")
    x0, x1, y0, y1 = case.domain
    meshes = [m if isinstance(m, Mesh) else build_structured_mesh(int(m), int(m), case.domain) for m in meshes]
    meshes.sort(key=lambda m: -m.h)
    table = StudyTable(case.name)
    for mesh in meshes:
        sys = case.system(mesh)
        try:
            (m, S), _ = solve_stationary(sys, schedule, tol=tol)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"study aborted at h={mesh.h:.4g}: {exc}", report=table) from exc
        m_ex, S_ex = case.exact_fields(mesh)
        err_S = lp_norm(S - S_ex, 1.5)
        err_m = flux_lp_norm(m - m_ex, 3)
        if table.rows:
            h0, e0s, e0m = table.rows[-1][0], table.rows[-1][3], table.rows[-1][4]
            o_s = observed_order([h0, mesh.h], [e0s, err_S])
            o_m = observed_order([h0, mesh.h], [e0m, err_m])
        else:
            o_s = o_m = float("nan")
        table.rows.append((mesh.h, mesh.n_edges, mesh.n_cells, err_S, err_m, o_s, o_m))
    return table
