"""Manufactured solutions for the stationary problem.

Given ``S`` in closed form, the exact flux is ``m = -F(grad S)`` and the
matching source is ``f = div m``.  Both derivatives are taken numerically
with fourth-order central differences, so any smooth callable works.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import kernel
from ..assembly import CoefficientField, MixedSystem
from ..grid import BoundaryData, Mesh, ScalarField, cell_average, flux_sums, interpolate_flux


def _fd4(func, pts, axis, h):
    e = np.zeros(2)
    e[axis] = h
    return (-func(pts + 2 * e) + 8 * func(pts + e) - 8 * func(pts - e) + func(pts - 2 * e)) / (12 * h)


@dataclass(frozen=True)
class ManufacturedCase:
    """``S_exact`` on a rectangle with constant coefficients.

    ``gradient`` may be given in closed form; otherwise it is differenced
    with step ``fd_step``.
    """

    S_exact: Callable
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    phi: float = 1.0
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    gradient: Callable | None = None
    fd_step: float = 1e-3
    name: str = "manufactured"
    # the trace vanishes analytically; avoids sin(pi) round-off in boundary data
    zero_boundary: bool = False

    def grad(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(pts), dtype=float)
        h = self.fd_step * 1e-1
        return np.column_stack([_fd4(self.S_exact, pts, 0, h), _fd4(self.S_exact, pts, 1, h)])

    def flux(self, pts):
        """Exact mass flux ``-F(grad S)``."""
        return -kernel.f_array(self.alpha, self.beta, self.grad(pts))

    def source(self, pts, step=None):
        """``div m`` by fourth-order differences of :meth:`flux`."""
        h = self.fd_step if step is None else step
        pts = np.asarray(pts, dtype=float)
        return (_fd4(lambda p: self.flux(p)[:, 0], pts, 0, h)
                + _fd4(lambda p: self.flux(p)[:, 1], pts, 1, h))

    def pde_residual(self, pts):
        """Difference between :meth:`source` at two step sizes (consistency check)."""
        return np.abs(self.source(pts) - self.source(pts, self.fd_step * 0.5))

    def cell_source(self, mesh: Mesh) -> ScalarField:
        """Exact cell means of ``f``: net edge flux of ``m`` over the cell area."""
        m = interpolate_flux(mesh, self.flux, n_gauss=6)
        return ScalarField(mesh, flux_sums(mesh, m.edge_fluxes) / mesh.cell_measures)

    def boundary(self, mesh: Mesh) -> BoundaryData:
        if self.zero_boundary:
            return BoundaryData.zeros(mesh)
        return BoundaryData.from_function(mesh, self.S_exact)

    def coefficients(self, mesh: Mesh) -> CoefficientField:
        return CoefficientField.constant(mesh, self.alpha, self.beta, self.gamma, self.phi)

    def system(self, mesh: Mesh, eps=0.0) -> MixedSystem:
        return MixedSystem(mesh, self.coefficients(mesh), self.boundary(mesh), self.cell_source(mesh), eps)

    def exact_fields(self, mesh: Mesh):
        """``(edge-flux interpolant of m, cell means of S)``."""
        return interpolate_flux(mesh, self.flux, n_gauss=6), cell_average(mesh, self.S_exact, n_gauss=6)


def sine_case(alpha=1.0, beta=1.0):
    """``S = sin(pi x) sin(pi y)`` on the unit square (zero boundary values)."""

    def S(p):
        return np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        return np.pi * np.column_stack([np.cos(np.pi * x) * np.sin(np.pi * y),
                                        np.sin(np.pi * x) * np.cos(np.pi * y)])

    return ManufacturedCase(S, alpha, beta, gradient=grad, name=f"sine(alpha={alpha}, beta={beta})",
                            zero_boundary=True)


def constant_case(value=2.0, alpha=1.0, beta=1.0):
    """``S`` constant: no flow and zero source."""
    return ManufacturedCase(lambda p: np.full(len(p), value), alpha, beta,
                            gradient=lambda p: np.zeros((len(p), 2)), name=f"constant({value})")


def skewed_case(alpha=1.0, beta=1.0):
    """``S = sin(pi x) sin(pi y) exp(x - y/2)``: zero on the unit-square boundary.

    Unlike :func:`sine_case` it is not a separable eigenfunction, so flux
    interpolants do not satisfy the discrete equations by accident.
    """

    def S(p):
        x, y = p[:, 0], p[:, 1]
        return np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(x - 0.5 * y)

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        e = np.exp(x - 0.5 * y)
        sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
        sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
        return np.column_stack([e * sy * (np.pi * cx + sx), e * sx * (np.pi * cy - 0.5 * sy)])

    return ManufacturedCase(S, alpha, beta, gradient=grad, name=f"skewed(alpha={alpha}, beta={beta})",
                            zero_boundary=True)
