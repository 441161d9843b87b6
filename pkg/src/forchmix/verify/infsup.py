"""Discrete inf-sup constant of the flux/pressure pairing."""

from dataclasses import dataclass

import numpy as np

from ..assembly import incidence_matrix
from ..grid import Mesh


@dataclass(frozen=True)
class InfSupEstimate:
    theta_h: float
    h: float
    # cell vector attaining the infimum when the pairing is rank deficient
    deficient_direction: np.ndarray | None = None


def flux_gram(mesh: Mesh):
    """Gram matrix of ``||v||_0^2 + ||div v||_0^2`` (corner rule for the first term)."""
    w = 0.25 * mesh.cell_measures[:, None]
    ce = mesh.corner_edges
    diag = np.zeros(mesh.n_edges)
    np.add.at(diag, ce[..., 0], w / mesh.cell_hy[:, None] ** 2)
    np.add.at(diag, ce[..., 1], w / mesh.cell_hx[:, None] ** 2)
    B = incidence_matrix(mesh).toarray()
    return np.diag(diag) + B.T @ (B / mesh.cell_measures[:, None])


def estimate_inf_sup(mesh: Mesh, rank_tol=1e-12) -> InfSupEstimate:
    """Smallest singular value of ``M^{-1/2} B N^{-1/2}``.

    ``M`` is the cell mass matrix and ``N`` the :func:`flux_gram`; both are
    Hilbert (``s = 2``) surrogates of the natural norms.  Dense, so meant
    for small meshes.
    """
    B = incidence_matrix(mesh).toarray()
    evals, evecs = np.linalg.eigh(flux_gram(mesh))
    n_inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    scaled = (B / np.sqrt(mesh.cell_measures)[:, None]) @ n_inv_sqrt
    U, sv, _ = np.linalg.svd(scaled, full_matrices=False)
    theta = float(sv[-1])
    if theta <= rank_tol * max(float(sv[0]), 1.0):
        direction = U[:, -1] / np.sqrt(mesh.cell_measures)
        return InfSupEstimate(0.0, mesh.h, direction)
    return InfSupEstimate(theta, mesh.h)
