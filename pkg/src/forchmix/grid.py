"""Structured quadrilateral meshes and the lowest-order mixed spaces on them.

Fluxes live on edges (one normal-flux degree of freedom per edge, the
Raviart-Thomas RT0 space); scalars are cellwise constant (P0).  Every edge
carries a fixed global unit normal: ``+x`` for vertical edges, ``+y`` for
horizontal ones.  An edge flux is the integral of ``v . n`` over the edge.

Volume integrals of flux vectors use the vertex (trapezoidal) rule: at each
cell corner the vector is rebuilt from the two edges meeting there.  The
centroid value is also available for output and for comparisons; it is the
average of the four corner values.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

# local edge slots within a cell
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
_LOCAL_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0])
# corner -> (vertical edge slot, horizontal edge slot); order BL, BR, TR, TL
_CORNERS = ((LEFT, BOTTOM), (RIGHT, BOTTOM), (RIGHT, TOP), (LEFT, TOP))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """A conforming mesh of axis-aligned rectangles.

    ``edge_cells[e] = (c_minus, c_plus)`` lists the cell behind and in front of
    the edge normal, ``-1`` where the edge lies on the boundary.
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    edge_normals: np.ndarray
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    edge_cells: np.ndarray
    cell_edges: np.ndarray
    cell_measures: np.ndarray
    cell_centroids: np.ndarray
    cell_hx: np.ndarray
    cell_hy: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    shape: tuple = field(default=(0, 0))
    domain: tuple = field(default=(0.0, 1.0, 0.0, 1.0))

    def __post_init__(self):
        if np.any(self.cell_measures <= 0):
            raise ContractError("cells must have positive area")
        counts = np.bincount(self.cell_edges.ravel(), minlength=self.n_edges)
        interior = np.ones(self.n_edges, dtype=bool)
        interior[self.boundary_edges] = False
        if np.any(counts[interior] != 2) or np.any(counts[~interior] != 1):
            raise ContractError("mesh is not conforming")

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        """Largest cell side length."""
        return float(max(self.cell_hx.max(), self.cell_hy.max()))

    @property
    def measure(self):
        return float(self.cell_measures.sum())

    @property
    def cell_edge_signs(self):
        """Orientation of each local edge: ``+1`` where the global normal points out."""
        return np.broadcast_to(_LOCAL_SIGNS, self.cell_edges.shape)

    @property
    def boundary_signs(self):
        """``+1`` where a boundary edge's global normal is the outward normal."""
        return np.where(self.edge_cells[self.boundary_edges, 1] < 0, 1.0, -1.0)

    @property
    def corner_edges(self):
        """``(n_cells, 4, 2)`` array of (vertical, horizontal) edge ids per corner."""
        slots = np.array(_CORNERS)
        return self.cell_edges[:, slots]

    @property
    def corner_points(self):
        """Corner coordinates, ``(n_cells, 4, 2)``, ordered BL, BR, TR, TL."""
        return self.vertices[self.cells]

    def cell_index(self, i, j):
        return j * self.shape[0] + i

    def check_same(self, other):
        if other is not self:
            raise ContractError("fields live on different meshes")


def build_structured_mesh(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Uniform ``nx x ny`` rectangle mesh of ``[x0, x1] x [y0, y1]``.

    Vertical edges are numbered first, row by row, then horizontal edges.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ContractError(f"cell counts must be >= 1, got {nx}x{ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ContractError(f"degenerate rectangle {domain}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny

    vx, vy = np.meshgrid(xs, ys)
    vertices = np.column_stack([vx.ravel(), vy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    cells = np.column_stack([vid(ii, jj), vid(ii + 1, jj), vid(ii + 1, jj + 1), vid(ii, jj + 1)])

    n_vert = (nx + 1) * ny

    def vedge(i, j):
        return j * (nx + 1) + i

    def hedge(i, j):
        return n_vert + j * nx + i

    cell_edges = np.column_stack([vedge(ii, jj), vedge(ii + 1, jj), hedge(ii, jj), hedge(ii, jj + 1)])

    ei, ej = np.meshgrid(np.arange(nx + 1), np.arange(ny))
    ei, ej = ei.ravel(), ej.ravel()
    v_edges = np.column_stack([vid(ei, ej), vid(ei, ej + 1)])
    v_cells = np.column_stack([
        np.where(ei > 0, ej * nx + ei - 1, -1),
        np.where(ei < nx, ej * nx + ei, -1),
    ])
    hi, hj = np.meshgrid(np.arange(nx), np.arange(ny + 1))
    hi, hj = hi.ravel(), hj.ravel()
    h_edges = np.column_stack([vid(hi, hj), vid(hi + 1, hj)])
    h_cells = np.column_stack([
        np.where(hj > 0, (hj - 1) * nx + hi, -1),
        np.where(hj < ny, hj * nx + hi, -1),
    ])

    edges = np.vstack([v_edges, h_edges])
    edge_cells = np.vstack([v_cells, h_cells])
    normals = np.vstack([np.tile([1.0, 0.0], (len(v_edges), 1)), np.tile([0.0, 1.0], (len(h_edges), 1))])
    lengths = np.concatenate([np.full(len(v_edges), hy), np.full(len(h_edges), hx)])
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])

    boundary = np.flatnonzero(np.any(edge_cells < 0, axis=1))
    tags = []
    for e in boundary:
        vertical = e < n_vert
        plus_missing = edge_cells[e, 1] < 0
        if vertical:
            tags.append("right" if plus_missing else "left")
        else:
            tags.append("top" if plus_missing else "bottom")

    nc = nx * ny
    centroids = vertices[cells].mean(axis=1)
    return Mesh(
        vertices=_frozen(vertices),
        cells=_frozen(cells, int),
        edges=_frozen(edges, int),
        edge_normals=_frozen(normals),
        edge_lengths=_frozen(lengths),
        edge_midpoints=_frozen(midpoints),
        edge_cells=_frozen(edge_cells, int),
        cell_edges=_frozen(cell_edges, int),
        cell_measures=_frozen(np.full(nc, hx * hy)),
        cell_centroids=_frozen(centroids),
        cell_hx=_frozen(np.full(nc, hx)),
        cell_hy=_frozen(np.full(nc, hy)),
        boundary_edges=_frozen(boundary, int),
        boundary_tags=tuple(tags),
        shape=(nx, ny),
        domain=(x0, x1, y0, y1),
    )


# -- fields ------------------------------------------------------------------


def _check_values(values, n, what):
    values = np.array(values, dtype=float)
    if values.ndim == 0:
        values = np.full(n, float(values))
    if values.shape != (n,):
        raise ContractError(f"{what} needs {n} values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ContractError(f"{what} values must be finite")
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One value per cell (pressure-squared, sources, coefficients, test functions)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.mesh.n_cells, "ScalarField"))

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_cells))

    def __add__(self, other):
        self.mesh.check_same(other.mesh)
        return ScalarField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        self.mesh.check_same(other.mesh)
        return ScalarField(self.mesh, self.values - other.values)

    def __mul__(self, a):
        return ScalarField(self.mesh, a * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FluxField:
    """One signed normal flux per edge, oriented along the edge's global normal."""

    mesh: Mesh
    edge_fluxes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "edge_fluxes", _check_values(self.edge_fluxes, self.mesh.n_edges, "FluxField"))

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_edges))

    def __add__(self, other):
        self.mesh.check_same(other.mesh)
        return FluxField(self.mesh, self.edge_fluxes + other.edge_fluxes)

    def __sub__(self, other):
        self.mesh.check_same(other.mesh)
        return FluxField(self.mesh, self.edge_fluxes - other.edge_fluxes)

    def __mul__(self, a):
        return FluxField(self.mesh, a * self.edge_fluxes)

    __rmul__ = __mul__

    def corner_vectors(self):
        return corner_vectors(self.mesh, self.edge_fluxes)

    def centroid_vectors(self):
        return centroid_vectors(self.mesh, self.edge_fluxes)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Dirichlet samples of ``S`` at the midpoints of ``mesh.boundary_edges``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_values(self.values, len(self.mesh.boundary_edges), "BoundaryData"))

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(len(mesh.boundary_edges)))

    @classmethod
    def from_function(cls, mesh, func):
        pts = mesh.edge_midpoints[mesh.boundary_edges]
        return cls(mesh, np.asarray(func(pts), dtype=float))

    @property
    def is_homogeneous(self):
        return bool(np.all(self.values == 0.0))


# -- reconstruction ----------------------------------------------------------


def corner_vectors(mesh: Mesh, fluxes) -> np.ndarray:
    """Flux vectors at the four corners of every cell, shape ``(n_cells, 4, 2)``."""
    fluxes = np.asarray(fluxes, dtype=float)
    ce = mesh.corner_edges
    ux = fluxes[ce[..., 0]] / mesh.cell_hy[:, None]
    uy = fluxes[ce[..., 1]] / mesh.cell_hx[:, None]
    return np.stack([ux, uy], axis=-1)


def centroid_vectors(mesh: Mesh, fluxes) -> np.ndarray:
    """RT0 vector at each cell centroid, shape ``(n_cells, 2)``."""
    fluxes = np.asarray(fluxes, dtype=float)
    ce = mesh.cell_edges
    ux = 0.5 * (fluxes[ce[:, LEFT]] + fluxes[ce[:, RIGHT]]) / mesh.cell_hy
    uy = 0.5 * (fluxes[ce[:, BOTTOM]] + fluxes[ce[:, TOP]]) / mesh.cell_hx
    return np.column_stack([ux, uy])


def flux_sums(mesh: Mesh, fluxes) -> np.ndarray:
    """Net outward flux of every cell."""
    fluxes = np.asarray(fluxes, dtype=float)
    return np.sum(fluxes[mesh.cell_edges] * _LOCAL_SIGNS, axis=1)


# -- operations --------------------------------------------------------------


def divergence(v: FluxField) -> ScalarField:
    mesh = v.mesh
    return ScalarField(mesh, flux_sums(mesh, v.edge_fluxes) / mesh.cell_measures)


def lp_norm(q: ScalarField, p: float) -> float:
    if p < 1:
        raise ContractError(f"exponent must be >= 1, got {p}")
    return float(np.sum(q.mesh.cell_measures * np.abs(q.values) ** p) ** (1.0 / p))


def flux_lp_norm(v: FluxField, p: float) -> float:
    """``(int |v|^p)^{1/p}`` with the corner rule."""
    if p < 1:
        raise ContractError(f"exponent must be >= 1, got {p}")
    mesh = v.mesh
    mag = np.linalg.norm(corner_vectors(mesh, v.edge_fluxes), axis=-1)
    w = 0.25 * mesh.cell_measures[:, None]
    return float(np.sum(w * mag ** p) ** (1.0 / p))


def ws_div_norm(v: FluxField, s: float) -> float:
    """``(int |v|^s + int |div v|^s)^{1/s}``; the vector part uses the corner rule."""
    if s < 1:
        raise ContractError(f"exponent must be >= 1, got {s}")
    mesh = v.mesh
    mag = np.linalg.norm(corner_vectors(mesh, v.edge_fluxes), axis=-1)
    vol = np.sum(0.25 * mesh.cell_measures[:, None] * mag ** s)
    div = flux_sums(mesh, v.edge_fluxes) / mesh.cell_measures
    return float((vol + np.sum(mesh.cell_measures * np.abs(div) ** s)) ** (1.0 / s))


def interpolate_flux(mesh: Mesh, func, n_gauss: int = 4) -> FluxField:
    """Edge fluxes ``int_e func . n`` by Gauss-Legendre quadrature along each edge.

    ``func`` maps an ``(N, 2)`` point array to an ``(N, 2)`` vector array.
    """
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = 0.5 * (a + b)[:, None, :] + 0.5 * (b - a)[:, None, :] * t[None, :, None]
    vals = np.asarray(func(pts.reshape(-1, 2)), dtype=float).reshape(mesh.n_edges, n_gauss, 2)
    normal = np.einsum("eqk,ek->eq", vals, mesh.edge_normals)
    return FluxField(mesh, 0.5 * mesh.edge_lengths * (normal @ w))


def cell_average(mesh: Mesh, func, n_gauss: int = 4) -> ScalarField:
    """Cell means of a scalar function by tensor Gauss-Legendre quadrature."""
    t, w = np.polynomial.legendre.leggauss(n_gauss)
    tx, ty = np.meshgrid(t, t)
    wq = np.outer(w, w).ravel() / 4.0
    c = mesh.cell_centroids
    px = c[:, 0, None] + 0.5 * mesh.cell_hx[:, None] * tx.ravel()[None, :]
    py = c[:, 1, None] + 0.5 * mesh.cell_hy[:, None] * ty.ravel()[None, :]
    pts = np.stack([px, py], axis=-1).reshape(-1, 2)
    vals = np.asarray(func(pts), dtype=float).reshape(mesh.n_cells, -1)
    return ScalarField(mesh, vals @ wq)
