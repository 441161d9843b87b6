"""Plain-text writers: legacy ASCII VTK for fields, versioned CSV for tables."""

import csv
from pathlib import Path

import numpy as np

from .grid import FluxField, Mesh, ScalarField, centroid_vectors

SCHEMA_VERSION = 1


def fmt(x):
    """Shortest round-trip decimal form, so repeated runs write identical bytes."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    """CSV whose first line is ``# schema = 1`` followed by a header row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema = {SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(header, rows)`` with float-convertible cells as floats."""
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("# schema"):
            raise ValueError(f"{path}: missing schema line")
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(parsed)
    return header, rows


def write_vtk(path, mesh: Mesh, S: ScalarField | None = None, m: FluxField | None = None,
              title="forchmix field", cell_scalars=None):
    """Legacy ASCII unstructured grid with quad cells.

    ``S`` and any ``cell_scalars`` go out as CELL_DATA scalars, ``m`` as the
    cell-centroid flux vector.
    """
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertices:
        lines.append(f"{fmt(x)} {fmt(y)} 0.0")
    nc = mesh.n_cells
    lines.append(f"CELLS {nc} {5 * nc}")
    for cell in mesh.cells:
        lines.append("4 " + " ".join(str(int(v)) for v in cell))
    lines.append(f"CELL_TYPES {nc}")
    lines.extend(["9"] * nc)
    scalars = {}
    if S is not None:
        mesh.check_same(S.mesh)
        scalars["S"] = S.values
    for name, values in (cell_scalars or {}).items():
        scalars[name] = np.asarray(values, dtype=float)
    if scalars or m is not None:
        lines.append(f"CELL_DATA {nc}")
    for name, values in scalars.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(fmt(v) for v in values)
    if m is not None:
        mesh.check_same(m.mesh)
        lines.append("VECTORS m double")
        for vx, vy in centroid_vectors(mesh, m.edge_fluxes):
            lines.append(f"{fmt(vx)} {fmt(vy)} 0.0")
    path.write_text("\n".join(lines) + "\n")
    return path
