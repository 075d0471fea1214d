"""Legacy ASCII VTK export of quad grids with point and cell fields."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import GridSurface, quad_connectivity


def write_vtk(grid: GridSurface, path: str | Path, point_scalars: dict | None = None,
              point_vectors: dict | None = None, cell_scalars: dict | None = None,
              title: str = "grid surface") -> None:
    """Write the grid as an unstructured mesh of quads (VTK cell type 9)."""
    pts = grid.flat_points
    quads = quad_connectivity(grid.nu, grid.nv)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in pts.tolist()]
    lines.append(f"CELLS {len(quads)} {5 * len(quads)}")
    lines += ["4 " + " ".join(map(str, q)) for q in quads.tolist()]
    lines.append(f"CELL_TYPES {len(quads)}")
    lines += ["9"] * len(quads)

    def block(name, values, kind):
        if kind == "scalar":
            out = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(float(v)) for v in np.ravel(values)]
        else:
            out = [f"VECTORS {name} double"]
            out += [" ".join(repr(float(c)) for c in row) for row in np.asarray(values).reshape(-1, 3)]
        return out

    if point_scalars or point_vectors:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, vals in (point_scalars or {}).items():
            lines += block(name, vals, "scalar")
        for name, vals in (point_vectors or {}).items():
            lines += block(name, vals, "vector")
    if cell_scalars:
        lines.append(f"CELL_DATA {len(quads)}")
        for name, vals in cell_scalars.items():
            lines += block(name, vals, "scalar")
    Path(path).write_text("\n".join(lines) + "\n")
