"""Legacy ASCII VTK (UNSTRUCTURED_GRID of triangles) reader and writer."""

from __future__ import annotations

import os
from typing import Mapping, Optional

import numpy as np

from .mesh import SurfaceMesh

VTK_TRIANGLE = 5
FLOAT_FMT = "%.17g"


def _fmt(values) -> str:
    return " ".join(FLOAT_FMT % v for v in values)


def _write_arrays(fh, arrays: Mapping[str, np.ndarray], count: int, section: str) -> None:
    if not arrays:
        return
    fh.write(f"{section} {count}\n")
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        if " " in name:
            raise ValueError(f"VTK array names cannot contain spaces: {name!r}")
        if arr.shape == (count,):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in arr:
                fh.write(FLOAT_FMT % v + "\n")
        elif arr.shape == (count, 3):
            fh.write(f"VECTORS {name} double\n")
            for row in arr:
                fh.write(_fmt(row) + "\n")
        else:
            raise ValueError(f"{section} array {name!r} has shape {arr.shape}, expected ({count},) or ({count}, 3)")


def write_vtk(
    path: os.PathLike | str,
    mesh: SurfaceMesh,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "surfdmk output",
) -> None:
    """Write a triangle mesh with optional cell/point scalars and vectors."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for p in mesh.vertices:
            fh.write(_fmt(p) + "\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write(f"{VTK_TRIANGLE}\n" * nt)
        _write_arrays(fh, cell_data or {}, nt, "CELL_DATA")
        _write_arrays(fh, point_data or {}, nv, "POINT_DATA")


def read_vtk(path: os.PathLike | str) -> tuple[SurfaceMesh, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Read a file produced by :func:`write_vtk` (or any triangle-only legacy grid)."""
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    lines = iter(tokens[2:])  # header and title

    def words():
        for line in lines:
            yield from line.split()

    stream = words()
    nxt = lambda: next(stream)  # noqa: E731
    points = tris = None
    cell_data: dict[str, np.ndarray] = {}
    point_data: dict[str, np.ndarray] = {}
    target = None
    count = 0
    for word in stream:
        key = word.upper()
        if key in ("ASCII", "DATASET", "UNSTRUCTURED_GRID", "POLYDATA"):
            continue
        if key == "POINTS":
            n = int(nxt())
            nxt()
            points = np.array([float(nxt()) for _ in range(3 * n)]).reshape(n, 3)
        elif key in ("CELLS", "POLYGONS"):
            n = int(nxt())
            nxt()
            rows = []
            for _ in range(n):
                k = int(nxt())
                if k != 3:
                    raise ValueError("only triangle cells are supported")
                rows.append([int(nxt()) for _ in range(3)])
            tris = np.array(rows, dtype=np.int64)
        elif key == "CELL_TYPES":
            n = int(nxt())
            for _ in range(n):
                nxt()
        elif key in ("CELL_DATA", "POINT_DATA"):
            count = int(nxt())
            target = cell_data if key == "CELL_DATA" else point_data
        elif key == "SCALARS":
            name = nxt()
            nxt()
            ncomp = 1
            peek = nxt()
            if peek.upper() != "LOOKUP_TABLE":
                ncomp = int(peek)
                nxt()  # LOOKUP_TABLE
            nxt()  # table name
            vals = np.array([float(nxt()) for _ in range(count * ncomp)])
            target[name] = vals if ncomp == 1 else vals.reshape(count, ncomp)
        elif key == "VECTORS":
            name = nxt()
            nxt()
            target[name] = np.array([float(nxt()) for _ in range(3 * count)]).reshape(count, 3)
        else:
            raise ValueError(f"unexpected token {word!r} in {path}")
    if points is None or tris is None:
        raise ValueError(f"{path} lacks POINTS or CELLS")
    return SurfaceMesh(points, tris), cell_data, point_data
