"""Field and report files: legacy VTK (ASCII) and versioned CSV.

All floats are written with 17 significant digits so that files are
bit-stable between runs and diffable.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh

SCHEMA = "nsf-report-1"
FLOAT = "%.17g"


def _fmt(x) -> str:
    return FLOAT % x


def write_fields(mesh: Mesh, path, point_fields: dict | None = None, cell_fields: dict | None = None,
                 title: str = "nsf fields") -> Path:
    """Legacy VTK unstructured grid with nodal and per-cell data.

    Nodal arrays of shape (N,) become SCALARS, (N, 2) become VECTORS (with
    a zero third component).  Cell arrays of shape (T,) are written as is,
    (T, k) arrays are split into ``name_0 .. name_{k-1}``.
    """
    point_fields = point_fields or {}
    cell_fields = cell_fields or {}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, t = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {t} {4 * t}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"CELL_TYPES {t}")
    lines += ["5"] * t

    def block(fields, count):
        out = []
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            if values.shape[0] != count:
                raise ValueError(f"field {name!r} has {values.shape[0]} entries, expected {count}")
            if values.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_fmt(v) for v in values]
            elif values.ndim == 2 and values.shape[1] == 2 and count == n:
                out.append(f"VECTORS {name} double")
                out += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in values]
            elif values.ndim == 2:
                for c in range(values.shape[1]):
                    out += [f"SCALARS {name}_{c} double 1", "LOOKUP_TABLE default"]
                    out += [_fmt(v) for v in values[:, c]]
            else:
                raise ValueError(f"field {name!r} has unsupported shape {values.shape}")
        return out

    if point_fields:
        lines.append(f"POINT_DATA {n}")
        lines += block(point_fields, n)
    if cell_fields:
        lines.append(f"CELL_DATA {t}")
        lines += block(cell_fields, t)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_points(path) -> np.ndarray:
    """Vertex coordinates from a file written by :func:`write_fields`."""
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                n = int(line.split()[1])
                pts = [next(fh).split()[:2] for _ in range(n)]
                return np.array(pts, dtype=float)
    raise ValueError(f"no POINTS section in {path}")


def vtk_field_names(path) -> list:
    names = []
    with open(path) as fh:
        for line in fh:
            if line.startswith(("SCALARS", "VECTORS")):
                names.append(line.split()[1])
    return names


def solution_fields(setup, state, derived) -> tuple:
    """Point and cell fields of a converged run."""
    from . import fem

    mesh, d = setup.mesh, setup.data
    dens = derived.density
    points = {
        "u": derived.u,
        "theta": derived.theta,
        "e": d.c_v * derived.theta,
        "p_M": fem.lumped_projection(mesh, derived.pressure_q),
        "psi": setup.potential().psi,
        "rho_nodal": dens.nodal,
    }
    cells = {
        "rho_mean": dens.rho.mean(axis=1),
        "case": dens.case.astype(float),
    }
    return points, cells


REPORT_COLUMNS = [
    "iteration", "update_m", "update_xi", "update_pi", "relative_m", "relative_xi", "relative_pi",
    "continuity_residual", "momentum_lhs", "momentum_rhs", "momentum_pass", "temperature_lhs",
    "momentum_rhs_pressure_bound", "temperature_rhs", "temperature_pass", "minmax_pass", "theta_min", "theta_max", "rho_min", "rho_max",
    "truncation_fraction", "corrected_fraction", "stagnation_fraction", "anomalies", "momentum_ratio",
    "theta_norm", "R2", "p_norm", "R3", "R4",
]


def report_rows(report) -> list:
    rows = []
    for r in report.rows:
        ma, ta, radii = r["momentum_audit"], r["temperature_audit"], r.get("radii", {})
        rows.append({
            "iteration": r["iteration"],
            "update_m": r["absolute_update"][0], "update_xi": r["absolute_update"][1],
            "update_pi": r["absolute_update"][2],
            "relative_m": r["relative_update"][0], "relative_xi": r["relative_update"][1],
            "relative_pi": r["relative_update"][2],
            "continuity_residual": r.get("continuity", {}).get("relative", float("nan")),
            "momentum_lhs": ma.lhs, "momentum_rhs": ma.rhs, "momentum_pass": int(ma.passed),
            "momentum_rhs_pressure_bound": radii["momentum_forms"]["pressure_bound"] if radii else float("nan"),
            "temperature_lhs": ta.lhs, "temperature_rhs": ta.rhs, "temperature_pass": int(ta.passed),
            "minmax_pass": int(r["minmax"]["passed"]), "theta_min": r["minmax"]["min"],
            "theta_max": r["minmax"]["max"], "rho_min": r["min_rho"], "rho_max": r["max_rho"],
            "truncation_fraction": r["truncation_fraction"], "corrected_fraction": r["corrected_fraction"],
            "stagnation_fraction": r["stagnation_fraction"], "anomalies": r["anomalies"],
            "momentum_ratio": radii["momentum"].details["ratio"] if radii else float("nan"),
            "theta_norm": radii["temperature"].lhs if radii else float("nan"),
            "R2": radii["temperature"].rhs if radii else float("nan"),
            "p_norm": radii["pressure"].lhs if radii else float("nan"),
            "R3": radii["pressure"].rhs if radii else float("nan"),
            "R4": radii.get("R4", float("nan")),
        })
    return rows


def write_table(path, columns: list, rows: list) -> Path:
    """CSV with a schema line followed by the header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return v


def write_report(report, path) -> Path:
    return write_table(path, REPORT_COLUMNS, report_rows(report))


def read_table(path) -> tuple:
    with open(path, newline="") as fh:
        schema = fh.readline().strip()
        if schema != f"# schema: {SCHEMA}":
            raise ValueError(f"unexpected schema line {schema!r}")
        reader = csv.DictReader(fh)
        return reader.fieldnames, list(reader)
