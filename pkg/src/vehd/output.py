"""Configuration files, diagnostics CSV and legacy VTK snapshots."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .conformation import nodal
from .driver import FIELDS, Params, StepDiagnostics
from .errors import ConfigurationError

# config key -> (Params attribute, converter)
CONFIG_KEYS = {
    "case": ("case", str),
    "n": ("n", int),
    "dt": ("dt", float),
    "T": ("T", float),
    "Re": ("Re", float),
    "Pe": ("Pe", float),
    "Co": ("Co", float),
    "lambda": ("lam", float),
    "Wi": ("Wi", float),
    "M": ("M", float),
    "kappa": ("kappa", float),
    "B": ("B", float),
    "zp": ("zp", int),
    "zn": ("zn", int),
    "snapshot_every": ("snapshot_every", int),
    "output_dir": ("output_dir", str),
    "solver_tol": ("solver_tol", float),
}
OPTIONAL_KEYS = {"B", "solver_tol"}


def parse_config(text):
    """Parse ``key = value`` lines into :class:`Params`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        attr, conv = CONFIG_KEYS[key]
        try:
            values[attr] = conv(value)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    for key, (attr, _) in CONFIG_KEYS.items():
        if key not in OPTIONAL_KEYS and attr not in values:
            raise ConfigurationError(f"missing required key {key!r}")
    return Params(**values)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.17g}"


def write_diagnostics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(StepDiagnostics.CSV_FIELDS)
        for row in rows:
            w.writerow([_fmt(getattr(row, f)) for f in StepDiagnostics.CSV_FIELDS])


def read_diagnostics_csv(path):
    with open(path, newline="") as fh:
        return [{k: (float(v) if v else float("nan")) for k, v in rec.items()}
                for rec in csv.DictReader(fh)]


def write_convergence_csv(path, result):
    header = ["dt"]
    for f in FIELDS:
        header += [f"e_{f}", f"order_{f}"]
    header.append("max_xi_dev")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, dt in enumerate(result.dts):
            row = [_fmt(dt)]
            for f in FIELDS:
                row += [_fmt(result.errors[f][k]), _fmt(result.orders[f][k])]
            row.append(_fmt(result.max_xi_dev[k]))
            w.writerow(row)


def write_vtk(path, disc, state):
    """Legacy ASCII VTK unstructured grid with vertex values of all fields."""
    mesh = disc.mesh
    nv = mesh.n_vertices
    psi = nodal(state.psi)[:nv]
    sigma = nodal(state.sigma)[:nv]
    scalars = {
        "c_p": state.species[0].c[:nv],
        "c_n": state.species[1].c[:nv],
        "V": state.V[:nv],
        "p": state.p[:nv],
        "psi_xx": psi[:, 0], "psi_xy": psi[:, 1], "psi_yy": psi[:, 2],
        "sigma_xx": sigma[:, 0], "sigma_xy": sigma[:, 1], "sigma_yy": sigma[:, 2],
    }
    ux, uy = state.u.component(0)[:nv], state.u.component(1)[:nv]
    lines = ["# vtk DataFile Version 3.0",
             f"step {state.step} time {state.t:.17g}",
             "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    for name, vals in scalars.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in vals]
    lines.append("VECTORS u double")
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in zip(ux, uy)]
    Path(path).write_text("\n".join(lines) + "\n")


def snapshot_writer(out_dir, every):
    out_dir = Path(out_dir)

    def write(sim, state):
        if state.step % every == 0 or state.step == sim.params.n_steps:
            write_vtk(out_dir / f"snapshot_{state.step:06d}.vtk", sim.disc, state)
    return write
