"""Field serialization: JSON header + flat coefficient table.

A field is stored as two files sharing a base path:

* ``<base>.json`` -- grid metadata and the name/format of the data file,
* ``<base>.npy`` or ``<base>.csv`` -- a flat table with one row per
  coefficient and columns ``s_index, mode_k, component, re, im``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from cyllab.cylinder import Cylinder, SpectralField
from cyllab.errors import InvalidGridError

HEADER_VERSION = 1
COLUMNS = ["s_index", "mode_k", "component", "re", "im"]


def coefficient_table(field: SpectralField) -> np.ndarray:
    """Flatten the coefficients into the (S*T*n, 5) float64 column layout."""
    cyl = field.cylinder
    S, T, n = cyl.s_samples, cyl.t_modes, cyl.ambient_dim
    s_idx, k_idx, c_idx = np.meshgrid(
        np.arange(S), cyl.modes, np.arange(n), indexing="ij"
    )
    flat = field.coeffs.reshape(-1)
    return np.column_stack([
        s_idx.reshape(-1).astype(float),
        k_idx.reshape(-1).astype(float),
        c_idx.reshape(-1).astype(float),
        flat.real,
        flat.imag,
    ])


def save_field(field: SpectralField, base: str | Path, fmt: str = "npy") -> Path:
    """Write header + data, return the header path."""
    if fmt not in ("npy", "csv"):
        raise ValueError(f"unsupported field format {fmt!r}")
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    data_path = base.with_suffix("." + fmt)
    table = coefficient_table(field)
    if fmt == "npy":
        np.save(data_path, table)
    else:
        np.savetxt(data_path, table, delimiter=",", header=",".join(COLUMNS), comments="")
    cyl = field.cylinder
    header = {
        "kind": "spectral-field",
        "version": HEADER_VERSION,
        "half_length": cyl.half_length,
        "padding": cyl.padding,
        "s_samples": cyl.s_samples,
        "t_modes": cyl.t_modes,
        "ambient_dim": cyl.ambient_dim,
        "ball_constrained": bool(field.ball_constrained),
        "data_format": fmt,
        "data_file": data_path.name,
        "columns": COLUMNS,
    }
    header_path = base.with_suffix(".json")
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return header_path


def load_field(header_path: str | Path) -> SpectralField:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    if header.get("kind") != "spectral-field":
        raise InvalidGridError(f"{header_path} is not a field header")
    cyl = Cylinder(
        half_length=header["half_length"],
        s_samples=header["s_samples"],
        t_modes=header["t_modes"],
        ambient_dim=header["ambient_dim"],
        padding=header.get("padding", 1.0),
    )
    data_path = header_path.parent / header["data_file"]
    if header["data_format"] == "npy":
        table = np.load(data_path)
    else:
        table = np.loadtxt(data_path, delimiter=",", skiprows=1, ndmin=2)
    coeffs = np.zeros((cyl.s_samples, cyl.t_modes, cyl.ambient_dim), dtype=np.complex128)
    s_idx = table[:, 0].astype(int)
    k_col = table[:, 1].astype(int)
    c_idx = table[:, 2].astype(int)
    k_offset = -(cyl.t_modes // 2) + 1
    k_idx = k_col - k_offset
    if np.any((k_idx < 0) | (k_idx >= cyl.t_modes)):
        raise InvalidGridError("table contains modes outside the declared band")
    coeffs[s_idx, k_idx, c_idx] = table[:, 3] + 1j * table[:, 4]
    return SpectralField(cyl, coeffs, ball_constrained=header.get("ball_constrained", False))
