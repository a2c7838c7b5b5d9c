"""On-disk formats.

field-json: one JSON object with keys nx, ny, hx, hy, origin (2-array) and
values (flat array of nx*ny numbers, row-major y-outer).  Readers rebuild
the space with trapezoid weights and reject mismatched lengths.

asm-json: estimate header (same grid keys under "space"), the full
descending eigenvalue list, the retained eigenfunctions as flat value
arrays, and the provenance fields B, seed, rank_tol.  Heavy per-sample
arrays (inputs, gradients, values) go to .npy sidecars instead.

All writers are byte-deterministic: sorted JSON keys, repr-based float
formatting, no timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .hilbert import Field, FunctionSpace, Subspace, grid_space


def _format_float(x):
    return repr(float(x))


def _json_dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def write_field_json(field, path):
    space = field.space
    _json_dump(
        {
            "nx": space.nx,
            "ny": space.ny,
            "hx": space.hx,
            "hy": space.hy,
            "origin": list(space.origin),
            "values": field.values.tolist(),
        },
        path,
    )


def read_field_json(path, space=None):
    """Load a field; with `space` given, the stored grid must match it."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        nx, ny = int(data["nx"]), int(data["ny"])
        hx, hy = float(data["hx"]), float(data["hy"])
        origin = tuple(float(v) for v in data["origin"])
        values = np.asarray(data["values"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed field-json file {path}: {exc}") from exc
    if values.shape != (nx * ny,):
        raise ConfigError(
            f"{path}: expected {nx * ny} values for a {nx}x{ny} grid, "
            f"got {values.size}"
        )
    file_space = grid_space(nx, ny, hx, hy, origin)
    if space is not None:
        if space != file_space:
            raise ConfigError(f"{path}: grid does not match the configured space")
        file_space = space
    return Field(file_space, values)


@dataclass
class EstimateFile:
    """Estimate as loaded from asm-json (no gradient samples attached)."""

    space: FunctionSpace
    eigenvalues: np.ndarray
    eigenfunctions: Subspace
    B: int
    seed: int
    rank_tol: float

    @property
    def rank(self):
        return self.eigenfunctions.dim


def write_estimate_json(estimate, path):
    space = estimate.space
    _json_dump(
        {
            "space": {
                "nx": space.nx,
                "ny": space.ny,
                "hx": space.hx,
                "hy": space.hy,
                "origin": list(space.origin),
            },
            "eigenvalues": estimate.eigenvalues.tolist(),
            "eigenfunctions": [v.tolist() for v in estimate.eigenfunctions.vectors],
            "B": int(estimate.samples.B),
            "seed": int(estimate.samples.seed),
            "rank_tol": float(estimate.rank_tol),
        },
        path,
    )


def read_estimate_json(path):
    with open(path) as fh:
        data = json.load(fh)
    try:
        sp = data["space"]
        space = grid_space(
            int(sp["nx"]),
            int(sp["ny"]),
            float(sp["hx"]),
            float(sp["hy"]),
            tuple(float(v) for v in sp["origin"]),
        )
        eigenvalues = np.asarray(data["eigenvalues"], dtype=np.float64)
        vectors = np.asarray(data["eigenfunctions"], dtype=np.float64)
        B = int(data["B"])
        seed = int(data["seed"])
        rank_tol = float(data["rank_tol"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed asm-json file {path}: {exc}") from exc
    if vectors.size and vectors.shape[1] != space.n_nodes:
        raise ConfigError(
            f"{path}: eigenfunction length {vectors.shape[1]} does not match "
            f"the {space.nx}x{space.ny} grid"
        )
    if vectors.size == 0:
        vectors = vectors.reshape(0, space.n_nodes)
    functions = Subspace(space, vectors, orthonormal=True, tol=1e-8)
    return EstimateFile(space, eigenvalues, functions, B, seed, rank_tol)


def write_samples_sidecar(samples, prefix):
    """Store inputs/gradients/values as three .npy files next to the
    estimate; returns the written paths."""
    paths = []
    for name, arr in (
        ("inputs", samples.inputs),
        ("gradients", samples.gradients),
        ("values", samples.values),
    ):
        path = f"{prefix}_{name}.npy"
        np.save(path, arr)
        paths.append(path)
    return paths


def read_samples_sidecar(prefix):
    """Load the three sidecar arrays written by write_samples_sidecar."""
    out = []
    for name in ("inputs", "gradients", "values"):
        path = f"{prefix}_{name}.npy"
        try:
            out.append(np.load(path))
        except OSError as exc:
            raise ConfigError(f"missing sample sidecar {path}") from exc
    return tuple(out)


def write_csv(path, header, rows):
    """Plain CSV with repr-formatted floats (byte-deterministic)."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    str(c) if isinstance(c, (str, int, np.integer)) else _format_float(c)
                    for c in row
                )
                + "\n"
            )
