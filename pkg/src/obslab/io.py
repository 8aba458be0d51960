"""Deterministic CSV/JSON writers and the run manifest.

All floats are rendered with repr-faithful %.17g so reruns with the same
config and seed are byte-identical; files are written atomically
(temporary file in the target directory, then rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, complex):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return f"{float(x):.17g}"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_trace_csv(path, trace) -> Path:
    """Columns: t, then one value column per observed boundary point."""
    t = trace.config.time.t
    header = ["t"] + [f"y_{b}" for b in trace.config.boundary]
    rows = ([ti] + [trace.values[j, i] for j in range(trace.values.shape[0])] for i, ti in enumerate(t))
    return write_csv(path, header, rows)


def write_basis_csv(path, basis_or_riesz) -> Path:
    """Columns: k, eigenvalue, and Re/Im of the perturbed frequency if any."""
    rows = list(basis_or_riesz.to_csv_rows())
    if len(rows[0]) == 2:
        header = ["k", "eigenvalue"]
    else:
        header = ["k", "eigenvalue", "re_mu", "im_mu"]
    return write_csv(path, header, rows)


def write_operator_csv(path, op) -> Path:
    """Operator matrix as CSV plus a JSON sidecar with probe/Gram metadata."""
    path = Path(path)
    header = [f"col_{j+1}" for j in range(op.matrix.shape[1])]
    write_csv(path, header, op.matrix)
    sidecar = {
        "kind": op.kind,
        "K": op.K,
        "probes": list(op.probes),
        "equation": op.config.equation,
        "boundary": list(op.config.boundary),
        "tau": op.config.time.tau,
        "n_steps": op.config.time.n_steps,
        "domain_gram_diag": [float(v) for v in np.diag(op.domain_gram)],
        "range_gram": "H1((0,tau), L2(Gamma)) trapezoid + squared derivative",
    }
    write_json(path.with_suffix(path.suffix + ".meta.json"), sidecar)
    return path


def write_field_csv(path, field) -> Path:
    rows = zip(field.grid.nodes, field.values)
    return write_csv(path, ["x", "value"], rows)


def write_stability_csv(path, table) -> Path:
    header = ["epsilon", "delta_lambda_norm", "error_l2", "error_rel", "bound_value", "fitted_p", "floored"]
    rows = (
        [r.epsilon, r.delta_lambda_norm, r.error_l2, r.error_rel, r.bound_value, table.fitted_p, r.floored]
        for r in table.rows
    )
    return write_csv(path, header, rows)
