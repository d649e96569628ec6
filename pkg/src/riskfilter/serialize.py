"""JSON/CSV import and export, configuration loading and run manifests.

Floats are written with 17 significant digits so that files round-trip
bit-exactly.  Non-finite floats are stored as the strings ``"inf"``,
``"-inf"`` and ``"nan"`` in JSON.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .model import ConstantForcing, Ensemble, ParamTuple, Signal, TimeGrid
from .synth import GENERATOR, GroundTruth

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

FLOAT_FMT = "%.17g"


def _to_json(obj):
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_to_json(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _to_json(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(_to_json(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_text(path, text: str) -> str:
    """Write ``text`` and return its SHA-256."""
    data = text.encode("utf-8")
    Path(path).write_bytes(data)
    return sha256_bytes(data)


# --------------------------------------------------------------------------
# model objects


def grid_to_dict(grid: TimeGrid) -> dict:
    return {"t_end": grid.t_end, "num_intervals": grid.num_intervals}


def grid_from_dict(d) -> TimeGrid:
    return TimeGrid(float(d["t_end"]), int(d["num_intervals"]))


def signal_to_dict(s: Signal) -> dict:
    return {"grid": grid_to_dict(s.grid), "values": s.values}


def signal_from_dict(d) -> Signal:
    return Signal(grid_from_dict(d["grid"]), np.asarray(d["values"], dtype=float))


def ensemble_to_dict(ens: Ensemble) -> dict:
    forcing = ens.forcing
    if forcing is not None and not isinstance(forcing, ConstantForcing):
        raise TypeError("only constant forcing can be serialized")
    return {
        "members": [{"A": m.A, "Gamma": m.Gamma, "R": m.R, "Q": m.Q} for m in ens.members],
        "B": ens.B,
        "C": ens.C,
        "x0": ens.x0,
        "forcing": None if forcing is None else forcing.value,
    }


def ensemble_from_dict(d) -> Ensemble:
    members = tuple(ParamTuple(m["A"], m["Gamma"], m["R"], m["Q"]) for m in d["members"])
    forcing = d.get("forcing")
    return Ensemble(members, d["B"], d["C"], d["x0"], None if forcing is None else ConstantForcing(forcing))


def groundtruth_to_dict(g: GroundTruth) -> dict:
    return {
        "x_true": signal_to_dict(g.x_true),
        "y": signal_to_dict(g.y),
        "eta": g.eta,
        "v": signal_to_dict(g.v),
        "mu": signal_to_dict(g.mu),
        "generator": GENERATOR,
    }


def groundtruth_from_dict(d) -> GroundTruth:
    return GroundTruth(
        signal_from_dict(d["x_true"]),
        signal_from_dict(d["y"]),
        np.asarray(d["eta"], dtype=float),
        signal_from_dict(d["v"]),
        signal_from_dict(d["mu"]),
    )


def bank_to_dict(bank) -> dict:
    return {
        "ensemble": ensemble_to_dict(bank.ensemble),
        "grid": grid_to_dict(bank.grid),
        "y": signal_to_dict(bank.y),
        "xhat": bank.xhat,
        "Pi": bank.Pi,
        "P": bank.P,
        "r": bank.r,
        "residual": bank.residual,
        "max_asymmetry": bank.max_asymmetry,
    }


def bank_from_dict(d):
    from .kalman import FilterBank

    P = np.asarray(d["P"], dtype=float)
    eig = np.linalg.eigvalsh(P)
    return FilterBank(
        ensemble=ensemble_from_dict(d["ensemble"]),
        grid=grid_from_dict(d["grid"]),
        y=signal_from_dict(d["y"]),
        xhat=np.asarray(d["xhat"], dtype=float),
        Pi=np.asarray(d["Pi"], dtype=float),
        P=P,
        r=np.asarray(d["r"], dtype=float),
        residual=np.asarray(d["residual"], dtype=float),
        max_asymmetry=np.asarray(d["max_asymmetry"], dtype=float),
        lambda_min=float(eig.min()),
        lambda_max=float(eig.max()),
    )


def estimator_to_dict(traj) -> dict:
    d = {
        "label": traj.label,
        "x": traj.x,
        "iterations": traj.iterations,
        "grad_norm": traj.grad_norm,
        "converged": traj.converged,
        "weights": traj.weights,
        "residual": traj.residual,
    }
    if traj.certificates:
        d["certificates"] = [
            {"active_set": c.active_set, "support": c.support, "alpha": c.alpha[list(c.support)], "residual": c.residual}
            for c in traj.certificates
        ]
    return d


# --------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return FLOAT_FMT % v


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(x if isinstance(x, str) else _fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def report_csv(report) -> str:
    """Risk table: one row per evaluated level, one column per estimator."""
    header = ["level"] + report.label_names
    rows = [[name] + list(report.cells[i]) for i, name in enumerate(report.level_names)]
    return csv_text(header, rows)


def report_to_dict(report) -> dict:
    return {
        "levels": report.level_names,
        "labels": report.label_names,
        "cells": report.cells,
        "nonconverged": report.nonconverged,
    }


def trajectory_csv(traj, grid: TimeGrid) -> str:
    n = traj.x.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["grad_norm", "iterations", "converged"]
    rows = [
        [t, *traj.x[i], traj.grad_norm[i], str(int(traj.iterations[i])), str(int(bool(traj.converged[i])))]
        for i, t in enumerate(grid.points)
    ]
    return csv_text(header, rows)


def energies_csv(V, grid: TimeGrid) -> str:
    """Per-member energies along one estimator, one column per member."""
    header = ["t"] + [f"V{k + 1}" for k in range(V.shape[1])]
    return csv_text(header, [[t, *V[i]] for i, t in enumerate(grid.points)])


# --------------------------------------------------------------------------
# configuration and manifest


def load_config_file(path) -> dict:
    """Read a TOML (``.toml``) or JSON configuration into a mapping."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    return data


def config_hash(config_dict) -> str:
    return sha256_bytes(dumps(config_dict).encode("utf-8"))


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "riskfilter": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "generator": GENERATOR,
    }


def manifest(config_dict, seed, grid: TimeGrid, artifact_hashes) -> dict:
    return {
        "seed": int(seed),
        "grid": grid_to_dict(grid),
        "config_hash": config_hash(config_dict),
        "artifact_hashes": dict(sorted(artifact_hashes.items())),
        "versions": versions(),
    }
