import json
import logging
import math
import os
import platform
import sys
from importlib import metadata

import numpy as np
import pandas as pd

import constants as const
from errors import DataError, MissingArtifact
from Sampling import CounterfactualDraws, PosteriorDraws
from Utils import sha256_file

logger = logging.getLogger(__name__)

PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "patsy", "arviz")


def ensure_dir(path):
    if not os.path.exists(path):
        os.makedirs(path)
    return path


def artifact_path(directory, name, must_exist=False):
    path = os.path.join(directory, name)
    if must_exist and not os.path.isfile(path):
        raise MissingArtifact(f"{path} not found; run `fit` first")
    return path


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite(value):
    return value if math.isfinite(value) else str(value)


def write_json(path, document):
    with open(path, "w", encoding="utf-8") as file:
        json.dump(document, file, indent=2, default=_json_default)


def read_json(path):
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def triplets(matrix, mask, unit_ids):
    rows, cols = np.nonzero(mask)
    return [
        {"i": unit_ids[i], "j": unit_ids[j], "value": float(matrix[i, j])} for i, j in zip(rows, cols)
    ]


def from_triplets(entries, unit_ids):
    index = {u: i for i, u in enumerate(unit_ids)}
    matrix = np.zeros((len(unit_ids), len(unit_ids)))
    for entry in entries:
        matrix[index[entry["i"]], index[entry["j"]]] = entry["value"]
    return matrix


def estimates_document(fit):
    """
    JSON document of the point estimates, masks and solver diagnostics of a fit.
    """
    unit_ids = list(fit.panel.unit_ids)
    pattern = fit.pattern
    return {
        "unit_ids": unit_ids,
        "adopt_time": [int(a) if a <= fit.panel.T else const.NEVER_TOKEN for a in fit.panel.adopt_time],
        "T": fit.panel.T,
        "basis": fit.basis.describe(),
        "sparsity": {
            "adoption_gap": "inf" if math.isinf(pattern.adoption_gap) else pattern.adoption_gap,
            "a_mask": [[unit_ids[i], unit_ids[j]] for i, j in zip(*np.nonzero(pattern.a_mask))],
            "omega_mask": [[unit_ids[i], unit_ids[j]] for i, j in zip(*np.nonzero(pattern.omega_mask))],
        },
        "als": {
            "beta": fit.als.beta.tolist(),
            "a_matrix": triplets(fit.als.a_matrix, pattern.a_mask, unit_ids),
            "n_iters": fit.als.n_iters,
            "converged": bool(fit.als.converged),
            "tol": const.ALS_TOL,
            "tol_achieved": _finite(fit.als.tol_achieved),
            "objective_trace": list(fit.als.objective_trace),
        },
        "residual_covariance": {"s_hat": fit.residual.s_hat.tolist(), "dof": fit.residual.dof},
        "precision": {
            "omega": triplets(fit.precision.omega, pattern.omega_mask, unit_ids),
            "sigma": fit.precision.sigma.tolist(),
            "kkt_residual": fit.precision.kkt_residual,
            "tol": const.PREC_TOL,
            "iters": fit.precision.iters,
            "jitter": fit.precision.jitter,
        },
        "mcmc": {
            "iters": fit.draws.iters,
            "burnin": fit.draws.burnin,
            "thin": fit.draws.thin,
            "seed": fit.draws.seed,
            "draws": fit.draws.n_draws,
        },
    }


def a_mask_from(document):
    unit_ids = document["unit_ids"]
    index = {u: i for i, u in enumerate(unit_ids)}
    mask = np.zeros((len(unit_ids), len(unit_ids)), dtype=bool)
    for a, b in document["sparsity"]["a_mask"]:
        mask[index[a], index[b]] = True
    return mask


def draws_frame(draws, unit_ids):
    """
    Long table ``draw,param,unit_i,unit_j_or_k,value``; beta rows carry the 1-based basis
    index in unit_j_or_k.
    """
    B, K, n = draws.beta_draws.shape
    ids = np.asarray(unit_ids, dtype=object)
    beta = pd.DataFrame({
        "draw": np.repeat(np.arange(B), K * n),
        "param": "beta",
        "unit_i": np.tile(ids, B * K),
        "unit_j_or_k": np.tile(np.repeat(np.arange(1, K + 1), n), B).astype(str),
        "value": draws.beta_draws.reshape(-1),
    })
    m = draws.a_rows.size
    a = pd.DataFrame({
        "draw": np.repeat(np.arange(B), m),
        "param": "A",
        "unit_i": np.tile(ids[draws.a_rows], B),
        "unit_j_or_k": np.tile(ids[draws.a_cols], B),
        "value": draws.a_values.reshape(-1),
    })
    return pd.concat([beta, a], ignore_index=True)


def write_draws(path, draws, unit_ids):
    draws_frame(draws, unit_ids).to_csv(path, index=False)


def read_draws_frame(path):
    return pd.read_csv(
        path,
        dtype={"param": str, "unit_i": str, "unit_j_or_k": str},
        float_precision="round_trip",
    )


def read_draws(path, unit_ids, K, meta=None):
    """
    Rebuild PosteriorDraws from draws.csv. A entries are taken over the support found in
    the file, so an off-mask entry survives for the audit to report.
    """
    frame = read_draws_frame(path)
    index = {u: i for i, u in enumerate(unit_ids)}
    n = len(unit_ids)
    B = int(frame["draw"].max()) + 1 if len(frame) else 0

    beta = frame[frame["param"] == "beta"]
    beta_units = beta["unit_i"].map(index)
    if beta_units.isna().any():
        raise DataError(f"{path}: beta entry names an unknown unit")
    beta_draws = np.zeros((B, K, n))
    beta_draws[
        beta["draw"].to_numpy(),
        beta["unit_j_or_k"].astype(int).to_numpy() - 1,
        beta_units.astype(int).to_numpy(),
    ] = beta["value"].to_numpy()

    a = frame[frame["param"] == "A"]
    rows = a["unit_i"].map(index).to_numpy()
    cols = a["unit_j_or_k"].map(index).to_numpy()
    if np.any(pd.isna(rows)) or np.any(pd.isna(cols)):
        raise DataError(f"{path}: A entry names an unknown unit")
    flat = rows.astype(int) * n + cols.astype(int)
    support = np.unique(flat)
    a_values = np.zeros((B, support.size))
    a_values[a["draw"].to_numpy(), np.searchsorted(support, flat)] = a["value"].to_numpy()

    meta = meta or {}
    return PosteriorDraws(
        beta_draws,
        a_values,
        support // n,
        support % n,
        n,
        seed=meta.get("seed", const.MC_SEED),
        burnin=meta.get("burnin", const.MC_BURNIN),
        thin=meta.get("thin", const.MC_THIN),
        iters=meta.get("iters", const.MC_ITERS),
    )


def write_counterfactuals(path, cf, unit_ids):
    B, n, H = cf.y_tilde.shape
    frame = pd.DataFrame({
        "draw": np.repeat(np.arange(B), n * H),
        "unit_id": np.tile(np.repeat(np.asarray(unit_ids, dtype=object), H), B),
        "time": np.tile(np.arange(cf.t_min, cf.t_min + H), B * n),
        "value": cf.y_tilde.reshape(-1),
    })
    frame.to_csv(path, index=False)


def read_counterfactuals(path, unit_ids):
    frame = pd.read_csv(path, dtype={"unit_id": str}, float_precision="round_trip")
    index = {u: i for i, u in enumerate(unit_ids)}
    if frame.empty:
        raise DataError(f"{path} holds no counterfactual draws")
    t_min = int(frame["time"].min())
    B = int(frame["draw"].max()) + 1
    H = int(frame["time"].max()) - t_min + 1
    units = frame["unit_id"].map(index)
    if units.isna().any():
        unknown = frame.loc[units.isna(), "unit_id"].iloc[0]
        raise DataError(f"{path}: counterfactual draws name unknown unit {unknown}")
    y_tilde = np.full((B, len(unit_ids), H), np.nan)
    y_tilde[
        frame["draw"].to_numpy(),
        units.astype(int).to_numpy(),
        frame["time"].to_numpy() - t_min,
    ] = frame["value"].to_numpy()
    return CounterfactualDraws(y_tilde, t_min)


def write_table(path, frame):
    frame.to_csv(path, index=False, encoding="utf-8")


def package_versions():
    versions = {"python": platform.python_version()}
    for package in PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    return versions


def write_meta(directory, command, config, artifacts, timings=None, extra=None):
    """
    meta.json next to the artifacts: config echo, versions, seed, timings and hashes.
    """
    meta = {
        "command": command,
        "version": const.VERSION,
        "argv": sys.argv,
        "config": config.to_dict(),
        "seed": config.seed,
        "packages": package_versions(),
        "timings": timings or {},
        "artifacts": {
            name: sha256_file(os.path.join(directory, name)) for name in artifacts
        },
    }
    if extra:
        meta.update(extra)
    path = os.path.join(directory, const.P_META_FILE)
    write_json(path, meta)
    logger.info("Wrote %s", path)
    return meta
