import logging
import math

import arviz as az
import numpy as np

import constants as const
from Precision import kkt_residual
from DataLogging import a_mask_from, from_triplets

logger = logging.getLogger(__name__)


def chain_summary(samples):
    """
    Effective sample size and rank-normalized split R-hat of one parameter's stored draws.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 4 or np.ptp(samples) == 0:
        return {"ess": float(samples.size), "rhat": 1.0}
    chain = samples[None, :]
    return {
        "ess": float(az.ess(chain)),
        "rhat": float(az.rhat(chain)),
    }


def mcmc_summary(draws, unit_ids, fraction=const.DIAG_PARAM_FRACTION, seed=const.MC_SEED):
    """
    ESS and R-hat for a random subsample of the stored parameters.
    """
    B, K, n = draws.beta_draws.shape
    names = [f"beta[{k + 1}][{unit_ids[i]}]" for k in range(K) for i in range(n)]
    columns = [draws.beta_draws[:, k, i] for k in range(K) for i in range(n)]
    names += [f"A[{unit_ids[i]}][{unit_ids[j]}]" for i, j in zip(draws.a_rows, draws.a_cols)]
    columns += list(draws.a_values.T)

    rng = np.random.default_rng(seed)
    size = max(1, int(math.ceil(fraction * len(columns))))
    chosen = np.sort(rng.choice(len(columns), size=size, replace=False))

    parameters = {names[c]: chain_summary(columns[c]) for c in chosen}
    ess = [p["ess"] for p in parameters.values()]
    rhat = [p["rhat"] for p in parameters.values()]
    return {
        "draws": B,
        "subsample": len(chosen),
        "min_ess": float(np.min(ess)),
        "max_rhat": float(np.max(rhat)),
        "rhat_above_limit": [name for name, p in parameters.items() if p["rhat"] > const.DIAG_RHAT_LIMIT],
        "ess_below_limit": [name for name, p in parameters.items() if p["ess"] < const.DIAG_MIN_ESS],
        "parameters": parameters,
    }


def mask_audit(draws, a_mask, unit_ids):
    """
    Coordinates of stored A entries that lie outside the mask with a nonzero value.
    """
    violations = []
    for c, (i, j) in enumerate(zip(draws.a_rows, draws.a_cols)):
        if not a_mask[i, j] and np.any(draws.a_values[:, c] != 0):
            violations.append({"unit_i": unit_ids[i], "unit_j": unit_ids[j]})
    return violations


def run_checks(estimates, draws):
    """
    Audit a fit: ALS convergence, KKT residual of the precision, mask respect of every
    stored draw, plus MCMC trace summaries.

    Returns
    -------
    dict
        ``passed`` is False when any audit fails; the MCMC summary is informational.
    """
    unit_ids = estimates["unit_ids"]
    a_mask = a_mask_from(estimates)

    als = estimates["als"]
    als_audit = {
        "passed": bool(als["converged"]),
        "n_iters": als["n_iters"],
        "tol_achieved": als["tol_achieved"],
    }

    precision = estimates["precision"]
    s_hat = np.asarray(estimates["residual_covariance"]["s_hat"]) + precision["jitter"] * np.eye(len(unit_ids))
    omega = from_triplets(precision["omega"], unit_ids)
    omega_mask = np.zeros_like(a_mask)
    index = {u: i for i, u in enumerate(unit_ids)}
    for a, b in estimates["sparsity"]["omega_mask"]:
        omega_mask[index[a], index[b]] = True
    residual = kkt_residual(omega, s_hat, omega_mask)
    limit = precision["tol"] * max(1.0, float(np.max(np.diag(s_hat))))
    kkt_audit = {
        "passed": bool(residual <= limit),
        "kkt_residual": residual,
        "stored_kkt_residual": precision["kkt_residual"],
        "limit": limit,
        "iters": precision["iters"],
        "jitter": precision["jitter"],
    }

    violations = mask_audit(draws, a_mask, unit_ids)
    mask_report = {"passed": not violations, "violations": violations}

    report = {
        "als": als_audit,
        "kkt": kkt_audit,
        "mask": mask_report,
        "mcmc": mcmc_summary(draws, unit_ids),
    }
    report["passed"] = all(report[name]["passed"] for name in ("als", "kkt", "mask"))

    for name in ("als", "kkt", "mask"):
        if not report[name]["passed"]:
            logger.warning("Audit %s failed: %s", name, {k: v for k, v in report[name].items() if k != "passed"})
    return report
