import dataclasses
import logging
from typing import Tuple

import numpy as np

import constants as const
from errors import InsufficientPreperiod, InvalidConfig
from Utils import solve_gram

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class AlsEstimate:
    """
    Alternating least squares point estimate of the local-mean VAR(1).

    Attributes
    ----------
    beta : np.ndarray
        K x n trend coefficients; beta[k, i] multiplies phi_k for unit i.
    a_matrix : np.ndarray
        n x n lag coefficients, exactly zero off the A mask.
    n_iters : int
        Full cycles run.
    converged : bool
        Whether the last step was below tol.
    tol_achieved : float
        L2 norm of the last parameter step.
    objective_trace : tuple of float
        Least squares objective before the first cycle and after every cycle.
    """

    beta: np.ndarray
    a_matrix: np.ndarray
    n_iters: int = 0
    converged: bool = False
    tol_achieved: float = np.inf
    objective_trace: Tuple[float, ...] = ()


@dataclasses.dataclass(frozen=True)
class ResidualCovariance:
    s_hat: np.ndarray
    dof: int


def trend(basis, beta):
    """
    n x T matrix of fitted trends f_i(t) on the basis grid.
    """
    return (basis.eval_cache @ beta).T


def active_set(panel, pattern):
    """
    n x T boolean matrix of the (unit, time) pairs that carry a likelihood term.

    At t = 1 every unit contributes a trend-only term. At t >= 2 unit i contributes while
    it is untreated and every unit its equation lags on was still untreated at t - 1.
    """
    times = panel.times
    untreated = panel.adopt_time[:, None] > times[None, :]
    active = untreated.copy()
    # lagged predictors untreated at t-1
    lag_ok = panel.adopt_time[None, :, None] > (times[None, None, 1:] - 1)
    support = pattern.a_mask[:, :, None]
    active[:, 1:] &= np.all(~support | lag_ok, axis=1)
    active[:, 0] = True
    return active


def one_step_residuals(panel, basis, beta, a_matrix):
    """
    Residuals Y_t - f(t) - A (Y_{t-1} - f(t-1)); column 0 is Y_1 - f(1).

    Unobserved cells yield meaningless values and must be masked by the caller.
    """
    detrended = panel.filled_outcomes() - trend(basis, beta)
    residuals = detrended.copy()
    residuals[:, 1:] -= a_matrix @ detrended[:, :-1]
    return residuals


def als_objective(panel, basis, est, pattern):
    """
    Sum of squared one-step residuals over the active set.
    """
    active = active_set(panel, pattern)
    residuals = one_step_residuals(panel, basis, est.beta, est.a_matrix)
    return float(np.sum(np.where(active, residuals, 0.0) ** 2))


def update_beta_k(panel, basis, current, k, pattern):
    """
    Exact least squares update of the k-th trend coefficient vector.

    With X_k(t) = phi_k(t) I - phi_k(t-1) A the residual at t is R_t - X_k(t) beta_k, where
    R_t collects everything that does not involve beta_k. Only active pairs enter.

    Returns
    -------
    np.ndarray
        The n-vector minimizing the objective over beta_k.
    """
    active = active_set(panel, pattern).astype(float)
    a_matrix = current.a_matrix
    phi = basis.eval_cache

    beta_rest = current.beta.copy()
    beta_rest[k] = 0.0
    residuals = one_step_residuals(panel, basis, beta_rest, a_matrix)

    a = phi[:, k]
    b = np.concatenate(([0.0], phi[:-1, k]))

    aa = active @ (a * a)
    ab = active @ (a * b)
    bb = active @ (b * b)
    gram = (
        np.diag(aa)
        - np.diag(ab) @ a_matrix
        - a_matrix.T @ np.diag(ab)
        + a_matrix.T @ np.diag(bb) @ a_matrix
    )

    masked = active * residuals
    rhs = masked @ a - a_matrix.T @ (masked @ b)
    return solve_gram(gram, rhs, block=f"beta[{k}]")


def update_a_rows(panel, basis, current, pattern):
    """
    Row-wise least squares update of A over each row's allowed support.

    Row i regresses its detrended outcome at the active times t >= 2 on the detrended
    lagged outcomes of its allowed predictors. Rows with an empty support stay zero.
    """
    active = active_set(panel, pattern)
    detrended = panel.filled_outcomes() - trend(basis, current.beta)
    lagged = detrended[:, :-1]
    a_matrix = np.zeros((panel.n, panel.n))

    for i in range(panel.n):
        support = np.flatnonzero(pattern.a_mask[i])
        if support.size == 0:
            continue
        times = np.flatnonzero(active[i, 1:])
        design = lagged[np.ix_(support, times)].T
        response = detrended[i, 1:][times]
        a_matrix[i, support] = solve_gram(design.T @ design, design.T @ response, block=f"A row {i}")

    return a_matrix


def check_estimable(panel, basis):
    """
    Every unit needs at least K + 1 pre-treatment observations.
    """
    pre = panel.adopt_time - 1
    short = np.flatnonzero(pre < basis.df + 1)
    if short.size:
        i = short[0]
        raise InsufficientPreperiod(
            f"unit {panel.unit_ids[i]} has {pre[i]} pre-treatment observations, "
            f"needs at least {basis.df + 1} for df={basis.df}"
        )


def _initial_beta(panel, basis):
    beta = np.zeros((basis.df, panel.n))
    for i in range(panel.n):
        pre = slice(0, panel.adopt_time[i] - 1)
        beta[:, i] = np.linalg.lstsq(basis.eval_cache[pre], panel.outcomes[i, pre], rcond=None)[0]
    return beta


def als_fit(panel, basis, pattern, tol=const.ALS_TOL, max_iters=const.ALS_MAX_ITERS):
    """
    Block coordinate descent over (beta_1, ..., beta_K, A).

    Starts from per-unit trend-only least squares and A = 0, then cycles the beta blocks
    and the A rows until the concatenated parameter vector moves less than ``tol`` in L2.

    Returns
    -------
    AlsEstimate
        ``converged`` is False when ``max_iters`` cycles were used up.
    """
    if not tol > 0:
        raise InvalidConfig(f"ALS tol must be > 0, got {tol}")
    if max_iters < 1:
        raise InvalidConfig(f"ALS max_iters must be >= 1, got {max_iters}")
    check_estimable(panel, basis)

    mask = pattern.a_mask
    est = AlsEstimate(_initial_beta(panel, basis), np.zeros((panel.n, panel.n)))
    trace = [als_objective(panel, basis, est, pattern)]
    step = np.inf
    converged = False

    for iteration in range(1, max_iters + 1):
        previous = np.concatenate((est.beta.ravel(), est.a_matrix[mask]))

        for k in range(basis.df):
            beta = est.beta.copy()
            beta[k] = update_beta_k(panel, basis, est, k, pattern)
            est = dataclasses.replace(est, beta=beta)
        est = dataclasses.replace(est, a_matrix=update_a_rows(panel, basis, est, pattern))

        current = np.concatenate((est.beta.ravel(), est.a_matrix[mask]))
        step = float(np.linalg.norm(current - previous))
        objective = als_objective(panel, basis, est, pattern)
        if objective > trace[-1] * (1 + const.ALS_MONOTONE_SLACK) + const.ALS_MONOTONE_SLACK:
            logger.warning("ALS objective increased at cycle %d: %.6g -> %.6g", iteration, trace[-1], objective)
        trace.append(objective)
        logger.debug("ALS cycle %d: step %.3e, objective %.6g", iteration, step, objective)

        if step < tol:
            converged = True
            break

    if converged:
        logger.info("ALS converged after %d cycles (step %.2e)", iteration, step)
    else:
        logger.warning("ALS stopped after %d cycles without converging (step %.2e)", max_iters, step)

    return dataclasses.replace(
        est,
        n_iters=iteration,
        converged=converged,
        tol_achieved=step,
        objective_trace=tuple(trace),
    )


def residual_covariance(panel, basis, est):
    """
    Residual covariance over the untreated prefix t = 1..t_min - 1.

    The divisor is t_min - K - 1; t = 1 contributes its trend-only residual.
    """
    t_min = panel.t_min
    dof = t_min - basis.df - 1
    if dof < 1:
        raise InsufficientPreperiod(
            f"first adoption at t={t_min} leaves no degrees of freedom for df={basis.df}"
        )
    residuals = one_step_residuals(panel, basis, est.beta, est.a_matrix)[:, : t_min - 1]
    s_hat = residuals @ residuals.T / dof
    return ResidualCovariance((s_hat + s_hat.T) / 2, dof)
