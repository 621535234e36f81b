import dataclasses
import logging

import numpy as np
import scipy.linalg

import constants as const
from errors import NoConverge, NotPD

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class PrecisionEstimate:
    """
    Covariance selection result.

    Attributes
    ----------
    omega : np.ndarray
        Positive definite precision matrix, exactly zero where the precision mask is false.
    sigma : np.ndarray
        Its inverse, the covariance the sampler conditions on.
    kkt_residual : float
        Stationarity violation of the returned omega.
    iters : int
        Sweeps over the units.
    jitter : float
        Ridge added to the diagonal of S before solving (0 when none).
    """

    omega: np.ndarray
    sigma: np.ndarray
    kkt_residual: float
    iters: int
    jitter: float = 0.0


def kkt_residual(omega, s_hat, pattern):
    """
    Max mismatch between inv(omega) and S on allowed entries plus the largest
    forbidden entry of omega.
    """
    mask = np.asarray(pattern.omega_mask if hasattr(pattern, "omega_mask") else pattern, dtype=bool)
    implied = np.linalg.inv(omega)
    allowed = np.max(np.abs(implied - s_hat)[mask])
    forbidden = np.max(np.abs(omega)[~mask]) if (~mask).any() else 0.0
    return float(allowed + forbidden)


def selection_objective(omega, s_hat):
    """
    tr(omega S) - log det omega, +inf when omega is not positive definite.
    """
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return np.inf
    return float(np.sum(omega * s_hat) - logdet)


def _degenerate(s_hat):
    eigenvalues = np.linalg.eigvalsh(s_hat)
    return eigenvalues[0] <= const.PREC_EIG_FLOOR * max(eigenvalues[-1], 0.0)


def _regressions(w, s_hat, mask):
    """
    Per-unit regression coefficients of unit j on its allowed neighbours under w.
    Yields (j, others, beta) with beta over all other units, zero where forbidden.
    """
    n = w.shape[0]
    for j in range(n):
        others = np.delete(np.arange(n), j)
        free = others[mask[j, others]]
        beta = np.zeros(n - 1)
        if free.size:
            try:
                coef = scipy.linalg.solve(w[np.ix_(free, free)], s_hat[free, j], assume_a="pos")
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                raise NotPD(f"covariance block of unit {j}'s neighbours is singular") from None
            beta[mask[j, others]] = coef
        yield j, others, beta


def _precision_from(w, s_hat, mask):
    n = w.shape[0]
    omega = np.zeros((n, n))
    for j, others, beta in _regressions(w, s_hat, mask):
        w12 = w[np.ix_(others, others)] @ beta
        schur = s_hat[j, j] - w12 @ beta
        if not schur > 0:
            raise NotPD(f"no positive definite completion: conditional variance of unit {j} is {schur:.3g}")
        theta22 = 1.0 / schur
        omega[j, j] = theta22
        omega[others, j] = -beta * theta22
    omega = (omega + omega.T) / 2
    omega[~mask] = 0.0
    return omega


def covariance_select(s_hat, pattern, tol=const.PREC_TOL, max_sweeps=const.PREC_MAX_SWEEPS, allow_jitter=True):
    """
    Maximum likelihood precision matrix under a fixed zero pattern.

    Minimizes tr(omega S) - log det omega over positive definite omega with
    omega_ij = 0 wherever the precision mask is false. Each sweep regresses every unit on
    its allowed neighbours under the current covariance estimate W and writes the fitted
    cross-covariances back into W.

    Parameters
    ----------
    s_hat : ResidualCovariance or np.ndarray
        Residual covariance S.
    pattern : SparsityPattern
        Provides the precision mask.
    tol : float, optional
        Convergence tolerance, relative to the largest diagonal entry of S when that exceeds 1.
    max_sweeps : int, optional
        Sweeps before NoConverge is raised.
    allow_jitter : bool, optional
        Add a ridge of PREC_JITTER * trace(S) / n to a degenerate S before solving.

    Returns
    -------
    PrecisionEstimate
    """
    s = np.array(getattr(s_hat, "s_hat", s_hat), dtype=float)
    s = (s + s.T) / 2
    mask = np.asarray(pattern.omega_mask, dtype=bool)
    n = s.shape[0]

    jitter = 0.0
    if allow_jitter and _degenerate(s):
        jitter = const.PREC_JITTER * np.trace(s) / n
        s = s + jitter * np.eye(n)
        logger.warning("Residual covariance is degenerate; added jitter %.3g to its diagonal", jitter)
    if np.any(np.diag(s) <= 0):
        raise NotPD("residual covariance has a non-positive diagonal entry")

    scale = max(1.0, float(np.max(np.diag(s))))
    w = s.copy()
    for sweep in range(1, max_sweeps + 1):
        previous = w.copy()
        for j, others, beta in _regressions(w, s, mask):
            w12 = w[np.ix_(others, others)] @ beta
            w[others, j] = w12
            w[j, others] = w12

        if np.max(np.abs(w - previous)) < tol * scale:
            omega = _precision_from(w, s, mask)
            try:
                np.linalg.cholesky(omega)
            except np.linalg.LinAlgError:
                raise NotPD("selected precision matrix is not positive definite") from None
            residual = kkt_residual(omega, s, mask)
            if residual <= tol * scale:
                sigma = np.linalg.inv(omega)
                logger.info("Covariance selection converged in %d sweeps (KKT residual %.2e)", sweep, residual)
                return PrecisionEstimate(omega, (sigma + sigma.T) / 2, residual, sweep, jitter)
            logger.debug("Sweep %d: W settled but KKT residual %.2e above tolerance", sweep, residual)

    raise NoConverge(f"covariance selection did not converge in {max_sweeps} sweeps")
