import numpy as np

import designs.constants as dconst
from errors import InsufficientPreperiod, InvalidConfig
from Panel import CovariateMatrix, NeighborGraph, PanelData, SparsityPattern


def chain_graph(unit_ids):
    """
    Neighbour graph linking consecutive units.
    """
    return NeighborGraph(frozenset(zip(unit_ids[:-1], unit_ids[1:])))


def chain_covariance(n, scale, rho):
    distance = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return scale * rho**distance


def simulate_var(trend, a_matrix, sigma, rng, burn=dconst.SYN_BURN):
    """
    Draw Y with Y_t - f(t) = A (Y_{t-1} - f(t-1)) + e_t, e_t ~ N(0, sigma).

    The deviation process starts at zero ``burn`` steps before t = 1.
    """
    n, T = trend.shape
    chol = np.linalg.cholesky(sigma)
    deviation = np.zeros(n)
    outcomes = np.empty((n, T))
    for step in range(burn + T):
        deviation = a_matrix @ deviation + chol @ rng.standard_normal(n)
        if step >= burn:
            outcomes[:, step - burn] = trend[:, step - burn] + deviation
    return outcomes


def synthetic_panel(seed=dconst.SYN_SEED, n=dconst.SYN_UNITS, T=dconst.SYN_TIMES):
    """
    Panel generated once from the local-mean VAR(1) with linear trends, a chain neighbour
    graph, standard normal covariates and true adoption times uniform in
    SYN_ADOPT_LO..SYN_ADOPT_HI.

    Returns
    -------
    tuple
        (PanelData, CovariateMatrix, NeighborGraph)
    """
    rng = np.random.default_rng(seed)
    unit_ids = tuple(f"u{i + 1:02d}" for i in range(n))
    times = np.arange(1, T + 1)

    level = dconst.SYN_LEVEL + dconst.SYN_LEVEL_SD * rng.standard_normal(n)
    slope = dconst.SYN_SLOPE_SD * rng.standard_normal(n)
    trend = level[:, None] + slope[:, None] * (times[None, :] - 1) / (T - 1)

    a_matrix = dconst.SYN_A_DIAG * np.eye(n)
    for i in range(n - 1):
        a_matrix[i, i + 1] = a_matrix[i + 1, i] = dconst.SYN_A_NEIGHBOR
    sigma = chain_covariance(n, dconst.SYN_NOISE_SD**2, dconst.SYN_NOISE_RHO)

    outcomes = simulate_var(trend, a_matrix, sigma, rng)
    adopt_time = rng.integers(dconst.SYN_ADOPT_LO, dconst.SYN_ADOPT_HI + 1, size=n)
    covariates = rng.standard_normal((n, dconst.SYN_COVARIATES))

    panel = PanelData(unit_ids, outcomes, adopt_time)
    covs = CovariateMatrix(covariates, tuple(f"x{j + 1}" for j in range(dconst.SYN_COVARIATES)))
    return panel, covs, chain_graph(unit_ids)


def placebo_panel(panel, effects, rng, window_lo=dconst.PLACEBO_WINDOW_LO, window_hi=dconst.PLACEBO_WINDOW_HI):
    """
    Move every unit's adoption into its untreated past and inject a known effect.

    Each unit gets a fake adoption time uniform in [T_i0 - window_lo, T_i0 - window_hi],
    is truncated after T_i0 - 1, and has ``effects(lags)[i, q]`` added q periods after the
    fake adoption.

    Parameters
    ----------
    panel : PanelData
        Source panel; never-treated units count as adopting at T + 1.
    effects : callable
        Maps an array of lags to an n x len(lags) matrix of injected effects.
    rng : np.random.Generator

    Returns
    -------
    tuple
        (placebo PanelData, n x (L + 1) matrix of injected effects per lag)
    """
    if not window_lo > window_hi >= 1:
        raise InvalidConfig(f"placebo window needs window_lo > window_hi >= 1, got {window_lo}, {window_hi}")
    true_adopt = panel.adopt_time
    short = np.flatnonzero(true_adopt - window_lo < 2)
    if short.size:
        i = short[0]
        raise InsufficientPreperiod(
            f"unit {panel.unit_ids[i]} has {true_adopt[i] - 1} pre-treatment months, "
            f"placebo needs at least {window_lo + 1}"
        )

    fake = rng.integers(true_adopt - window_lo, true_adopt - window_hi + 1)
    last_time = np.minimum(true_adopt - 1, panel.last_time)
    T = int(last_time.max())
    lags = np.arange(int((last_time - fake).max()) + 1)
    injected = np.asarray(effects(lags), dtype=float)

    outcomes = np.array(panel.outcomes[:, :T], dtype=float)
    for i in range(panel.n):
        span = np.arange(last_time[i] - fake[i] + 1)
        outcomes[i, fake[i] - 1 + span] += injected[i, span]

    placebo = PanelData(panel.unit_ids, outcomes, fake, last_time)
    return placebo, injected


def misspec_var(n=dconst.MIS_UNITS):
    """
    A with a zero diagonal and A[i, i+1] = MIS_CROSS_LAG for every odd 1-based i.
    """
    a_matrix = np.zeros((n, n))
    rows = np.arange(0, n - 1, 2)
    a_matrix[rows, rows + 1] = dconst.MIS_CROSS_LAG
    return a_matrix


def misspec_panel(rng, n=dconst.MIS_UNITS, T=dconst.MIS_TIMES):
    """
    Fresh draw of the misspecification study's panel: common trend 400 - t/3, chain
    covariance 400 * 0.8^|i-j| and true adoption uniform in SYN_ADOPT_LO..SYN_ADOPT_HI.
    """
    times = np.arange(1, T + 1)
    trend = np.tile(dconst.MIS_LEVEL + dconst.MIS_SLOPE * times, (n, 1))
    sigma = chain_covariance(n, dconst.MIS_SIGMA_SCALE, dconst.MIS_SIGMA_RHO)
    outcomes = simulate_var(trend, misspec_var(n), sigma, rng)
    adopt_time = rng.integers(dconst.SYN_ADOPT_LO, dconst.SYN_ADOPT_HI + 1, size=n)
    return PanelData(tuple(f"m{i + 1:02d}" for i in range(n)), outcomes, adopt_time)


def misspec_patterns(n=dconst.MIS_UNITS):
    """
    The two A masks compared by the misspecification study, sharing the chain precision mask.
    """
    eye = np.eye(n, dtype=bool)
    chain = eye | np.eye(n, k=1, dtype=bool) | np.eye(n, k=-1, dtype=bool)
    return {
        "diagonal": SparsityPattern(eye, chain),
        "true": SparsityPattern(eye | (misspec_var(n) != 0), chain),
    }
