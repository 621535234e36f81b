import dataclasses
import logging

import numpy as np
import scipy.linalg

import constants as const
from errors import InvalidConfig, SingularConditional, SingularSigma22
from Estimation import active_set, one_step_residuals, trend

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class PriorSpec:
    """Independent zero-mean normal priors on every beta_ik and every free A entry."""

    beta_variance: float = const.MC_BETA_VARIANCE
    a_variance: float = const.MC_A_VARIANCE

    def __post_init__(self):
        if not (self.beta_variance > 0 and self.a_variance > 0):
            raise InvalidConfig("prior variances must be > 0")


@dataclasses.dataclass
class ChainState:
    beta: np.ndarray
    a_matrix: np.ndarray


@dataclasses.dataclass(frozen=True)
class PosteriorDraws:
    """
    Stored Gibbs draws.

    Attributes
    ----------
    beta_draws : np.ndarray
        B x K x n trend coefficient draws.
    a_values : np.ndarray
        B x m draws of the m free A entries at (a_rows, a_cols).
    a_rows, a_cols : np.ndarray
        Support of the A mask in row-major order.
    n : int
        Number of units.
    seed, burnin, thin, iters : int
        Sampler settings that produced the draws.
    """

    beta_draws: np.ndarray
    a_values: np.ndarray
    a_rows: np.ndarray
    a_cols: np.ndarray
    n: int
    seed: int = const.MC_SEED
    burnin: int = const.MC_BURNIN
    thin: int = const.MC_THIN
    iters: int = const.MC_ITERS

    @property
    def n_draws(self):
        return self.beta_draws.shape[0]

    def a_matrix(self, b):
        a_matrix = np.zeros((self.n, self.n))
        a_matrix[self.a_rows, self.a_cols] = self.a_values[b]
        return a_matrix

    @property
    def a_draws(self):
        dense = np.zeros((self.n_draws, self.n, self.n))
        dense[:, self.a_rows, self.a_cols] = self.a_values
        return dense


@dataclasses.dataclass(frozen=True)
class CounterfactualDraws:
    """
    Posterior predictive draws of the untreated outcomes for t = t_min..T.

    ``y_tilde[b, i, t - t_min]`` equals the observed outcome whenever t < T_i0.
    """

    y_tilde: np.ndarray
    t_min: int


def _sigma_matrix(sigma):
    return np.asarray(getattr(sigma, "sigma", sigma), dtype=float)


def _embedded_inverse(sigma, observed):
    """
    Inverse of the covariance block of the observed units, embedded in an n x n zero matrix.
    """
    n = sigma.shape[0]
    embedded = np.zeros((n, n))
    idx = np.flatnonzero(observed)
    if idx.size:
        try:
            factor = scipy.linalg.cho_factor(sigma[np.ix_(idx, idx)], lower=True)
        except np.linalg.LinAlgError:
            raise SingularConditional("covariance block of the untreated units is not positive definite") from None
        block = scipy.linalg.cho_solve(factor, np.eye(idx.size))
        embedded[np.ix_(idx, idx)] = (block + block.T) / 2
    return embedded


def _draw_from_precision(precision, rhs, rng, block):
    """
    One draw from N(precision^-1 rhs, precision^-1).
    """
    try:
        chol = scipy.linalg.cholesky(precision, lower=True)
    except np.linalg.LinAlgError:
        raise SingularConditional(f"full conditional precision of {block} is not positive definite") from None
    mean = scipy.linalg.cho_solve((chol, True), rhs)
    z = rng.standard_normal(rhs.size)
    return mean + scipy.linalg.solve_triangular(chol.T, z, lower=False)


class Conditionals:
    """
    Full conditional distributions of the Gibbs sampler for one panel and covariance.

    Time points are grouped into segments that share the same set of untreated
    (active) units, and the embedded inverse covariance of each segment is computed once.

    Attributes
    ----------
    active : np.ndarray
        n x T active set (see Estimation.active_set).
    segment_of : np.ndarray
        Segment index of every time point.
    precisions : np.ndarray
        S x n x n embedded inverse covariance per segment.
    slots : list of tuple
        For slot s, the (rows, cols) of the s-th free A entry of every row that has one.

    Methods
    -------
    beta_conditional(state, k)
        Mean and precision of the full conditional of beta_k.
    a_conditional(state, slot)
        Rows, columns, mean and precision of the full conditional of an A slot.
    sample_beta(state, k, rng)
    sample_a(state, slot, rng)
    """

    def __init__(self, panel, basis, pattern, sigma, prior):
        self.panel = panel
        self.basis = basis
        self.pattern = pattern
        self.prior = prior
        self.outcomes = panel.filled_outcomes()

        self.active = active_set(panel, pattern)
        keys, inverse = np.unique(self.active.T, axis=0, return_inverse=True)
        self.segment_of = np.asarray(inverse).ravel()
        self.onehot = np.zeros((panel.T, keys.shape[0]))
        self.onehot[np.arange(panel.T), self.segment_of] = 1.0

        sigma = _sigma_matrix(sigma)
        self.precisions = np.stack([_embedded_inverse(sigma, key) for key in keys])

        self.slots = []
        supports = [np.flatnonzero(row) for row in pattern.a_mask]
        for slot in range(pattern.q_max):
            rows = np.array([i for i, cols in enumerate(supports) if cols.size > slot], dtype=int)
            cols = np.array([supports[i][slot] for i in rows], dtype=int)
            self.slots.append((rows, cols))

        logger.debug(
            "Gibbs conditionals: %d time segments, %d A slots", keys.shape[0], len(self.slots)
        )

    def _weighted(self, weights):
        return np.einsum("s,sij->ij", weights, self.precisions)

    def beta_conditional(self, state, k):
        phi = self.basis.eval_cache
        a_matrix = state.a_matrix

        beta_rest = state.beta.copy()
        beta_rest[k] = 0.0
        residuals = one_step_residuals(self.panel, self.basis, beta_rest, a_matrix)

        a = phi[:, k]
        b = np.concatenate(([0.0], phi[:-1, k]))
        p_aa = self._weighted(self.onehot.T @ (a * a))
        p_ab = self._weighted(self.onehot.T @ (a * b))
        p_bb = self._weighted(self.onehot.T @ (b * b))

        precision = p_aa - p_ab @ a_matrix - a_matrix.T @ p_ab + a_matrix.T @ p_bb @ a_matrix
        precision += np.eye(self.panel.n) / self.prior.beta_variance

        u = residuals @ (a[:, None] * self.onehot)
        v = residuals @ (b[:, None] * self.onehot)
        rhs = np.einsum("sij,js->i", self.precisions, u) - a_matrix.T @ np.einsum(
            "sij,js->i", self.precisions, v
        )
        return rhs, (precision + precision.T) / 2

    def a_conditional(self, state, slot):
        rows, cols = self.slots[slot]
        detrended = self.outcomes - trend(self.basis, state.beta)
        lagged = np.zeros_like(detrended)
        lagged[:, 1:] = detrended[:, :-1]

        fixed = state.a_matrix.copy()
        fixed[rows, cols] = 0.0
        target = detrended - fixed @ lagged
        target[:, 0] = 0.0

        weights = lagged[cols]  # m x T, zero at t = 1
        precision = np.eye(rows.size) / self.prior.a_variance
        rhs = np.zeros(rows.size)
        for s in range(self.precisions.shape[0]):
            times = np.flatnonzero(self.segment_of == s)
            w = weights[:, times]
            block = self.precisions[s][np.ix_(rows, rows)]
            precision += block * (w @ w.T)
            rhs += np.sum((self.precisions[s] @ target[:, times])[rows] * w, axis=1)
        return rows, cols, rhs, (precision + precision.T) / 2

    def sample_beta(self, state, k, rng):
        rhs, precision = self.beta_conditional(state, k)
        return _draw_from_precision(precision, rhs, rng, f"beta[{k}]")

    def sample_a(self, state, slot, rng):
        rows, cols, rhs, precision = self.a_conditional(state, slot)
        a_matrix = state.a_matrix.copy()
        a_matrix[rows, cols] = _draw_from_precision(precision, rhs, rng, f"A slot {slot + 1}")
        return a_matrix


def sample_beta_block(state, panel, basis, sigma, prior, k, rng, pattern):
    """
    Draw beta_k from its full conditional given the other trend blocks and A.
    """
    return Conditionals(panel, basis, pattern, sigma, prior).sample_beta(state, k, rng)


def sample_a_block(state, panel, basis, sigma, prior, slot, rng, pattern):
    """
    Jointly draw the slot-th free entry of every A row that has one (slot is 1-based).
    Rows with fewer free entries keep their values.
    """
    conditionals = Conditionals(panel, basis, pattern, sigma, prior)
    return conditionals.sample_a(state, slot - 1, rng)


def gibbs_run(
    panel,
    basis,
    pattern,
    sigma,
    prior,
    init,
    iters=const.MC_ITERS,
    burnin=const.MC_BURNIN,
    thin=const.MC_THIN,
    seed=const.MC_SEED,
    progress=None,
):
    """
    Gibbs sampler over the trend coefficients and A, conditioning on the selected covariance.

    Parameters
    ----------
    init : AlsEstimate
        Starting values.
    iters, burnin, thin : int
        Total sweeps, discarded sweeps and storage stride.
    seed : int
        Seed of the numpy Generator driving every draw.
    progress : callable, optional
        Called with (iteration, iters) after every sweep.

    Returns
    -------
    PosteriorDraws
    """
    if burnin < 0 or thin < 1:
        raise InvalidConfig(f"need burnin >= 0 and thin >= 1, got burnin={burnin}, thin={thin}")
    kept = range(burnin, iters, thin)
    if len(kept) < 1:
        raise InvalidConfig(f"iters={iters}, burnin={burnin}, thin={thin} store no draws")

    rng = np.random.default_rng(seed)
    conditionals = Conditionals(panel, basis, pattern, sigma, prior)
    state = ChainState(np.array(init.beta, dtype=float), np.array(init.a_matrix, dtype=float))
    a_rows, a_cols = pattern.a_rows, pattern.a_cols

    beta_draws = np.empty((len(kept), basis.df, panel.n))
    a_values = np.empty((len(kept), a_rows.size))
    stored = 0

    for iteration in range(iters):
        try:
            for k in range(basis.df):
                state.beta[k] = conditionals.sample_beta(state, k, rng)
            for slot in range(len(conditionals.slots)):
                state.a_matrix = conditionals.sample_a(state, slot, rng)
        except SingularConditional as err:
            raise SingularConditional(f"iteration {iteration}: {err}") from err

        if iteration >= burnin and (iteration - burnin) % thin == 0:
            beta_draws[stored] = state.beta
            a_values[stored] = state.a_matrix[a_rows, a_cols]
            stored += 1
        if progress is not None:
            progress(iteration + 1, iters)

    logger.info("Gibbs sampler stored %d draws (%d iterations, burnin %d, thin %d)", stored, iters, burnin, thin)
    return PosteriorDraws(
        beta_draws, a_values, a_rows, a_cols, panel.n, seed=seed, burnin=burnin, thin=thin, iters=iters
    )


def _conditional_factor(sigma, observed_idx):
    """
    Gain Sigma_12 Sigma_22^-1 and Cholesky factor of the Schur complement.
    """
    n = sigma.shape[0]
    observed = np.zeros(n, dtype=bool)
    observed[observed_idx] = True
    free = np.flatnonzero(~observed)
    obs = np.flatnonzero(observed)

    if obs.size == 0:
        gain = np.zeros((free.size, 0))
        schur = sigma
    else:
        try:
            factor = scipy.linalg.cho_factor(sigma[np.ix_(obs, obs)], lower=True)
        except np.linalg.LinAlgError:
            raise SingularSigma22("covariance of the conditioned coordinates is singular") from None
        gain = scipy.linalg.cho_solve(factor, sigma[np.ix_(obs, free)]).T
        schur = sigma[np.ix_(free, free)] - gain @ sigma[np.ix_(obs, free)]

    chol = np.zeros((free.size, free.size))
    if free.size:
        try:
            chol = np.linalg.cholesky((schur + schur.T) / 2)
        except np.linalg.LinAlgError:
            raise SingularSigma22("conditional covariance is not positive definite") from None
    return free, obs, gain, chol


def _conditional_draw(mean, observed_vals, factor, rng):
    free, obs, gain, chol = factor
    out = np.empty(mean.size)
    out[obs] = observed_vals
    if free.size:
        centre = mean[free]
        if obs.size:
            centre = centre + gain @ (observed_vals - mean[obs])
        out[free] = centre + chol @ rng.standard_normal(free.size)
    return out


def conditional_mvn(mean, sigma, observed_idx, observed_vals, rng):
    """
    Draw from N(mean, sigma) conditioned on the coordinates ``observed_idx`` taking
    ``observed_vals``. Conditioned coordinates are returned exactly as given.
    """
    mean = np.asarray(mean, dtype=float)
    observed_idx = np.asarray(observed_idx, dtype=int)
    factor = _conditional_factor(_sigma_matrix(sigma), observed_idx)
    # values are placed in the order of the sorted observed indices
    order = np.argsort(observed_idx)
    observed_vals = np.asarray(observed_vals, dtype=float)[order]
    return _conditional_draw(mean, observed_vals, factor, rng)


def forecast_counterfactual(draws, panel, basis, sigma, rng):
    """
    Posterior predictive forecast of the untreated trajectories from t_min to T.

    Each posterior draw gets its own child generator. Within a draw the forecast at t
    builds on that draw's forecast at t - 1, and units still untreated at t are
    conditioned on their observed outcome.
    """
    if draws.n_draws < 1:
        raise InvalidConfig("forecasting needs at least one posterior draw")

    sigma = _sigma_matrix(sigma)
    t_min = panel.t_min
    times = np.arange(t_min, panel.T + 1)
    y_tilde = np.empty((draws.n_draws, panel.n, times.size))
    factors = {}

    for m, child in enumerate(rng.spawn(draws.n_draws)):
        fitted = trend(basis, draws.beta_draws[m])
        a_matrix = draws.a_matrix(m)
        previous = panel.outcomes[:, t_min - 2]

        for h, t in enumerate(times):
            observed = panel.untreated(t)
            key = observed.tobytes()
            if key not in factors:
                factors[key] = _conditional_factor(sigma, np.flatnonzero(observed))
            mean = fitted[:, t - 1] + a_matrix @ (previous - fitted[:, t - 2])
            values = panel.outcomes[observed, t - 1]
            previous = _conditional_draw(mean, values, factors[key], child)
            y_tilde[m, :, h] = previous

    logger.info("Forecast %d counterfactual paths over t=%d..%d", draws.n_draws, t_min, panel.T)
    return CounterfactualDraws(y_tilde, t_min)
