import dataclasses
import logging
from typing import Tuple

import numpy as np

import constants as const
from Basis import evaluate_basis, lag_basis
from errors import InvalidConfig, NoUnitsAtLag, RankDeficientDesign
from Utils import cluster_units_kmeans

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class EffectDraws:
    """
    Per-draw individual treatment effects.

    Attributes
    ----------
    delta : np.ndarray
        B x n x (L + 1) array; delta[b, i, q] is the effect on unit i q periods after its
        adoption in draw b, NaN where the lag is not observed.
    max_lag : np.ndarray
        Largest available lag per unit, -1 for never-treated units.
    """

    delta: np.ndarray
    max_lag: np.ndarray

    @property
    def n_draws(self):
        return self.delta.shape[0]

    @property
    def lags(self):
        return self.delta.shape[2]

    def available(self, q):
        """
        Units with an observed effect at lag q.
        """
        if q < 0 or q >= self.lags:
            return np.zeros(self.delta.shape[1], dtype=bool)
        return self.max_lag >= q


@dataclasses.dataclass(frozen=True)
class EstimandSummary:
    point: float
    lower: float
    upper: float
    n_units: int


@dataclasses.dataclass(frozen=True)
class HeteroModel:
    """
    Per-draw fit of the working model f(X, q) = b0 + g(q) + sum_j b_j X_j.

    Attributes
    ----------
    coef : np.ndarray
        B x (1 + spline_df + p) coefficients: intercept, lag spline, covariates.
    spline_df : int
        Columns of the lag term g.
    lag_window : int
        Largest lag used for fitting.
    basis : BasisSet
        Lag basis of g (its intercept column is not used).
    """

    coef: np.ndarray
    spline_df: int
    lag_window: int
    basis: object = dataclasses.field(repr=False)

    @property
    def intercept(self):
        return self.coef[:, 0]

    @property
    def lag_coef(self):
        return self.coef[:, 1 : 1 + self.spline_df]

    @property
    def covariate_coef(self):
        return self.coef[:, 1 + self.spline_df :]

    def predict(self, X, lags):
        """
        Per-draw effect surface, B x len(X) x len(lags).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lags = np.atleast_1d(np.asarray(lags, dtype=float))
        g = evaluate_basis(self.basis, lags)[:, 1 : 1 + self.spline_df]
        lag_part = self.lag_coef @ g.T  # B x lags
        unit_part = self.intercept[:, None] + self.covariate_coef @ X.T  # B x units
        return unit_part[:, :, None] + lag_part[:, None, :]


@dataclasses.dataclass(frozen=True)
class ClusterEffect:
    label: int
    profile: Tuple[float, ...]
    summary: EstimandSummary


def individual_effects(cf, panel, max_lag=None):
    """
    Observed minus counterfactual outcome for every treated unit and available lag.

    Parameters
    ----------
    cf : CounterfactualDraws
        Forecast draws covering t_min..T.
    panel : PanelData
        The panel the forecasts were made for.
    max_lag : int, optional
        Largest lag to keep; defaults to the longest available.

    Returns
    -------
    EffectDraws
    """
    unit_max = np.where(panel.treated, panel.last_time - panel.adopt_time, -1)
    if max_lag is not None:
        unit_max = np.minimum(unit_max, max_lag)
    lags = int(max(unit_max.max(), -1)) + 1
    delta = np.full((cf.y_tilde.shape[0], panel.n, lags), np.nan)

    for i in np.flatnonzero(unit_max >= 0):
        times = panel.adopt_time[i] + np.arange(unit_max[i] + 1)
        observed = panel.outcomes[i, times - 1]
        delta[:, i, : unit_max[i] + 1] = observed[None, :] - cf.y_tilde[:, i, times - cf.t_min]

    return EffectDraws(delta, unit_max)


def summarize(draws, level=const.EST_LEVEL, n_units=0):
    """
    Posterior mean with the equal-tailed credible interval at ``level``.
    """
    if not 0 < level < 1:
        raise InvalidConfig(f"interval level must lie in (0, 1), got {level}")
    draws = np.asarray(draws, dtype=float)
    alpha = (1 - level) / 2
    lower, upper = np.quantile(draws, [alpha, 1 - alpha])
    point = float(draws.mean())
    return EstimandSummary(point, float(lower), float(upper), int(n_units))


def att_draws(effects, q):
    """
    Per-draw average effect at lag q over the units that reach it.
    """
    units = effects.available(q)
    if not units.any():
        raise NoUnitsAtLag(f"no unit has an observed effect at lag {q}")
    return effects.delta[:, units, q].mean(axis=1)


def cumulative_att_draws(effects, q):
    """
    Per-draw sum of the lag averages for lags 0..q.
    """
    total = np.zeros(effects.n_draws)
    for lag in range(q + 1):
        total = total + att_draws(effects, lag)
    return total


def att_by_lag(effects, q, level=const.EST_LEVEL):
    return summarize(att_draws(effects, q), level, int(effects.available(q).sum()))


def cumulative_att(effects, q, level=const.EST_LEVEL):
    return summarize(cumulative_att_draws(effects, q), level, int(effects.available(q).sum()))


def _effect_rows(effects, last_lag):
    """
    Stack the (unit, lag) pairs with lag <= last_lag into rows, B x rows plus their indices.
    """
    units, lags = [], []
    for q in range(min(last_lag, effects.lags - 1) + 1):
        available = np.flatnonzero(effects.available(q))
        units.extend(available)
        lags.extend([q] * available.size)
    units, lags = np.array(units, dtype=int), np.array(lags, dtype=int)
    return effects.delta[:, units, lags], units, lags


def _per_draw_ols(design, response, what):
    """
    Least squares of every draw's response (B x rows) on a shared design.
    """
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientDesign(
            f"{what} design with {design.shape[0]} rows and {design.shape[1]} columns is rank deficient"
        )
    coef, *_ = np.linalg.lstsq(design, response.T, rcond=None)
    return coef.T


def fit_hetero(effects, covs, spline_df=const.EST_HETERO_SPLINE_DF, lag_window=const.EST_HETERO_WINDOW):
    """
    Regress every draw's individual effects on [1, g(lag), X] over lags 0..lag_window.

    g is a natural spline in the lag with ``spline_df`` columns (1 means linear).
    """
    if spline_df < 0 or spline_df > lag_window:
        raise InvalidConfig(f"lag spline df must lie in 0..{lag_window}, got {spline_df}")
    basis = lag_basis(lag_window, spline_df + 1)

    response, units, lags = _effect_rows(effects, lag_window)
    if units.size < covs.p + spline_df + 2:
        raise RankDeficientDesign(
            f"{units.size} unit-lag rows cannot identify {covs.p + spline_df + 1} coefficients"
        )
    design = np.column_stack(
        (np.ones(units.size), basis.eval_cache[lags, 1:], covs.values[units])
    )
    coef = _per_draw_ols(design, response, "heterogeneity")
    logger.debug("Heterogeneity model fitted on %d unit-lag rows", units.size)
    return HeteroModel(coef, spline_df, lag_window, basis)


def psi_contrast(
    model, covs, j, q, lo_q=const.EST_PSI_LO, hi_q=const.EST_PSI_HI, level=const.EST_LEVEL
):
    """
    Cumulative effect contrast between the hi and lo quantiles of covariate j.

    Per draw, the predicted effect with x_j set to its hi quantile minus the prediction at
    its lo quantile, summed over lags 0..q and averaged over units.
    """
    if q > model.lag_window:
        raise InvalidConfig(f"contrast lag {q} exceeds the fitted window {model.lag_window}")
    x_lo, x_hi = np.quantile(covs.values[:, j], [lo_q, hi_q])
    high, low = covs.values.copy(), covs.values.copy()
    high[:, j], low[:, j] = x_hi, x_lo
    lags = np.arange(q + 1)
    difference = model.predict(high, lags) - model.predict(low, lags)
    return summarize(difference.sum(axis=2).mean(axis=1), level, covs.values.shape[0])


def smooth_att_draws(effects, spline_df=const.EST_SMOOTH_DF, q_max=const.EST_MAX_LAG):
    """
    Per-draw smoothed effect curve, B x (q_max + 1).
    """
    for q in range(q_max + 1):
        if not effects.available(q).any():
            raise NoUnitsAtLag(f"no unit has an observed effect at lag {q}")
    basis = lag_basis(q_max, spline_df)
    response, _, lags = _effect_rows(effects, q_max)
    coef = _per_draw_ols(basis.eval_cache[lags], response, "smoothed effect")
    return coef @ basis.eval_cache.T


def smooth_att(effects, spline_df=const.EST_SMOOTH_DF, q_max=const.EST_MAX_LAG, level=const.EST_LEVEL):
    """
    Delta(q) estimated as the fitted value of a spline-in-lag regression of the individual
    effects, one summary per lag 0..q_max.
    """
    curve = smooth_att_draws(effects, spline_df, q_max)
    return [
        summarize(curve[:, q], level, int(effects.available(q).sum())) for q in range(q_max + 1)
    ]


def cluster_effects(model, covs, k=const.EST_CLUSTER_K, q=const.EST_HETERO_WINDOW, seed=const.MC_SEED, level=const.EST_LEVEL):
    """
    Cumulative effect at lag q evaluated at the covariate profile of each k-means cluster.

    Returns
    -------
    list of ClusterEffect
        One entry per cluster, ordered by label.
    """
    n = covs.values.shape[0]
    if k < 1 or k > n:
        raise InvalidConfig(f"cluster count must lie in 1..{n}, got {k}")
    if q > model.lag_window:
        raise InvalidConfig(f"cluster effect lag {q} exceeds the fitted window {model.lag_window}")

    labels = np.zeros(n, dtype=int) if k == 1 else cluster_units_kmeans(covs.values, k, seed)
    lags = np.arange(q + 1)
    clusters = []
    for label in range(k):
        members = labels == label
        profile = covs.values[members].mean(axis=0)
        effect = model.predict(profile[None, :], lags)[:, 0, :].sum(axis=1)
        clusters.append(
            ClusterEffect(label, tuple(float(x) for x in profile), summarize(effect, level, int(members.sum())))
        )
    return clusters
