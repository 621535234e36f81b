import dataclasses
import logging
import time
from typing import Dict

import numpy as np
import pandas as pd

import constants as const
from Basis import make_basis
from Estimands import (
    att_by_lag,
    cluster_effects,
    cumulative_att,
    fit_hetero,
    individual_effects,
    psi_contrast,
    smooth_att,
)
from Estimation import als_fit, residual_covariance
from Panel import build_sparsity
from Precision import covariance_select
from Sampling import PriorSpec, forecast_counterfactual, gibbs_run

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class FitSettings:
    basis_kind: str = const.BASIS_KIND
    basis_df: int = const.BASIS_DF
    adoption_gap: float = const.ADOPTION_GAP
    beta_variance: float = const.MC_BETA_VARIANCE
    a_variance: float = const.MC_A_VARIANCE
    iters: int = const.MC_ITERS
    burnin: int = const.MC_BURNIN
    thin: int = const.MC_THIN
    seed: int = const.MC_SEED


@dataclasses.dataclass(frozen=True)
class EffectSettings:
    max_lag: int = const.EST_MAX_LAG
    hetero_window: int = const.EST_HETERO_WINDOW
    hetero_spline_df: int = const.EST_HETERO_SPLINE_DF
    smooth_df: int = const.EST_SMOOTH_DF
    cluster_k: int = const.EST_CLUSTER_K
    level: float = const.EST_LEVEL
    seed: int = const.MC_SEED


@dataclasses.dataclass
class FitResult:
    """
    Everything one pass of the estimation pipeline produces.

    Attributes
    ----------
    panel, basis, pattern
        Inputs of the fit.
    als : AlsEstimate
    residual : ResidualCovariance
    precision : PrecisionEstimate
    draws : PosteriorDraws
    counterfactual : CounterfactualDraws
    timings : dict
        Seconds spent per stage.
    """

    panel: object
    basis: object
    pattern: object
    als: object
    residual: object
    precision: object
    draws: object
    counterfactual: object
    timings: Dict[str, float] = dataclasses.field(default_factory=dict)


def fit_model(panel, graph=None, settings=FitSettings(), pattern=None, progress=None):
    """
    Run sparsity -> ALS -> residual covariance -> covariance selection -> Gibbs -> forecast.

    Parameters
    ----------
    panel : PanelData
    graph : NeighborGraph, optional
        Used to build the sparsity pattern when ``pattern`` is not given.
    settings : FitSettings
    pattern : SparsityPattern, optional
        Explicit masks, overriding the graph and adoption gap.
    progress : callable, optional
        Forwarded to the Gibbs sampler.

    Returns
    -------
    FitResult
    """
    timings = {}
    t0 = time.time()

    if pattern is None:
        pattern = build_sparsity(panel, graph, settings.adoption_gap)
    basis = make_basis(settings.basis_kind, panel.times, settings.basis_df)
    timings["setup"] = time.time() - t0

    t0 = time.time()
    als = als_fit(panel, basis, pattern)
    residual = residual_covariance(panel, basis, als)
    timings["als"] = time.time() - t0

    t0 = time.time()
    precision = covariance_select(residual, pattern)
    timings["precision"] = time.time() - t0

    t0 = time.time()
    prior = PriorSpec(settings.beta_variance, settings.a_variance)
    draws = gibbs_run(
        panel, basis, pattern, precision, prior, als,
        iters=settings.iters, burnin=settings.burnin, thin=settings.thin, seed=settings.seed,
        progress=progress,
    )
    timings["gibbs"] = time.time() - t0

    t0 = time.time()
    # forecasting uses a stream independent of the sampler's
    rng = np.random.default_rng([settings.seed, 1])
    counterfactual = forecast_counterfactual(draws, panel, basis, precision, rng)
    timings["forecast"] = time.time() - t0

    return FitResult(panel, basis, pattern, als, residual, precision, draws, counterfactual, timings)


def effect_tables(effects, covs=None, settings=EffectSettings()):
    """
    Summaries of every estimand as DataFrames.

    Returns
    -------
    dict
        ``att`` always; ``hetero`` and ``clusters`` when covariates are given.
    """
    max_lag = min(settings.max_lag, effects.lags - 1)
    smooth_df = min(settings.smooth_df, max_lag + 1)

    smooth = smooth_att(effects, smooth_df, max_lag, settings.level)
    rows = []
    for q in range(max_lag + 1):
        marginal = att_by_lag(effects, q, settings.level)
        cumulative = cumulative_att(effects, q, settings.level)
        rows.append({
            "lag": q,
            "point": marginal.point,
            "lower": marginal.lower,
            "upper": marginal.upper,
            "cumulative_point": cumulative.point,
            "cumulative_lower": cumulative.lower,
            "cumulative_upper": cumulative.upper,
            "smooth_point": smooth[q].point,
            "smooth_lower": smooth[q].lower,
            "smooth_upper": smooth[q].upper,
            "n_units": marginal.n_units,
        })
    tables = {"att": pd.DataFrame(rows)}

    if covs is not None:
        window = min(settings.hetero_window, max_lag)
        model = fit_hetero(effects, covs, min(settings.hetero_spline_df, window), window)
        hetero = []
        for j, name in enumerate(covs.names):
            psi = psi_contrast(model, covs, j, window, level=settings.level)
            hetero.append({
                "covariate": name,
                "lag": window,
                "psi_point": psi.point,
                "psi_lower": psi.lower,
                "psi_upper": psi.upper,
            })
        tables["hetero"] = pd.DataFrame(hetero)

        k = min(settings.cluster_k, covs.values.shape[0])
        clusters = []
        for cluster in cluster_effects(model, covs, k, window, settings.seed, settings.level):
            row = {"cluster": cluster.label + 1, "n_units": cluster.summary.n_units}
            row.update(dict(zip(covs.names, cluster.profile)))
            row.update({
                "effect": cluster.summary.point,
                "lower": cluster.summary.lower,
                "upper": cluster.summary.upper,
            })
            clusters.append(row)
        tables["clusters"] = pd.DataFrame(clusters)

    return tables


def estimate_effects(fit, covs=None, settings=EffectSettings()):
    effects = individual_effects(fit.counterfactual, fit.panel, settings.max_lag)
    return effects, effect_tables(effects, covs, settings)
