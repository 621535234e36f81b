import itertools
import logging

import numpy as np
import pandas as pd
from scipy.stats import norm

import designs.constants as dconst
from Basis import evaluate_basis, natural_spline_basis
from designs.design import Design
from errors import InvalidConfig, NumericalError
from Simulation import SimReport, score_trace

logger = logging.getLogger(__name__)

ESTIMATORS = ("stationarity", "unconfoundedness")


def ar1_confounder(rng, n, T, rho):
    """
    Per-unit AR(1) with unit-variance innovations, started from its stationary law.
    """
    u = np.empty((n, T))
    u[:, 0] = rng.standard_normal(n) / np.sqrt(1 - rho**2)
    for t in range(1, T):
        u[:, t] = rho * u[:, t - 1] + rng.standard_normal(n)
    return u


def probit_adoption(rng, u, gamma_t, window=dconst.CONF_WINDOW, fallback=dconst.CONF_FALLBACK):
    """
    First month in the window whose Bernoulli(Phi(intercept + gamma_t U)) draw succeeds,
    ``fallback`` for units that never adopt inside the window.
    """
    lo, hi = window
    months = np.arange(lo, hi + 1)
    hazard = norm.cdf(dconst.CONF_HAZARD_INTERCEPT + gamma_t * u[:, months - 1])
    events = rng.uniform(size=hazard.shape) < hazard
    first = np.argmax(events, axis=1)
    return np.where(events.any(axis=1), months[first], fallback)


def confounded_outcomes(rng, u, adopt_time, tau, gamma_y):
    n, T = u.shape
    times = np.arange(1, T + 1)
    treated = times[None, :] >= adopt_time[:, None]
    return tau * treated + dconst.CONF_TREND * times[None, :] - gamma_y * u + rng.standard_normal((n, T))


def unconfoundedness_estimate(outcomes, adopt_time, df=dconst.CONF_SPLINE_DF):
    """
    Treatment dummy coefficient of a pooled regression with a unit-specific spline trend
    (intercept included) for every unit.
    """
    n, T = outcomes.shape
    times = np.arange(1, T + 1)
    trend = natural_spline_basis(times, df).eval_cache
    design = np.column_stack((
        np.kron(np.eye(n), trend),
        (times[None, :] >= adopt_time[:, None]).ravel().astype(float),
    ))
    coef, _residuals, rank, _sv = np.linalg.lstsq(design, outcomes.ravel(), rcond=None)
    if rank < design.shape[1]:
        raise NumericalError(f"unconfoundedness design has rank {rank} < {design.shape[1]}")
    return float(coef[-1])


def stationarity_estimate(outcomes, adopt_time, df=dconst.CONF_SPLINE_DF, points=dconst.CONF_FORECAST_POINTS):
    """
    Fit each unit's pre-adoption trend, forecast the first post-adoption points and average
    observed minus forecast over points and units.
    """
    gaps = []
    for y, t0 in zip(outcomes, adopt_time):
        basis = natural_spline_basis(np.arange(1, t0), df)
        coef, *_ = np.linalg.lstsq(basis.eval_cache, y[: t0 - 1], rcond=None)
        post = np.arange(t0, t0 + points)
        forecast = evaluate_basis(basis, post.astype(float)) @ coef
        gaps.append(np.mean(y[post - 1] - forecast))
    return float(np.mean(gaps))


class ConfounderDesign(Design):
    """
    Time-varying confounder study: compares a stationarity forecaster with a regression
    that assumes unconfounded adoption over a grid of confounding strengths.
    """

    name = "confounder"

    def __init__(
        self,
        n=dconst.CONF_UNITS,
        T=dconst.CONF_TIMES,
        tau=dconst.CONF_TAU,
        rho_grid=dconst.CONF_RHO_GRID,
        gamma_t_grid=dconst.CONF_GAMMA_T_GRID,
        gamma_y_grid=dconst.CONF_GAMMA_Y_GRID,
    ):
        self.cells = list(itertools.product(rho_grid, gamma_t_grid, gamma_y_grid))
        if not self.cells:
            raise InvalidConfig("confounder grids must be nonempty")
        for rho, gamma_t, gamma_y in self.cells:
            if not (0 <= rho < 1 and 0 <= gamma_t <= 1 and 0 <= gamma_y <= 1):
                raise InvalidConfig(f"grid cell ({rho}, {gamma_t}, {gamma_y}) outside [0, 1)")
        if T < dconst.CONF_FALLBACK + dconst.CONF_FORECAST_POINTS - 1:
            raise InvalidConfig(f"T={T} leaves no room to forecast after month {dconst.CONF_FALLBACK}")
        self.n, self.T, self.tau = n, T, tau

    def run_replication(self, rep, seed_sequence):
        rng = np.random.default_rng(seed_sequence)
        rows = []
        for rho, gamma_t, gamma_y in self.cells:
            u = ar1_confounder(rng, self.n, self.T, rho)
            adopt_time = probit_adoption(rng, u, gamma_t)
            outcomes = confounded_outcomes(rng, u, adopt_time, self.tau, gamma_y)
            estimates = {}
            try:
                estimates["stationarity"] = stationarity_estimate(outcomes, adopt_time)
                estimates["unconfoundedness"] = unconfoundedness_estimate(outcomes, adopt_time)
            except (NumericalError, np.linalg.LinAlgError) as err:
                logger.warning("Replication %d cell (%s, %s, %s) failed: %s", rep, rho, gamma_t, gamma_y, err)
            for estimator in ESTIMATORS:
                rows.append({
                    "variant": f"rho={rho} gamma_t={gamma_t} gamma_y={gamma_y}",
                    "estimand": estimator,
                    "key": 0,
                    "truth": self.tau,
                    "estimate": estimates.get(estimator, np.nan),
                    "lower": np.nan,
                    "upper": np.nan,
                    "rho": rho,
                    "gamma_t": gamma_t,
                    "gamma_y": gamma_y,
                })
        return rows

    def summarize(self, trace, runtime, invalid):
        table = score_trace(trace)
        grid = []
        if not trace.empty:
            for (rho, gamma_t, gamma_y), cell in trace.groupby(["rho", "gamma_t", "gamma_y"], sort=True):
                row = {"rho": rho, "gamma_t": gamma_t, "gamma_y": gamma_y}
                for estimator in ESTIMATORS:
                    estimates = cell.loc[cell["estimand"] == estimator, "estimate"]
                    row[f"abs_bias_{estimator}"] = float(abs(estimates.mean() - self.tau))
                valid = cell.loc[cell["estimand"] == ESTIMATORS[0], "estimate"].notna()
                row["valid"] = int(valid.sum())
                row["invalid"] = int((~valid).sum())
                grid.append(row)
        return SimReport(self.name, table, 0, invalid, runtime, {"grid": pd.DataFrame(grid)})
