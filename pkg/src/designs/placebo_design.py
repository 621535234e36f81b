import dataclasses
import logging

import numpy as np

import constants as const
import designs.constants as dconst
from designs.design import Design
from designs.synthetic import placebo_panel
from errors import InvalidConfig
from Estimands import att_by_lag, cumulative_att, fit_hetero, individual_effects, psi_contrast
from Pipeline import EffectSettings, FitSettings, fit_model
from Simulation import SimReport, estimate_row, score_trace

logger = logging.getLogger(__name__)


class PlaceboDesign(Design):
    """
    Placebo study on a fixed panel: adoption is moved 10-40 months into each unit's
    untreated past, a known effect is added, and the full pipeline is scored against it.

    Subclasses change the injected effect by overriding ``surface``.
    """

    name = "placebo"

    def __init__(
        self,
        panel,
        covs,
        graph,
        fit_settings=FitSettings(iters=const.SIM_ITERS, burnin=const.SIM_BURNIN),
        effect_settings=EffectSettings(),
        shift=dconst.PLACEBO_SHIFT,
        window_lo=dconst.PLACEBO_WINDOW_LO,
        window_hi=dconst.PLACEBO_WINDOW_HI,
        scored_lags=dconst.PLACEBO_SCORED_LAGS,
        hetero_windows=dconst.HETERO_WINDOWS,
    ):
        self.panel = panel
        self.covs = covs
        self.graph = graph
        self.fit_settings = fit_settings
        self.effect_settings = effect_settings
        self.shift = np.asarray(shift, dtype=float)
        if not np.all(np.isfinite(self.shift)):
            raise InvalidConfig("placebo shift must be finite")
        self.window_lo = window_lo
        self.window_hi = window_hi
        self.scored_lags = scored_lags
        self.hetero_windows = tuple(hetero_windows) if covs is not None else ()

    def surface(self, X, lags):
        """
        Injected effect for units with covariates X at the given lags (units x lags).
        """
        per_lag = np.zeros(len(lags))
        known = np.asarray(lags) < self.shift.size
        per_lag[known] = self.shift[np.asarray(lags)[known]]
        return np.tile(per_lag, (np.atleast_2d(X).shape[0], 1))

    def _unit_effects(self, lags):
        X = self.covs.values if self.covs is not None else np.zeros((self.panel.n, 1))
        return self.surface(X, lags)

    def psi_truth(self, j, q):
        """
        Contrast of the injected surface between the covariate quantiles, computed the
        same way the estimator contrasts its fitted surface.
        """
        lo, hi = np.quantile(self.covs.values[:, j], [const.EST_PSI_LO, const.EST_PSI_HI])
        high, low = self.covs.values.copy(), self.covs.values.copy()
        high[:, j], low[:, j] = hi, lo
        lags = np.arange(q + 1)
        return float((self.surface(high, lags) - self.surface(low, lags)).sum(axis=1).mean())

    def fit_replication(self, seed_sequence, panel=None, graph=None, pattern=None, settings=None):
        """
        Draw the placebo panel and run the pipeline on it.

        Returns
        -------
        tuple
            (placebo PanelData, injected effects per unit and lag, EffectDraws)
        """
        data_seed, chain_seed = seed_sequence.spawn(2)
        rng = np.random.default_rng(data_seed)
        source = self.panel if panel is None else panel
        placebo, injected = placebo_panel(source, self._unit_effects, rng, self.window_lo, self.window_hi)
        settings = dataclasses.replace(
            settings or self.fit_settings, seed=int(chain_seed.generate_state(1)[0])
        )
        fit = fit_model(placebo, graph or self.graph, settings, pattern=pattern)
        effects = individual_effects(fit.counterfactual, placebo, self.scored_lags - 1)
        return placebo, injected, effects

    @staticmethod
    def att_truth(effects, injected, q):
        return float(injected[effects.available(q), q].mean())

    def marginal_rows(self, effects, injected, variant="pipeline"):
        level = self.effect_settings.level
        rows, cumulative_truth = [], 0.0
        for q in range(min(self.scored_lags, effects.lags)):
            truth = self.att_truth(effects, injected, q)
            cumulative_truth += truth
            rows.append(estimate_row(variant, "att", q, truth, att_by_lag(effects, q, level)))
            rows.append(estimate_row(variant, "cumulative_att", q, cumulative_truth, cumulative_att(effects, q, level)))
        return rows

    def hetero_rows(self, effects):
        """
        Cumulative covariate contrasts over lags 0..window, one row per covariate and window.
        """
        rows = []
        spline_df = self.effect_settings.hetero_spline_df
        for window in self.hetero_windows:
            model = fit_hetero(effects, self.covs, min(spline_df, window), window)
            for j, name in enumerate(self.covs.names):
                psi = psi_contrast(model, self.covs, j, window, level=self.effect_settings.level)
                rows.append(estimate_row(f"L{window}", "psi", name, self.psi_truth(j, window), psi))
        return rows

    def run_replication(self, rep, seed_sequence):
        _placebo, injected, effects = self.fit_replication(seed_sequence)
        rows = self.marginal_rows(effects, injected)
        if self.covs is not None:
            rows += self.hetero_rows(effects)
        logger.debug("Replication %d scored %d estimands", rep, len(rows))
        return rows

    def summarize(self, trace, runtime, invalid):
        table = score_trace(trace)
        extra = {}
        psi = table[table["estimand"] == "psi"]
        if not psi.empty:
            windows = psi.pivot(index="key", columns="variant", values="coverage")
            windows.columns = [f"coverage_{variant}" for variant in windows.columns]
            extra["psi_windows"] = windows.reset_index()
        return SimReport(self.name, table, 0, invalid, runtime, extra)
