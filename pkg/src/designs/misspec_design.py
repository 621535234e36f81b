import dataclasses

import numpy as np

import constants as const
import designs.constants as dconst
from designs.placebo_design import PlaceboDesign
from designs.synthetic import misspec_panel, misspec_patterns, placebo_panel
from Estimands import individual_effects
from Pipeline import FitSettings, fit_model
from Simulation import se_ratio


class MisspecDesign(PlaceboDesign):
    """
    Fits a diagonal A and the true sparse A to the same simulated placebo panels and
    compares bias, coverage and spread of the marginal effects.
    """

    name = "misspec-a"

    def __init__(
        self,
        fit_settings=FitSettings(iters=const.SIM_ITERS, burnin=const.SIM_BURNIN),
        n=dconst.MIS_UNITS,
        T=dconst.MIS_TIMES,
        **kwargs,
    ):
        fit_settings = dataclasses.replace(fit_settings, basis_kind="polynomial", basis_df=dconst.MIS_BASIS_DF)
        super().__init__(None, None, None, fit_settings=fit_settings, **kwargs)
        self.n = n
        self.T = T
        self.patterns = misspec_patterns(n)

    def _unit_effects(self, lags):
        return self.surface(np.zeros((self.n, 1)), lags)

    def run_replication(self, rep, seed_sequence):
        data_seed, chain_seed = seed_sequence.spawn(2)
        rng = np.random.default_rng(data_seed)
        panel = misspec_panel(rng, self.n, self.T)
        placebo, injected = placebo_panel(panel, self._unit_effects, rng, self.window_lo, self.window_hi)
        settings = dataclasses.replace(self.fit_settings, seed=int(chain_seed.generate_state(1)[0]))

        rows = []
        for variant, pattern in self.patterns.items():
            fit = fit_model(placebo, settings=settings, pattern=pattern)
            effects = individual_effects(fit.counterfactual, placebo, self.scored_lags - 1)
            rows += self.marginal_rows(effects, injected, variant)
        return rows

    def summarize(self, trace, runtime, invalid):
        report = super().summarize(trace, runtime, invalid)
        report.extra["se_ratio"] = se_ratio(report.table, "diagonal", "true")
        return report
