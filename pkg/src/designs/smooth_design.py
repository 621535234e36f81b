import numpy as np

import designs.constants as dconst
from Basis import evaluate_basis, lag_basis
from designs.placebo_design import PlaceboDesign
from Estimands import att_by_lag, smooth_att
from Simulation import estimate_row, se_ratio


class SmoothDeltaDesign(PlaceboDesign):
    """
    Placebo study whose injected effect is a smooth curve in the lag; compares the
    spline-smoothed effect estimate against the per-lag average.
    """

    name = "smooth-delta"

    def __init__(self, panel, covs, graph, **kwargs):
        kwargs.setdefault("hetero_windows", ())
        super().__init__(panel, covs, graph, **kwargs)
        self.truth_basis = lag_basis(self.scored_lags - 1, len(dconst.SMOOTH_COEF) + 1)

    def curve(self, lags):
        z = evaluate_basis(self.truth_basis, np.asarray(lags, dtype=float))[:, 1:]
        return dconst.SMOOTH_BASELINE + z @ np.asarray(dconst.SMOOTH_COEF)

    def surface(self, X, lags):
        return np.tile(self.curve(lags), (np.atleast_2d(X).shape[0], 1))

    def run_replication(self, rep, seed_sequence):
        _placebo, injected, effects = self.fit_replication(seed_sequence)
        settings = self.effect_settings
        q_max = min(self.scored_lags, effects.lags) - 1
        smooth = smooth_att(effects, min(settings.smooth_df, q_max + 1), q_max, settings.level)

        rows = []
        for q in range(q_max + 1):
            truth = self.att_truth(effects, injected, q)
            rows.append(estimate_row("unsmoothed", "att", q, truth, att_by_lag(effects, q, settings.level)))
            rows.append(estimate_row("smooth", "att", q, truth, smooth[q]))
        return rows

    def summarize(self, trace, runtime, invalid):
        report = super().summarize(trace, runtime, invalid)
        report.extra["se_ratio"] = se_ratio(report.table, "smooth", "unsmoothed")
        return report
