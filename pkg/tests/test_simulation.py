import numpy as np
import pandas as pd
import pytest

import constants as const
from conftest import make_panel
from designs.confounder_design import (
    ConfounderDesign,
    ar1_confounder,
    probit_adoption,
    stationarity_estimate,
    unconfoundedness_estimate,
)
from designs.design import Design
from designs.hetero_design import HeteroDesign, linear_surface
from designs.misspec_design import MisspecDesign
from designs.placebo_design import PlaceboDesign
from designs.smooth_design import SmoothDeltaDesign
from designs.synthetic import misspec_patterns, misspec_var, placebo_panel, synthetic_panel
from Estimands import EstimandSummary
from errors import InsufficientPreperiod, InvalidConfig, NumericalError
from Pipeline import FitSettings
from Simulation import SimReport, estimate_row, run_design, score_trace, se_ratio


class NoisyMeanDesign(Design):
    """
    Estimates a known mean of 1 from 50 normal draws; every fourth replication fails.
    """

    name = "noisy-mean"

    def run_replication(self, rep, seed_sequence):
        if rep % 4 == 3:
            raise NumericalError("synthetic failure")
        draws = np.random.default_rng(seed_sequence).normal(1.0, 1.0, size=50)
        half = 1.96 / np.sqrt(50)
        summary = EstimandSummary(draws.mean(), draws.mean() - half, draws.mean() + half, 50)
        return [estimate_row("only", "mean", 0, 1.0, summary)]

    def summarize(self, trace, runtime, invalid):
        return SimReport(self.name, score_trace(trace), 0, invalid, runtime)


def trace_rows(estimates, truth=1.0, lower=None, upper=None):
    return pd.DataFrame({
        "variant": "v",
        "estimand": "att",
        "key": 0,
        "truth": truth,
        "estimate": estimates,
        "lower": lower if lower is not None else np.nan,
        "upper": upper if upper is not None else np.nan,
    })


class TestScoreTrace:
    def test_bias_se_and_coverage(self):
        trace = trace_rows([0.0, 2.0, 4.0], lower=[2.0, 1.5, 5.0], upper=[3.0, 2.5, 6.0])
        row = score_trace(trace).iloc[0]
        assert row["bias"] == pytest.approx(1.0)
        assert row["se"] == pytest.approx(2.0)
        assert row["coverage"] == pytest.approx(0.0)
        assert row["reps"] == 3

    def test_coverage_counts_the_truth_inside(self):
        trace = trace_rows([1.0, 1.0], lower=[0.0, 2.0], upper=[2.0, 3.0])
        assert score_trace(trace).iloc[0]["coverage"] == pytest.approx(0.5)

    def test_point_estimates_have_no_coverage(self):
        row = score_trace(trace_rows([1.0, 3.0])).iloc[0]
        assert np.isnan(row["coverage"])
        assert row["bias"] == pytest.approx(1.0)

    def test_missing_estimates_are_dropped(self):
        row = score_trace(trace_rows([1.0, np.nan, 3.0])).iloc[0]
        assert row["reps"] == 2

    def test_empty_trace(self):
        assert score_trace(pd.DataFrame()).empty

    def test_se_ratio_per_key(self):
        table = pd.DataFrame({
            "variant": ["a", "a", "b", "b"],
            "estimand": "att",
            "key": [0, 1, 0, 1],
            "se": [2.0, 3.0, 1.0, 1.5],
        })
        ratio = se_ratio(table, "a", "b")
        assert ratio["key"].tolist() == [0, 1]
        np.testing.assert_allclose(ratio["se_ratio"], [2.0, 2.0])


class TestRunDesign:
    def test_independent_of_thread_count(self):
        report_one, trace_one = run_design(NoisyMeanDesign(), reps=12, seed=7, threads=1)
        report_four, trace_four = run_design(NoisyMeanDesign(), reps=12, seed=7, threads=4)
        pd.testing.assert_frame_equal(trace_one, trace_four)
        pd.testing.assert_frame_equal(report_one.table, report_four.table)

    def test_failures_are_counted_and_skipped(self):
        report, trace = run_design(NoisyMeanDesign(), reps=12, seed=7, threads=2)
        assert report.reps == 12
        assert report.invalid == 3
        assert sorted(trace["rep"]) == [r for r in range(12) if r % 4 != 3]
        assert trace.columns[0] == "rep"

    def test_progress_reaches_the_total(self):
        seen = []
        run_design(NoisyMeanDesign(), reps=8, seed=1, threads=1, progress=seen.append)
        assert seen[-1] == 8

    def test_report_serializes(self):
        report, _ = run_design(NoisyMeanDesign(), reps=4, seed=2)
        document = report.to_dict()
        assert document["design"] == "noisy-mean"
        assert document["estimands"][0]["variant"] == "only"


class TestPlaceboPanel:
    def test_truncates_and_injects(self):
        panel = make_panel(T=80, adopt=(60, 70, 81))
        shift = np.array([5.0, 10.0, 20.0])

        def effects(lags):
            per_lag = np.zeros(lags.size)
            per_lag[: shift.size] = shift
            return np.tile(per_lag, (panel.n, 1))

        placebo, injected = placebo_panel(panel, effects, np.random.default_rng(0), 40, 10)
        assert placebo.T == 80
        assert placebo.last_time.tolist() == [59, 69, 80]
        assert np.all(placebo.adopt_time >= panel.adopt_time - 40)
        assert np.all(placebo.adopt_time <= panel.adopt_time - 10)
        for i in range(panel.n):
            start = placebo.adopt_time[i]
            np.testing.assert_allclose(
                placebo.outcomes[i, start - 1 : start + 2] - panel.outcomes[i, start - 1 : start + 2], shift
            )
            np.testing.assert_allclose(placebo.outcomes[i, : start - 1], panel.outcomes[i, : start - 1])
        np.testing.assert_allclose(injected[:, :3], np.tile(shift, (3, 1)))

    def test_window_order(self):
        with pytest.raises(InvalidConfig):
            placebo_panel(make_panel(), lambda lags: np.zeros((3, lags.size)), np.random.default_rng(0), 10, 40)

    def test_short_history(self):
        with pytest.raises(InsufficientPreperiod):
            placebo_panel(make_panel(), lambda lags: np.zeros((3, lags.size)), np.random.default_rng(0), 40, 10)

    def test_non_finite_shift(self):
        panel, covs, graph = synthetic_panel(n=4)
        with pytest.raises(InvalidConfig):
            PlaceboDesign(panel, covs, graph, shift=(1.0, np.inf))


class TestSyntheticInputs:
    def test_synthetic_panel_is_seeded(self):
        first, covs, graph = synthetic_panel(seed=3, n=5)
        second, _, _ = synthetic_panel(seed=3, n=5)
        np.testing.assert_array_equal(first.outcomes, second.outcomes)
        assert covs.p == 4
        assert len(graph.edges) == 4

    def test_misspecified_a_has_cross_lags(self):
        a_matrix = misspec_var(6)
        np.testing.assert_allclose(np.diag(a_matrix), 0.0)
        assert a_matrix[0, 1] == 0.4 and a_matrix[1, 2] == 0.0 and a_matrix[2, 3] == 0.4
        patterns = misspec_patterns(6)
        assert patterns["true"].a_mask[0, 1] and not patterns["diagonal"].a_mask[0, 1]

    def test_linear_surface_needs_two_covariates(self):
        with pytest.raises(InvalidConfig):
            linear_surface(np.zeros((3, 1)), 5.0, (2.0, -1.5))


class TestConfounder:
    def noise_free(self, n=5, T=60, tau=3.0):
        times = np.arange(1, T + 1)
        adopt_time = np.array([30, 33, 36, 40, 45][:n])
        outcomes = tau * (times[None, :] >= adopt_time[:, None]) + 2.0 + 0.1 * times[None, :] + np.arange(n)[:, None]
        return outcomes, adopt_time

    def test_estimators_exact_without_noise(self):
        outcomes, adopt_time = self.noise_free()
        assert unconfoundedness_estimate(outcomes, adopt_time) == pytest.approx(3.0, abs=1e-8)
        assert stationarity_estimate(outcomes, adopt_time) == pytest.approx(3.0, abs=1e-8)

    def test_stationary_confounder_variance(self):
        u = ar1_confounder(np.random.default_rng(0), 4000, 3, 0.9)
        assert np.var(u[:, 0]) == pytest.approx(1 / (1 - 0.81), rel=0.1)

    def test_adoption_falls_back_outside_the_window(self):
        u = np.full((3, 156), -50.0)
        adopt = probit_adoption(np.random.default_rng(0), u, 1.0)
        assert adopt.tolist() == [145, 145, 145]

    def test_grid_validation(self):
        with pytest.raises(InvalidConfig):
            ConfounderDesign(rho_grid=(1.0,))
        with pytest.raises(InvalidConfig):
            ConfounderDesign(T=100)

    def test_replication_rows_cover_the_grid(self):
        design = ConfounderDesign(n=6, rho_grid=(0.5,), gamma_t_grid=(0.0, 1.0), gamma_y_grid=(1.0,))
        report, trace = run_design(design, reps=2, seed=3)
        assert len(trace) == 2 * 2 * 2
        assert set(trace["estimand"]) == {"stationarity", "unconfoundedness"}
        assert np.all(np.isnan(report.table["coverage"]))
        grid = report.extra["grid"]
        assert len(grid) == 2
        assert grid["valid"].tolist() == [2, 2]


@pytest.mark.slow
class TestPlaceboDesign:
    def test_scores_every_lag(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = PlaceboDesign(panel, covs, graph, fit_settings=FitSettings(iters=60, burnin=20))
        report, trace = run_design(design, reps=1, seed=11)
        att = trace[(trace["estimand"] == "att") & (trace["variant"] == "pipeline")]
        assert att["key"].tolist() == list(range(10))
        np.testing.assert_allclose(att["truth"].iloc[:5], [5.0, 10.0, 20.0, 5.0, 4.0])
        np.testing.assert_allclose(att["truth"].iloc[5:], 0.0)
        assert report.invalid == 0
        assert set(trace.loc[trace["estimand"] == "psi", "key"]) == set(covs.names)

    def test_psi_rows_cover_both_windows(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = PlaceboDesign(panel, covs, graph, fit_settings=FitSettings(iters=60, burnin=20))
        report, trace = run_design(design, reps=1, seed=11)
        psi = trace[trace["estimand"] == "psi"]
        assert set(psi["variant"]) == {"L9", "L2"}
        np.testing.assert_allclose(psi["truth"], 0.0)
        assert list(report.extra["psi_windows"].columns) == ["key", "coverage_L2", "coverage_L9"]


class TestPsiTruth:
    def test_constant_shift_has_no_contrast(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = PlaceboDesign(panel, covs, graph)
        assert design.psi_truth(0, 9) == 0.0

    def test_grows_with_the_window(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = HeteroDesign(panel, covs, graph)
        lo, hi = np.quantile(covs.values[:, 0], [const.EST_PSI_LO, const.EST_PSI_HI])
        assert design.psi_truth(0, 0) == pytest.approx(2.0 * (hi - lo))
        for window in design.hetero_windows:
            for j in range(covs.p):
                assert design.psi_truth(j, window) == pytest.approx((window + 1) * design.psi_truth(j, 0))
        assert design.psi_truth(2, 9) == pytest.approx(0.0)


@pytest.mark.slow
class TestDesignReplications:
    settings = FitSettings(iters=60, burnin=20)

    def test_hetero(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = HeteroDesign(panel, covs, graph, fit_settings=self.settings)
        report, trace = run_design(design, reps=1, seed=11)
        assert report.invalid == 0
        assert set(trace["estimand"]) == {"att", "cumulative_att", "psi"}

        att = trace[trace["estimand"] == "att"]
        assert att["key"].tolist() == list(range(10))
        np.testing.assert_allclose(att["truth"], linear_surface(covs.values).mean())

        psi = trace[trace["estimand"] == "psi"]
        assert set(psi["key"]) == set(covs.names)
        for row in psi.itertuples():
            window = int(row.variant[1:])
            j = covs.names.index(row.key)
            assert row.truth == pytest.approx((window + 1) * design.psi_truth(j, 0))

    def test_smooth_delta(self):
        panel, covs, graph = synthetic_panel(seed=5, n=6)
        design = SmoothDeltaDesign(panel, covs, graph, fit_settings=self.settings)
        report, trace = run_design(design, reps=2, seed=11)
        assert report.invalid == 0
        assert set(trace["variant"]) == {"smooth", "unsmoothed"}
        assert set(trace["estimand"]) == {"att"}
        expected = design.curve(np.arange(10))
        for variant in ("smooth", "unsmoothed"):
            rows = trace[(trace["variant"] == variant) & (trace["rep"] == 0)]
            assert rows["key"].tolist() == list(range(10))
            np.testing.assert_allclose(rows["truth"], expected)
        assert report.extra["se_ratio"]["key"].tolist() == list(range(10))

    def test_misspecified_a(self):
        design = MisspecDesign(fit_settings=self.settings, n=8)
        report, trace = run_design(design, reps=2, seed=11)
        assert report.invalid == 0
        assert set(trace["variant"]) == {"diagonal", "true"}
        for variant in ("diagonal", "true"):
            att = trace[(trace["variant"] == variant) & (trace["estimand"] == "att") & (trace["rep"] == 0)]
            np.testing.assert_allclose(att["truth"].iloc[:5], [5.0, 10.0, 20.0, 5.0, 4.0])
        ratio = report.extra["se_ratio"]
        assert ratio["key"].tolist() == list(range(10))
        assert np.all(ratio["se_ratio"] > 0)
