import logging

import constants as const
from designs.confounder_design import ConfounderDesign
from designs.hetero_design import HeteroDesign
from designs.misspec_design import MisspecDesign
from designs.placebo_design import PlaceboDesign
from designs.smooth_design import SmoothDeltaDesign
from designs.synthetic import synthetic_panel
from errors import InvalidConfig
from Panel import NeighborGraph, load_covariates, load_edges, load_panel
from Simulation import run_design

logger = logging.getLogger(__name__)

PLACEBO_DESIGNS = {
    "placebo": PlaceboDesign,
    "smooth-delta": SmoothDeltaDesign,
    "hetero": HeteroDesign,
}


def _panel_size(config):
    """
    Size overrides for generated panels; missing entries keep the design defaults.
    """
    return {key: value for key, value in (("n", config.sim_units), ("T", config.sim_times)) if value is not None}


def _placebo_inputs(config):
    """
    The panel placebo-style designs shift: the configured data, or the synthetic panel.
    """
    if not config.has_data:
        logger.info("No data section configured, using the synthetic panel")
        return synthetic_panel(**_panel_size(config))
    if _panel_size(config):
        logger.warning("simulation.units and simulation.times are ignored when data is configured")
    panel = load_panel(config.outcomes, config.treatment)
    covs = load_covariates(config.covariates, panel) if config.covariates else None
    graph = load_edges(config.edges, panel) if config.edges else NeighborGraph(frozenset())
    return panel, covs, graph


class DesignManager:
    def __init__(self, config):
        name = config.design
        placebo_settings = {
            "fit_settings": config.simulation_settings(),
            "effect_settings": config.effect_settings(),
            "shift": tuple(config.shift),
        }
        if name in PLACEBO_DESIGNS:
            panel, covs, graph = _placebo_inputs(config)
            self.design = PLACEBO_DESIGNS[name](panel, covs, graph, **placebo_settings)
        elif name == "misspec-a":
            self.design = MisspecDesign(**_panel_size(config), **placebo_settings)
        elif name == "confounder":
            self.design = ConfounderDesign(
                tau=config.tau,
                rho_grid=tuple(config.rho_grid),
                gamma_t_grid=tuple(config.gamma_t_grid),
                gamma_y_grid=tuple(config.gamma_y_grid),
                **_panel_size(config),
            )
        else:
            raise InvalidConfig(f"design must be one of {const.SIM_DESIGNS}, got {name!r}")
        self.config = config

    def run(self, progress=None):
        return run_design(
            self.design,
            reps=self.config.reps,
            seed=self.config.seed,
            threads=self.config.threads,
            progress=progress,
        )
