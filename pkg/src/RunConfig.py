import dataclasses
import json
import logging
import math
import os
from typing import Optional, Tuple

import constants as const
import designs.constants as dconst
from errors import InvalidConfig
from Pipeline import EffectSettings, FitSettings

logger = logging.getLogger(__name__)


def _positive_int(value):
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def _non_negative_int(value):
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


def _positive_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0


def _gap(value):
    return value == "inf" or (isinstance(value, (int, float)) and not isinstance(value, bool) and value >= 0)


def _path(value):
    return value is None or isinstance(value, str)


def _optional_positive_int(value):
    return value is None or _positive_int(value)


def _finite_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _number_list(value):
    return isinstance(value, (list, tuple)) and len(value) > 0 and all(_finite_number(v) for v in value)


# dotted key -> (attribute, default, check, description)
SCHEMA = {
    "data.outcomes": ("outcomes", None, _path, "outcomes CSV (unit_id,time,outcome)"),
    "data.treatment": ("treatment", None, _path, "treatment CSV (unit_id,adopt_time)"),
    "data.covariates": ("covariates", None, _path, "covariates CSV (unit_id,<names>)"),
    "data.edges": ("edges", None, _path, "edges CSV (unit_a,unit_b); omitted means no neighbours"),
    "basis.kind": ("basis_kind", const.BASIS_KIND, lambda v: v in const.BASIS_KINDS, "natural | polynomial | bspline"),
    "basis.df": ("basis_df", const.BASIS_DF, _positive_int, "basis functions including the intercept"),
    "adoption_gap": ("adoption_gap", const.ADOPTION_GAP, _gap, "months; number >= 0 or \"inf\""),
    "prior.beta_variance": ("beta_variance", const.MC_BETA_VARIANCE, _positive_number, "prior variance of every beta"),
    "prior.a_variance": ("a_variance", const.MC_A_VARIANCE, _positive_number, "prior variance of every free A entry"),
    "mcmc.iters": ("iters", const.MC_ITERS, _positive_int, "Gibbs sweeps"),
    "mcmc.burnin": ("burnin", const.MC_BURNIN, _non_negative_int, "discarded sweeps"),
    "mcmc.thin": ("thin", const.MC_THIN, _positive_int, "storage stride"),
    "mcmc.seed": ("seed", const.MC_SEED, _non_negative_int, "RNG seed"),
    "estimands.max_lag": ("max_lag", const.EST_MAX_LAG, _non_negative_int, "largest reported lag"),
    "estimands.hetero_window": ("hetero_window", const.EST_HETERO_WINDOW, _non_negative_int, "lags used by the heterogeneity fit"),
    "estimands.hetero_spline_df": ("hetero_spline_df", const.EST_HETERO_SPLINE_DF, _non_negative_int, "lag spline columns of the heterogeneity fit"),
    "estimands.smooth_df": ("smooth_df", const.EST_SMOOTH_DF, _positive_int, "lag basis of the smoothed effect, intercept included"),
    "estimands.cluster_k": ("cluster_k", const.EST_CLUSTER_K, _positive_int, "k-means clusters"),
    "simulation.design": ("design", const.SIM_DESIGNS[0], lambda v: v in const.SIM_DESIGNS, " | ".join(const.SIM_DESIGNS)),
    "simulation.reps": ("reps", const.SIM_REPS, _positive_int, "replications"),
    "simulation.iters": ("sim_iters", const.SIM_ITERS, _positive_int, "Gibbs sweeps per replication"),
    "simulation.burnin": ("sim_burnin", const.SIM_BURNIN, _non_negative_int, "discarded sweeps per replication"),
    "simulation.units": ("sim_units", None, _optional_positive_int, "units of generated panels; omitted means the design default"),
    "simulation.times": ("sim_times", None, _optional_positive_int, "months of generated panels; omitted means the design default"),
    "simulation.shift": ("shift", dconst.PLACEBO_SHIFT, _number_list, "injected placebo effect per lag, zero after the last"),
    "simulation.tau": ("tau", dconst.CONF_TAU, _finite_number, "true effect of the confounder study"),
    "simulation.rho_grid": ("rho_grid", dconst.CONF_RHO_GRID, _number_list, "confounder autocorrelations, each in [0, 1)"),
    "simulation.gamma_t_grid": ("gamma_t_grid", dconst.CONF_GAMMA_T_GRID, _number_list, "confounder strengths on adoption, each in [0, 1]"),
    "simulation.gamma_y_grid": ("gamma_y_grid", dconst.CONF_GAMMA_Y_GRID, _number_list, "confounder strengths on the outcome, each in [0, 1]"),
    "output_dir": ("output_dir", const.P_OUTPUT_PATH, lambda v: isinstance(v, str), "artifact directory"),
    "threads": ("threads", const.SIM_THREADS, _positive_int, "worker pool size"),
}

DATA_KEYS = ("outcomes", "treatment", "covariates", "edges")


@dataclasses.dataclass
class RunConfig:
    """
    Flattened run configuration. Every field defaults to the value in constants.py.
    """

    outcomes: Optional[str] = None
    treatment: Optional[str] = None
    covariates: Optional[str] = None
    edges: Optional[str] = None
    basis_kind: str = const.BASIS_KIND
    basis_df: int = const.BASIS_DF
    adoption_gap: float = const.ADOPTION_GAP
    beta_variance: float = const.MC_BETA_VARIANCE
    a_variance: float = const.MC_A_VARIANCE
    iters: int = const.MC_ITERS
    burnin: int = const.MC_BURNIN
    thin: int = const.MC_THIN
    seed: int = const.MC_SEED
    max_lag: int = const.EST_MAX_LAG
    hetero_window: int = const.EST_HETERO_WINDOW
    hetero_spline_df: int = const.EST_HETERO_SPLINE_DF
    smooth_df: int = const.EST_SMOOTH_DF
    cluster_k: int = const.EST_CLUSTER_K
    design: str = const.SIM_DESIGNS[0]
    reps: int = const.SIM_REPS
    sim_iters: int = const.SIM_ITERS
    sim_burnin: int = const.SIM_BURNIN
    sim_units: Optional[int] = None
    sim_times: Optional[int] = None
    shift: Tuple[float, ...] = dconst.PLACEBO_SHIFT
    tau: float = dconst.CONF_TAU
    rho_grid: Tuple[float, ...] = dconst.CONF_RHO_GRID
    gamma_t_grid: Tuple[float, ...] = dconst.CONF_GAMMA_T_GRID
    gamma_y_grid: Tuple[float, ...] = dconst.CONF_GAMMA_Y_GRID
    output_dir: str = const.P_OUTPUT_PATH
    threads: int = const.SIM_THREADS
    source: Optional[str] = None

    @property
    def has_data(self):
        return self.outcomes is not None and self.treatment is not None

    def fit_settings(self):
        return FitSettings(
            basis_kind=self.basis_kind,
            basis_df=self.basis_df,
            adoption_gap=self.adoption_gap,
            beta_variance=self.beta_variance,
            a_variance=self.a_variance,
            iters=self.iters,
            burnin=self.burnin,
            thin=self.thin,
            seed=self.seed,
        )

    def simulation_settings(self):
        """
        Fit settings inside simulation replications: the simulation sweep counts replace
        the mcmc ones.
        """
        return dataclasses.replace(self.fit_settings(), iters=self.sim_iters, burnin=self.sim_burnin)

    def effect_settings(self):
        return EffectSettings(
            max_lag=self.max_lag,
            hetero_window=self.hetero_window,
            hetero_spline_df=self.hetero_spline_df,
            smooth_df=self.smooth_df,
            cluster_k=self.cluster_k,
            seed=self.seed,
        )

    def to_dict(self):
        """
        Nested JSON-ready echo of the configuration.
        """
        nested = {}
        for key, (attribute, *_rest) in SCHEMA.items():
            value = getattr(self, attribute)
            if attribute == "adoption_gap" and math.isinf(value):
                value = "inf"
            node = nested
            *parents, leaf = key.split(".")
            for parent in parents:
                node = node.setdefault(parent, {})
            node[leaf] = value
        return nested


def _flatten(document, prefix=""):
    flat = {}
    for key, value in document.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def parse_config(document, base_dir="."):
    """
    Validate a configuration document (already parsed from JSON).

    Unknown keys and out-of-range values raise InvalidConfig. Relative data paths are
    resolved against ``base_dir``.
    """
    if not isinstance(document, dict):
        raise InvalidConfig("configuration must be a JSON object")

    config = RunConfig()
    for key, value in _flatten(document).items():
        if key not in SCHEMA:
            raise InvalidConfig(f"unknown configuration key {key!r}")
        attribute, _default, check, description = SCHEMA[key]
        if not check(value):
            raise InvalidConfig(f"invalid value {value!r} for {key} ({description})")
        if attribute == "adoption_gap":
            value = math.inf if value == "inf" else value
        if isinstance(value, list):
            value = tuple(value)
        if attribute in DATA_KEYS and value is not None and not os.path.isabs(value):
            value = os.path.normpath(os.path.join(base_dir, value))
        setattr(config, attribute, value)
    return config


def load_config(path=None):
    """
    Read a JSON run configuration; without a path every default applies.
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, "r") as file:
            document = json.load(file)
    except FileNotFoundError:
        raise InvalidConfig(f"configuration file {path} does not exist") from None
    except json.JSONDecodeError as err:
        raise InvalidConfig(f"{path} is not valid JSON: {err}") from None

    config = parse_config(document, os.path.dirname(os.path.abspath(path)))
    config.source = os.path.abspath(path)
    logger.debug("Loaded configuration from %s", path)
    return config


def apply_overrides(config, **flags):
    """
    Command line flags take precedence over the file; None means "not given".
    """
    for attribute, value in flags.items():
        if value is None:
            continue
        key = next((k for k, entry in SCHEMA.items() if entry[0] == attribute), None)
        if key is None:
            raise InvalidConfig(f"unknown override {attribute}")
        if not SCHEMA[key][2](value):
            raise InvalidConfig(f"invalid value {value!r} for --{attribute.replace('_', '-')}")
        setattr(config, attribute, value)
    return config


def validate(config, require_data=True, require_covariates=False):
    """
    Check cross-field ranges and that every referenced file exists, before any compute.
    """
    if config.burnin >= config.iters:
        raise InvalidConfig(f"burnin ({config.burnin}) must be below iters ({config.iters})")
    if config.sim_burnin >= config.sim_iters:
        raise InvalidConfig(
            f"simulation.burnin ({config.sim_burnin}) must be below simulation.iters ({config.sim_iters})"
        )
    if require_data and not config.has_data:
        raise InvalidConfig("data.outcomes and data.treatment are required")
    if require_covariates and config.covariates is None:
        raise InvalidConfig("data.covariates is required")
    for attribute in DATA_KEYS:
        path = getattr(config, attribute)
        if path is not None and not os.path.isfile(path):
            raise InvalidConfig(f"data.{attribute} file {path} does not exist")
    return config


def schema_text():
    lines = []
    for key, (_attribute, default, _check, description) in SCHEMA.items():
        shown = "inf" if isinstance(default, float) and math.isinf(default) else default
        lines.append(f"{key:28s} default={shown!s:14s} {description}")
    return "\n".join(lines)
