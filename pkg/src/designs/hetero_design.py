import numpy as np

import designs.constants as dconst
from designs.placebo_design import PlaceboDesign
from errors import InvalidConfig


def linear_surface(X, base=dconst.HETERO_BASE, coef=dconst.HETERO_COEF):
    """
    Stand-in heterogeneity surface: base + sum_j coef_j X_j, identical at every lag.
    """
    X = np.atleast_2d(X)
    coef = np.asarray(coef, dtype=float)
    if X.shape[1] < coef.size:
        raise InvalidConfig(f"surface uses {coef.size} covariates, panel has {X.shape[1]}")
    return base + X[:, : coef.size] @ coef


class HeteroDesign(PlaceboDesign):
    """
    Placebo study with unit-specific effects given by a surface of the covariates.
    Scores the marginal estimands and the covariate contrasts under every lag window.
    """

    name = "hetero"

    def __init__(self, panel, covs, graph, unit_surface=linear_surface, **kwargs):
        if covs is None:
            raise InvalidConfig("the heterogeneity design needs covariates")
        super().__init__(panel, covs, graph, **kwargs)
        self.unit_surface = unit_surface

    def surface(self, X, lags):
        return np.repeat(self.unit_surface(X)[:, None], len(lags), axis=1)
