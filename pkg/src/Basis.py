import dataclasses
import logging
from typing import Tuple

import numpy as np
import patsy

import constants as const
from errors import InvalidConfig, RankDeficient

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class BasisSet:
    """
    K basis functions phi_k(t), the first one identically 1, plus their values on a grid.

    Attributes
    ----------
    kind : str
        ``natural``, ``polynomial`` or ``bspline``.
    df : int
        Total number of functions K, intercept included.
    knots : tuple of float
        Interior knot locations (empty for polynomials).
    bounds : tuple of float
        Boundary knots; splines continue linearly outside them.
    grid : np.ndarray
        Points the basis was built on.
    eval_cache : np.ndarray
        len(grid) x K matrix of phi_k on the grid.
    """

    kind: str
    df: int
    knots: Tuple[float, ...]
    bounds: Tuple[float, float]
    grid: np.ndarray
    eval_cache: np.ndarray = dataclasses.field(default=None, repr=False)

    def __post_init__(self):
        if self.eval_cache is None:
            object.__setattr__(self, "eval_cache", evaluate_basis(self, self.grid))
        self.eval_cache.setflags(write=False)

    def describe(self):
        return {
            "kind": self.kind,
            "df": self.df,
            "knots": list(self.knots),
            "bounds": list(self.bounds),
        }


def _spline_columns(kind, knots, bounds, t):
    """
    Raw spline columns (intercept excluded) for points inside the boundary knots.
    """
    lo, hi = bounds
    if kind == "natural":
        if len(knots) == 0:
            # A natural spline with only boundary knots is the straight line through them
            return ((t - lo) / (hi - lo))[:, None]
        cardinal = np.asarray(
            patsy.cr(t, knots=np.asarray(knots), lower_bound=lo, upper_bound=hi)
        )
        # cardinal columns sum to one, so the intercept replaces the first of them
        return cardinal[:, 1:]
    if kind == "bspline":
        return np.asarray(
            patsy.bs(
                t,
                knots=np.asarray(knots, dtype=float),
                degree=3,
                include_intercept=False,
                lower_bound=lo,
                upper_bound=hi,
            )
        )
    raise InvalidConfig(f"unknown spline kind {kind}")


def _boundary_slope(kind, knots, bounds, side):
    """
    Exact slope of every spline column at a boundary knot.

    Each column is a cubic polynomial on the outermost knot interval, so a cubic fit
    through four points of that interval reproduces it exactly.
    """
    edges = np.concatenate(([bounds[0]], knots, [bounds[1]]))
    a, b = (edges[0], edges[1]) if side == "lower" else (edges[-2], edges[-1])
    points = np.linspace(a, b, 4)
    values = _spline_columns(kind, knots, bounds, points)
    anchor = bounds[0] if side == "lower" else bounds[1]
    slopes = []
    for column in values.T:
        coefs = np.polyfit(points - anchor, column, 3)
        slopes.append(coefs[-2])
    return np.array(slopes)


def evaluate_basis(basis, t):
    """
    Evaluate every basis function at the time(s) t.

    Parameters
    ----------
    basis : BasisSet
        The basis to evaluate.
    t : float or array_like
        Evaluation point(s); may lie outside the grid.

    Returns
    -------
    np.ndarray
        K-vector for a scalar t, otherwise len(t) x K.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.size, basis.df))
    out[:, 0] = 1.0

    if basis.kind == "polynomial":
        lo, hi = basis.bounds
        z = (t - (lo + hi) / 2) / ((hi - lo) / 2)
        for k in range(1, basis.df):
            out[:, k] = z**k
    elif basis.df > 1:
        lo, hi = basis.bounds
        inside = (t >= lo) & (t <= hi)
        if inside.any():
            out[inside, 1:] = _spline_columns(basis.kind, basis.knots, basis.bounds, t[inside])
        for side, edge, outside in (("lower", lo, t < lo), ("upper", hi, t > hi)):
            if outside.any():
                at_edge = _spline_columns(basis.kind, basis.knots, basis.bounds, np.array([edge]))[0]
                slope = _boundary_slope(basis.kind, basis.knots, basis.bounds, side)
                out[outside, 1:] = at_edge[None, :] + (t[outside] - edge)[:, None] * slope[None, :]

    return out[0] if scalar else out


def _quantile_knots(grid, df):
    n_interior = df - 2
    if n_interior <= 0:
        return ()
    quantiles = np.linspace(0, 1, n_interior + 2)[1:-1]
    return tuple(float(k) for k in np.quantile(grid, quantiles))


def _check_rank(basis):
    rank = np.linalg.matrix_rank(basis.eval_cache)
    if rank < basis.df:
        raise RankDeficient(f"{basis.kind} basis with df={basis.df} has rank {rank} on its grid")
    return basis


def _time_grid(time_grid, df):
    grid = np.asarray(time_grid, dtype=float)
    if df < 1:
        raise InvalidConfig(f"basis df must be >= 1, got {df}")
    if grid.size < df + 1:
        raise InvalidConfig(f"time grid of length {grid.size} is too short for df={df}")
    return grid


def natural_spline_basis(time_grid, df):
    """
    Intercept plus a natural cubic spline with df - 2 interior knots at equally spaced
    quantiles of the grid and boundary knots at the grid ends.
    """
    if df < 2:
        raise InvalidConfig(f"natural spline basis needs df >= 2, got {df}")
    grid = _time_grid(time_grid, df)
    return _natural(grid, df)


def _natural(grid, df):
    bounds = (float(grid.min()), float(grid.max()))
    knots = _quantile_knots(grid, df) if df > 2 else ()
    return _check_rank(BasisSet("natural", df, knots, bounds, grid))


def polynomial_basis(time_grid, df):
    """
    Intercept plus powers 1..df-1 of the time rescaled to [-1, 1].
    """
    grid = _time_grid(time_grid, df)
    bounds = (float(grid.min()), float(grid.max()))
    return _check_rank(BasisSet("polynomial", df, (), bounds, grid))


def bspline_basis(time_grid, df):
    """
    Intercept plus a cubic B-spline with df - 1 columns; needs df >= 4.
    """
    if df < 4:
        raise InvalidConfig(f"cubic B-spline basis needs df >= 4, got {df}")
    grid = _time_grid(time_grid, df)
    bounds = (float(grid.min()), float(grid.max()))
    n_interior = df - 1 - 3
    quantiles = np.linspace(0, 1, n_interior + 2)[1:-1]
    knots = tuple(float(k) for k in np.quantile(grid, quantiles))
    return _check_rank(BasisSet("bspline", df, knots, bounds, grid))


BASIS_BUILDERS = {
    "natural": natural_spline_basis,
    "polynomial": polynomial_basis,
    "bspline": bspline_basis,
}


def make_basis(kind, time_grid, df):
    if kind not in BASIS_BUILDERS:
        raise InvalidConfig(f"basis kind must be one of {const.BASIS_KINDS}, got {kind!r}")
    basis = BASIS_BUILDERS[kind](time_grid, df)
    logger.debug("Built %s basis with df=%d, knots=%s", kind, df, basis.knots)
    return basis


def lag_basis(max_lag, df):
    """
    Basis on the lag grid 0..max_lag used to smooth effects over time since adoption.

    df=1 is the intercept alone; df=max_lag+1 is saturated and reproduces per-lag means.
    """
    grid = np.arange(max_lag + 1, dtype=float)
    if df < 1 or df > grid.size:
        raise InvalidConfig(f"lag basis df must lie in 1..{grid.size}, got {df}")
    if df == 1:
        return BasisSet("natural", 1, (), (0.0, float(max_lag)), grid)
    return _natural(grid, df)
