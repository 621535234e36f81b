import dataclasses
import logging
import math
from typing import FrozenSet, Optional, Tuple

import numpy as np
import pandas as pd

import constants as const
from errors import (
    BadAdoptTime,
    BadTimeIndex,
    ConstantColumn,
    DataError,
    InvalidConfig,
    MissingCell,
    MissingValue,
    SelfLoop,
    UnknownUnit,
)

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True)
class PanelData:
    """
    Outcomes of n units observed on the time grid 1..T plus their adoption times.

    Attributes
    ----------
    unit_ids : tuple of str
        Unit labels in row order.
    outcomes : np.ndarray
        n x T outcome matrix. Column t-1 holds time t. Cells after ``last_time`` are NaN.
    adopt_time : np.ndarray
        Integer adoption time per unit. Never-treated units store T + 1, so
        ``t < adopt_time[i]`` is the untreated test for every unit.
    last_time : np.ndarray, optional
        Last observed time per unit (defaults to T). Only simulated, truncated panels
        have ragged tails.
    """

    unit_ids: Tuple[str, ...]
    outcomes: np.ndarray
    adopt_time: np.ndarray
    last_time: Optional[np.ndarray] = None

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        if outcomes.ndim != 2:
            raise DataError("outcomes must be a units x time matrix")
        n, T = outcomes.shape
        if n < 2 or T < 3:
            raise DataError(f"panel needs n >= 2 and T >= 3, got n={n}, T={T}")

        unit_ids = tuple(str(u) for u in self.unit_ids)
        if len(unit_ids) != n:
            raise DataError(f"{len(unit_ids)} unit ids for {n} outcome rows")
        if len(set(unit_ids)) != n:
            raise DataError("unit ids are not unique")

        adopt_time = np.asarray(self.adopt_time)
        if adopt_time.shape != (n,) or not np.all(adopt_time == np.round(adopt_time)):
            raise BadAdoptTime("adoption times must be one integer per unit")
        adopt_time = adopt_time.astype(int)
        bad = np.flatnonzero((adopt_time < 2) | (adopt_time > T + 1))
        if bad.size:
            i = bad[0]
            raise BadAdoptTime(f"unit {unit_ids[i]}: adoption time {adopt_time[i]} outside 2..{T}")

        if self.last_time is None:
            last_time = np.full(n, T, dtype=int)
        else:
            last_time = np.asarray(self.last_time).astype(int)
        if last_time.shape != (n,) or np.any(last_time > T) or np.any(last_time < 1):
            raise DataError("last_time must be one time in 1..T per unit")
        if np.any(adopt_time > last_time + 1):
            i = np.flatnonzero(adopt_time > last_time + 1)[0]
            raise DataError(f"unit {unit_ids[i]}: pre-treatment range extends past the last observation")

        observed = np.arange(1, T + 1)[None, :] <= last_time[:, None]
        gaps = np.argwhere(observed & ~np.isfinite(outcomes))
        if gaps.size:
            i, col = gaps[0]
            raise MissingCell(f"unit {unit_ids[i]} has no finite outcome at time {col + 1}")
        outcomes = np.where(observed, outcomes, np.nan)

        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "outcomes", _frozen(outcomes))
        object.__setattr__(self, "adopt_time", _frozen(adopt_time))
        object.__setattr__(self, "last_time", _frozen(last_time))

    @property
    def n(self):
        return self.outcomes.shape[0]

    @property
    def T(self):
        return self.outcomes.shape[1]

    @property
    def times(self):
        return np.arange(1, self.T + 1)

    @property
    def treated(self):
        return self.adopt_time <= self.T

    @property
    def t_min(self):
        """
        First adoption time over all units (T + 1 when nobody is treated).
        """
        return int(self.adopt_time.min())

    def untreated(self, t):
        """
        Boolean mask of units still untreated at time t.
        """
        return self.adopt_time > t

    def filled_outcomes(self):
        """
        Outcome matrix with unobserved cells set to zero, safe for masked products.
        """
        return np.nan_to_num(self.outcomes, nan=0.0)

    def unit_index(self, unit_id):
        try:
            return self.unit_ids.index(str(unit_id))
        except ValueError:
            raise UnknownUnit(f"unknown unit {unit_id}") from None


@dataclasses.dataclass(frozen=True)
class CovariateMatrix:
    """n x p matrix of unit covariates, rows in panel order."""

    values: np.ndarray
    names: Tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] < 1:
            raise DataError("covariates must be an n x p matrix with p >= 1")
        if values.shape[1] != len(self.names):
            raise DataError(f"{len(self.names)} names for {values.shape[1]} covariate columns")
        if not np.all(np.isfinite(values)):
            raise MissingValue("covariates contain missing values")
        constant = np.flatnonzero(np.ptp(values, axis=0) == 0)
        if constant.size:
            raise ConstantColumn(f"covariate {self.names[constant[0]]} has zero variance")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def p(self):
        return self.values.shape[1]


@dataclasses.dataclass(frozen=True)
class NeighborGraph:
    """Undirected neighbour graph stored as sorted unit-id pairs."""

    edges: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self):
        edges = set()
        for a, b in self.edges:
            a, b = str(a), str(b)
            if a == b:
                raise SelfLoop(f"unit {a} is listed as its own neighbour")
            edges.add((a, b) if a < b else (b, a))
        object.__setattr__(self, "edges", frozenset(edges))

    def adjacency(self, unit_ids):
        """
        Symmetric boolean adjacency matrix in the given unit order, zero diagonal.
        """
        index = {u: i for i, u in enumerate(unit_ids)}
        adjacency = np.zeros((len(unit_ids), len(unit_ids)), dtype=bool)
        for a, b in self.edges:
            if a not in index or b not in index:
                raise UnknownUnit(f"edge ({a}, {b}) names a unit outside the panel")
            adjacency[index[a], index[b]] = adjacency[index[b], index[a]] = True
        return adjacency


@dataclasses.dataclass(frozen=True)
class SparsityPattern:
    """
    Allowed nonzero entries of the VAR coefficient matrix A and the precision matrix.

    Attributes
    ----------
    a_mask : np.ndarray
        n x n boolean; a_mask[i, j] lets unit j's lag enter unit i's equation.
    omega_mask : np.ndarray
        n x n symmetric boolean with a true diagonal.
    adoption_gap : float
        Gap used to build a_mask, reported in run metadata.
    """

    a_mask: np.ndarray
    omega_mask: np.ndarray
    adoption_gap: float = const.ADOPTION_GAP

    def __post_init__(self):
        a_mask = np.asarray(self.a_mask, dtype=bool)
        omega_mask = np.asarray(self.omega_mask, dtype=bool)
        if a_mask.shape != omega_mask.shape or a_mask.shape[0] != a_mask.shape[1]:
            raise DataError("sparsity masks must be square and of equal shape")
        if not np.array_equal(omega_mask, omega_mask.T) or not np.all(np.diag(omega_mask)):
            raise DataError("omega_mask must be symmetric with a true diagonal")
        object.__setattr__(self, "a_mask", _frozen(a_mask))
        object.__setattr__(self, "omega_mask", _frozen(omega_mask))

    @property
    def n(self):
        return self.a_mask.shape[0]

    @property
    def a_rows(self):
        return np.nonzero(self.a_mask)[0]

    @property
    def a_cols(self):
        return np.nonzero(self.a_mask)[1]

    @property
    def q_max(self):
        """
        Largest number of free A entries in any row.
        """
        return int(self.a_mask.sum(axis=1).max()) if self.n else 0


def load_panel(outcome_file, treatment_file):
    """
    Read the outcome and treatment CSV files into a validated PanelData.

    Parameters
    ----------
    outcome_file : str
        CSV with header ``unit_id,time,outcome``, one row per unit-time.
    treatment_file : str
        CSV with header ``unit_id,adopt_time``; adopt_time is an integer or ``never``.

    Returns
    -------
    PanelData
        Units in order of first appearance in the outcome file.
    """
    outcomes = pd.read_csv(outcome_file, dtype={"unit_id": str}, float_precision="round_trip")
    _require_columns(outcomes, ("unit_id", "time", "outcome"), outcome_file)

    times = pd.to_numeric(outcomes["time"], errors="coerce")
    if times.isna().any() or np.any(times != np.round(times)) or np.any(times < 1):
        raise BadTimeIndex(f"{outcome_file}: time must be a positive integer")
    outcomes["time"] = times.astype(int)
    if outcomes.duplicated(["unit_id", "time"]).any():
        row = outcomes[outcomes.duplicated(["unit_id", "time"])].iloc[0]
        raise BadTimeIndex(f"unit {row.unit_id} observed twice at time {row.time}")

    T = int(outcomes["time"].max())
    present = np.sort(outcomes["time"].unique())
    if not np.array_equal(present, np.arange(1, T + 1)):
        raise BadTimeIndex(f"{outcome_file}: time index is not the contiguous grid 1..{T}")

    unit_ids = list(pd.unique(outcomes["unit_id"]))
    wide = outcomes.pivot(index="unit_id", columns="time", values="outcome")
    wide = wide.reindex(index=unit_ids, columns=range(1, T + 1))
    missing = np.argwhere(wide.isna().to_numpy())
    if missing.size:
        i, col = missing[0]
        raise MissingCell(f"unit {unit_ids[i]} has no outcome at time {col + 1}")

    treatment = pd.read_csv(treatment_file, dtype=str)
    _require_columns(treatment, ("unit_id", "adopt_time"), treatment_file)
    adopt = dict(zip(treatment["unit_id"].str.strip(), treatment["adopt_time"].str.strip()))
    for unit in adopt:
        if unit not in wide.index:
            raise UnknownUnit(f"treatment row for unit {unit} has no outcome rows")

    adopt_time = []
    for unit in unit_ids:
        if unit not in adopt:
            raise UnknownUnit(f"unit {unit} has no treatment row")
        adopt_time.append(_parse_adopt_time(unit, adopt[unit], T))

    panel = PanelData(tuple(unit_ids), wide.to_numpy(dtype=float), np.array(adopt_time))
    logger.info(
        "Loaded panel with %d units x %d times (%d never treated)",
        panel.n, panel.T, int((~panel.treated).sum()),
    )
    return panel


def _parse_adopt_time(unit, raw, T):
    if raw == const.NEVER_TOKEN:
        return T + 1
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise BadAdoptTime(f"unit {unit}: adoption time {raw!r} is not an integer") from None
    if value != math.floor(value) or value < 2 or value > T:
        raise BadAdoptTime(f"unit {unit}: adoption time {raw} outside 2..{T}")
    return int(value)


def _require_columns(frame, columns, path):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")


def write_panel(panel, outcome_file, treatment_file):
    """
    Write a panel back to the outcome and treatment CSV schemas.
    """
    rows = [
        (unit, t, panel.outcomes[i, t - 1])
        for i, unit in enumerate(panel.unit_ids)
        for t in range(1, panel.last_time[i] + 1)
    ]
    pd.DataFrame(rows, columns=["unit_id", "time", "outcome"]).to_csv(outcome_file, index=False)

    adopt = [
        const.NEVER_TOKEN if a > panel.T else str(a) for a in panel.adopt_time
    ]
    pd.DataFrame({"unit_id": panel.unit_ids, "adopt_time": adopt}).to_csv(
        treatment_file, index=False
    )


def load_covariates(file, panel):
    """
    Read the covariate CSV and reorder its rows to the panel's unit order.
    """
    frame = pd.read_csv(file, dtype={"unit_id": str}, float_precision="round_trip")
    _require_columns(frame, ("unit_id",), file)
    frame = frame.set_index("unit_id")
    if frame.shape[1] < 1:
        raise DataError(f"{file}: no covariate columns")

    for unit in frame.index:
        if unit not in panel.unit_ids:
            raise UnknownUnit(f"covariate row for unknown unit {unit}")
    for unit in panel.unit_ids:
        if unit not in frame.index:
            raise UnknownUnit(f"unit {unit} has no covariate row")

    frame = frame.loc[list(panel.unit_ids)]
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        i, j = np.argwhere(np.isnan(values))[0]
        raise MissingValue(f"covariate {frame.columns[j]} missing for unit {panel.unit_ids[i]}")
    return CovariateMatrix(values, tuple(str(c) for c in frame.columns))


def load_edges(file, panel):
    """
    Read the undirected edge list. Duplicates in either orientation are dropped.
    """
    frame = pd.read_csv(file, dtype=str)
    _require_columns(frame, ("unit_a", "unit_b"), file)
    edges = set()
    for a, b in zip(frame["unit_a"].str.strip(), frame["unit_b"].str.strip()):
        for unit in (a, b):
            if unit not in panel.unit_ids:
                raise UnknownUnit(f"edge ({a}, {b}) names unknown unit {unit}")
        if a == b:
            raise SelfLoop(f"unit {a} is listed as its own neighbour")
        edges.add((a, b))
    graph = NeighborGraph(frozenset(edges))
    logger.debug("Loaded %d undirected edges", len(graph.edges))
    return graph


def build_sparsity(panel, graph, adoption_gap=const.ADOPTION_GAP):
    """
    Derive the A and precision sparsity masks.

    Neighbours may enter each other's VAR equation only when their adoption times differ by
    at most ``adoption_gap``. The precision mask depends on the graph alone.
    """
    if adoption_gap is None or adoption_gap < 0:
        raise InvalidConfig(f"adoption_gap must be >= 0, got {adoption_gap}")

    adjacency = graph.adjacency(panel.unit_ids)
    eye = np.eye(panel.n, dtype=bool)
    adopt = panel.adopt_time.astype(float)
    close = np.abs(adopt[:, None] - adopt[None, :]) <= adoption_gap

    pattern = SparsityPattern(
        a_mask=eye | (adjacency & close),
        omega_mask=eye | adjacency,
        adoption_gap=adoption_gap,
    )
    logger.info(
        "Sparsity: %d free A entries, %d free precision entries (gap %s)",
        int(pattern.a_mask.sum()), int(pattern.omega_mask.sum()), adoption_gap,
    )
    return pattern
