import dataclasses
import logging
import time
from queue import Empty, Queue
from threading import Event, Thread
from typing import Dict

import numpy as np
import pandas as pd

import constants as const
from errors import CausalVarError

logger = logging.getLogger(__name__)

SCORE_KEYS = ["variant", "estimand", "key"]


@dataclasses.dataclass
class SimReport:
    """
    Bias, empirical SE and interval coverage per estimand, computed from stored
    (truth, estimate, interval) pairs.

    Attributes
    ----------
    design : str
    table : pd.DataFrame
        One row per (variant, estimand, key) with truth, bias, se, coverage and reps.
    reps : int
        Replications requested.
    invalid : int
        Replications that failed numerically and were left out.
    runtime : float
        Wall time in seconds.
    extra : dict of pd.DataFrame
        Design specific tables (SE ratios, the confounder grid).
    """

    design: str
    table: pd.DataFrame
    reps: int
    invalid: int
    runtime: float
    extra: Dict[str, pd.DataFrame] = dataclasses.field(default_factory=dict)

    def to_dict(self):
        return {
            "design": self.design,
            "reps": self.reps,
            "invalid": self.invalid,
            "runtime": self.runtime,
            "estimands": self.table.to_dict(orient="records"),
            **{name: frame.to_dict(orient="records") for name, frame in self.extra.items()},
        }


def score_trace(trace):
    """
    Aggregate trace rows into bias, empirical SE and coverage.

    The trace needs the columns variant, estimand, key, truth, estimate, lower and upper.
    """
    if trace.empty:
        return pd.DataFrame(columns=SCORE_KEYS + ["truth", "bias", "se", "coverage", "reps"])
    valid = trace.dropna(subset=["estimate"]).copy()
    valid["error"] = valid["estimate"] - valid["truth"]
    # point estimators without an interval leave coverage undefined
    covered = (valid["lower"] <= valid["truth"]) & (valid["truth"] <= valid["upper"])
    valid["covered"] = covered.astype(float).where(valid[["lower", "upper"]].notna().all(axis=1))
    grouped = valid.groupby(SCORE_KEYS, sort=False)
    table = pd.DataFrame({
        "truth": grouped["truth"].mean(),
        "bias": grouped["error"].mean(),
        "se": grouped["estimate"].std(ddof=1),
        "coverage": grouped["covered"].mean(),
        "reps": grouped["estimate"].count(),
    })
    return table.reset_index()


def se_ratio(table, numerator, denominator, estimand="att"):
    """
    Per-key ratio of empirical SEs between two variants of the same estimand.
    """
    rows = table[table["estimand"] == estimand]
    top = rows[rows["variant"] == numerator].set_index("key")["se"]
    bottom = rows[rows["variant"] == denominator].set_index("key")["se"]
    ratio = (top / bottom).dropna()
    return pd.DataFrame({"key": ratio.index, "se_ratio": ratio.to_numpy()})


def estimate_row(variant, estimand, key, truth, summary):
    return {
        "variant": variant,
        "estimand": estimand,
        "key": key,
        "truth": float(truth),
        "estimate": summary.point,
        "lower": summary.lower,
        "upper": summary.upper,
    }


def _worker(design, seeds, queue, results, failures, stop_event, progress):
    while not stop_event.is_set():
        try:
            rep = queue.get_nowait()
        except Empty:
            return
        try:
            rows = design.run_replication(rep, seeds[rep])
            for row in rows:
                row["rep"] = rep
            results[rep] = rows
        except (CausalVarError, np.linalg.LinAlgError) as err:
            logger.warning("Replication %d failed: %s", rep, err)
            failures[rep] = str(err)
        if progress is not None:
            progress(len(results) + len(failures))


def run_design(design, reps=const.SIM_REPS, seed=const.MC_SEED, threads=const.SIM_THREADS, progress=None):
    """
    Run ``reps`` independent replications of a design on a pool of worker threads.

    Replication r always receives child r of SeedSequence(seed), so the report does not
    depend on the number of threads or the execution order.

    Returns
    -------
    tuple
        (SimReport, trace DataFrame sorted by replication)
    """
    seeds = np.random.SeedSequence(seed).spawn(reps)
    queue = Queue()
    for rep in range(reps):
        queue.put(rep)

    results, failures = {}, {}
    stop_event = Event()
    workers = [
        Thread(target=_worker, args=(design, seeds, queue, results, failures, stop_event, progress))
        for _ in range(max(1, threads))
    ]

    t0 = time.time()
    try:
        for worker in workers:
            worker.start()
        for worker in workers:
            worker.join()
    except KeyboardInterrupt:
        stop_event.set()
        for worker in workers:
            worker.join()
        raise
    runtime = time.time() - t0

    rows = [row for rep in sorted(results) for row in results[rep]]
    trace = pd.DataFrame(rows)
    if not trace.empty:
        trace = trace[["rep"] + [c for c in trace.columns if c != "rep"]]
    report = design.summarize(trace, runtime, len(failures))
    report.reps = reps
    logger.info(
        "Design %s: %d replications in %.1fs (%d invalid)", design.name, reps, runtime, len(failures)
    )
    return report, trace
