import argparse
import cProfile
import logging
import os
import pstats
import sys

import constants as const
from DataLogging import (
    artifact_path,
    ensure_dir,
    estimates_document,
    read_counterfactuals,
    read_draws,
    read_json,
    write_counterfactuals,
    write_draws,
    write_json,
    write_meta,
    write_table,
)
from design_manager import DesignManager
from Diagnostics import run_checks
from errors import CausalVarError, DataError, InvalidConfig
from Estimands import individual_effects
from Panel import NeighborGraph, load_covariates, load_edges, load_panel
from Pipeline import effect_tables, fit_model
from RunConfig import apply_overrides, load_config, schema_text, validate

logger = logging.getLogger("main")


def progress_counter(label):
    def report(done, total=None):
        suffix = f"/{total}" if total is not None else ""
        sys.stdout.write(f"\r{label}: {done}{suffix}")
        sys.stdout.flush()

    return report


def cmd_fit(config, args):
    validate(config)
    panel = load_panel(config.outcomes, config.treatment)
    graph = load_edges(config.edges, panel) if config.edges else NeighborGraph(frozenset())

    fit = fit_model(panel, graph, config.fit_settings(), progress=progress_counter("Gibbs sweep"))
    sys.stdout.write("\n")

    directory = ensure_dir(config.output_dir)
    write_json(artifact_path(directory, const.P_ESTIMATES_FILE), estimates_document(fit))
    write_draws(artifact_path(directory, const.P_DRAWS_FILE), fit.draws, panel.unit_ids)
    write_counterfactuals(artifact_path(directory, const.P_COUNTERFACTUAL_FILE), fit.counterfactual, panel.unit_ids)
    write_meta(
        directory,
        "fit",
        config,
        [const.P_ESTIMATES_FILE, const.P_DRAWS_FILE, const.P_COUNTERFACTUAL_FILE],
        timings=fit.timings,
    )
    logger.info("Fit artifacts written to %s", directory)
    return 0


def cmd_effects(config, args):
    validate(config)
    fit_dir = args.draws or config.output_dir
    estimates = read_json(artifact_path(fit_dir, const.P_ESTIMATES_FILE, must_exist=True))

    panel = load_panel(config.outcomes, config.treatment)
    if list(panel.unit_ids) != estimates["unit_ids"]:
        raise DataError(f"units in {config.outcomes} differ from the fit in {fit_dir}")
    covs = load_covariates(config.covariates, panel) if config.covariates else None
    cf = read_counterfactuals(artifact_path(fit_dir, const.P_COUNTERFACTUAL_FILE, must_exist=True), panel.unit_ids)

    settings = config.effect_settings()
    effects = individual_effects(cf, panel, settings.max_lag)
    tables = effect_tables(effects, covs, settings)

    directory = ensure_dir(args.out or os.path.join(fit_dir, "effects"))
    written = []
    att = tables["att"]
    for name, frame in (
        (const.P_ATT_FILE, att),
        (const.P_FIG_ATT_FILE, att[["lag", "point", "lower", "upper", "smooth_point", "smooth_lower", "smooth_upper"]]),
    ):
        write_table(artifact_path(directory, name), frame)
        written.append(name)
    if "hetero" in tables:
        for name, frame in (
            (const.P_HETERO_FILE, tables["hetero"]),
            (const.P_FIG_HETERO_FILE, tables["hetero"]),
            (const.P_CLUSTERS_FILE, tables["clusters"]),
            (const.P_FIG_CLUSTER_FILE, tables["clusters"][["cluster", "n_units", "effect", "lower", "upper"]]),
        ):
            write_table(artifact_path(directory, name), frame)
            written.append(name)
    write_meta(directory, "effects", config, written, extra={"fit_dir": os.path.abspath(fit_dir)})

    for row in att.itertuples():
        logger.info("lag %d: %.3f [%.3f, %.3f]", row.lag, row.point, row.lower, row.upper)
    return 0


def cmd_check(config, args):
    fit_dir = args.draws or config.output_dir
    estimates = read_json(artifact_path(fit_dir, const.P_ESTIMATES_FILE, must_exist=True))
    unit_ids = estimates["unit_ids"]
    draws = read_draws(
        artifact_path(fit_dir, const.P_DRAWS_FILE, must_exist=True),
        unit_ids,
        len(estimates["als"]["beta"]),
        estimates["mcmc"],
    )
    report = run_checks(estimates, draws)
    directory = ensure_dir(args.out or fit_dir)
    write_json(artifact_path(directory, const.P_CHECK_FILE), report)

    for name in ("als", "kkt", "mask"):
        sys.stdout.write(f"{name:5s} {'ok' if report[name]['passed'] else 'FAILED'}\n")
    mcmc = report["mcmc"]
    sys.stdout.write(
        f"mcmc  min ESS {mcmc['min_ess']:.1f}, max R-hat {mcmc['max_rhat']:.3f} "
        f"({len(mcmc['ess_below_limit'])} low ESS, {len(mcmc['rhat_above_limit'])} high R-hat)\n"
    )
    for violation in report["mask"]["violations"]:
        sys.stdout.write(f"      off-mask A[{violation['unit_i']}][{violation['unit_j']}]\n")
    return 0 if report["passed"] else 4


def cmd_simulate(config, args):
    validate(config, require_data=False)
    manager = DesignManager(config)
    report, trace = manager.run(progress=progress_counter("Replication"))
    sys.stdout.write("\n")

    directory = ensure_dir(config.output_dir)
    write_json(artifact_path(directory, const.P_REPORT_FILE), report.to_dict())
    write_table(artifact_path(directory, const.P_TRACE_FILE), trace)
    write_meta(
        directory,
        "simulate",
        config,
        [const.P_REPORT_FILE, const.P_TRACE_FILE],
        timings={"simulate": report.runtime},
    )
    sys.stdout.write(report.table.to_string(index=False) + "\n")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "effects": cmd_effects,
    "check": cmd_check,
    "simulate": cmd_simulate,
}


def build_parser():
    parser = argparse.ArgumentParser(description="Causal effects under staggered adoption from a sparse local-mean VAR.")
    parser.add_argument("--config", default=None, help="JSON run configuration")
    parser.add_argument("--threads", type=int, default=None, help="worker pool size")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--print-schema", action="store_true", help="print the configuration schema and exit")
    commands = parser.add_subparsers(dest="command")

    fit = commands.add_parser("fit", help="estimate the model and draw counterfactuals")
    effects = commands.add_parser("effects", help="summarize treatment effects of a fit")
    check = commands.add_parser("check", help="audit a fit")
    simulate = commands.add_parser("simulate", help="run a simulation study")

    for sub in (fit, effects, check, simulate):
        sub.add_argument("--out", default=None, help="output directory")
    for sub in (fit, effects, simulate):
        sub.add_argument("--seed", type=int, default=None)
    for sub in (fit, simulate):
        sub.add_argument("--iters", type=int, default=None)
        sub.add_argument("--burnin", type=int, default=None)
    for sub in (effects, check):
        sub.add_argument("--draws", default=None, help="directory holding the fit artifacts")
    effects.add_argument("--max-lag", type=int, default=None)
    simulate.add_argument("--design", choices=const.SIM_DESIGNS, default=None)
    simulate.add_argument("--reps", type=int, default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.print_schema:
        sys.stdout.write(schema_text() + "\n")
        return 0
    if args.command is None:
        parser.print_help()
        return InvalidConfig.exit_code

    try:
        config = load_config(args.config)
        flags = {"seed": getattr(args, "seed", None), "threads": args.threads}
        if args.command == "simulate":
            flags.update(sim_iters=args.iters, sim_burnin=args.burnin, design=args.design, reps=args.reps, output_dir=args.out)
        elif args.command == "fit":
            flags.update(iters=args.iters, burnin=args.burnin, output_dir=args.out)
        elif args.command == "effects":
            flags.update(max_lag=args.max_lag)
        apply_overrides(config, **flags)
        return COMMANDS[args.command](config, args)
    except CausalVarError as err:
        logger.error("%s.%s: %s", args.command, type(err).__name__, err)
        return err.exit_code


def profiled_main():
    if not os.path.exists(const.P_PROFILING_PATH):
        os.makedirs(const.P_PROFILING_PATH)

    profiler = cProfile.Profile()
    code = profiler.runcall(main)
    profiler.dump_stats(f"{const.P_PROFILING_PATH}perf_stats")

    with open(f"{const.P_PROFILING_PATH}profiling_results", "w") as f:
        p = pstats.Stats(f"{const.P_PROFILING_PATH}perf_stats", stream=f)
        p.sort_stats("cumulative").print_stats()
    return code


if __name__ == "__main__":
    sys.exit(profiled_main() if const.PROFILING else main())
