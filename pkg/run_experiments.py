"""
run_experiments.py

Command line entry point for canopy navigation trials.

Execution:
    python run_experiments.py run scenarios/single_c10.json --out data/out/single
    python run_experiments.py suite reference --controllers rice,position,hybrid --out data/out/reference
    python run_experiments.py sweep reference --wf 0.2:3.0:15 --out data/out/sweep --plot
    python run_experiments.py summarize data/out/reference/rice/trials.csv
    python run_experiments.py generate reference scenarios/

Scenario arguments accept a JSON file, a folder of JSON files, or the name of a
built-in suite (`reference`, `grid`, `pairs`, `dense`).

## Output format

Every run writes to `--out` (per controller for `suite`):
 - `trajectories/<index>_<scenario>.csv`: one row per low-level step (see `src/harness.py`)
 - `windows/<index>_<scenario>.csv`: controller diagnostics per high-level step
 - `trials.csv`: one row per trial with the trial metrics
 - `errors.csv`: only if trials failed
 - `summary.json`: medians and rates of the suite

Exit codes: 0 on success, 1 if any trial failed, 2 on invalid arguments or scenarios.
"""
import argparse
import glob
import logging
import os
import sys
from dataclasses import replace
from datetime import datetime
from time import time

import matplotlib
from tqdm import tqdm

from controllers import CONTROLLERS
from src import harness, suites
from src.logger import Logger
from src.scenario import ScenarioError, load_scenario, save_scenario

logger = Logger.get_logger(__file__)

BUILT_IN = {
    'reference': lambda args: suites.reference_suite(),
    'grid': lambda args: suites.single_branch_grid(),
    'pairs': lambda args: suites.two_branch_grid(),
    'dense': lambda args: suites.dense_random_suite(range(args.seed or 0, (args.seed or 0) + args.count)),
}


def current_time():
    return datetime.now().strftime("%H:%M:%S")


def load_scenarios(source, args):
    """Scenarios from a built-in suite name, a JSON file or a folder of JSON files."""
    if source in BUILT_IN:
        return BUILT_IN[source](args)
    if os.path.isdir(source):
        files = sorted(glob.glob(os.path.join(source, '*.json')))
        if not files:
            raise ScenarioError(source, "folder contains no .json scenario files")
        return [load_scenario(f) for f in files]
    if not os.path.exists(source):
        raise ScenarioError(source, "is neither a scenario file, a folder nor a built-in suite "
                                    f"({sorted(BUILT_IN)})")
    return [load_scenario(source)]


def apply_overrides(scenarios, args, source=None):
    """Applies the trial flags to every scenario; generated dense scenes keep their own seeds."""
    overrides = {}
    if getattr(args, 'seed', None) is not None and source != 'dense':
        overrides['seed'] = args.seed
    if getattr(args, 'stop_on_breakage', False):
        overrides['stop_on_breakage'] = True
    if getattr(args, 'mode', None):
        overrides['mode'] = args.mode
    return [replace(s, **overrides) for s in scenarios] if overrides else scenarios


def report(outcomes, out_path):
    """Exports the outcomes, logs the summary and returns the number of failed trials."""
    results = harness.successful(outcomes)
    summary = harness.summarize(results) if results else None
    if out_path:
        harness.export_results(outcomes, out_path, summary)
        tqdm.write(f"[{current_time()}] Results written to {out_path}")
    failed = len(outcomes) - len(results)
    if summary is None:
        logger.error(f"All {failed} trial(s) failed, nothing to summarize")
        return failed
    logger.info(f"{summary.trial_count} trials: reach rate {summary.reach_rate:.2f}, "
                f"no-break reach rate {summary.no_break_reach_rate:.2f}, "
                f"median disturbance {summary.median_disturbance * 1000:.1f}mm, "
                f"median target deviation {summary.median_target_deviation * 1000:.1f}mm")
    if failed:
        logger.error(f"{failed} trial(s) failed, see errors.csv")
    return failed


def command_run(args):
    scenarios = apply_overrides(load_scenarios(args.scenario, args), args, args.scenario)
    if args.controller:
        scenarios = [s.with_controller(args.controller) for s in scenarios]
    start_time = time()
    outcomes = harness.run_suite(scenarios, scheduler=args.scheduler, progress=len(scenarios) > 1)
    tqdm.write(f"[{current_time()}] {len(scenarios)} trial(s) completed in {time() - start_time:.2f} seconds.")
    failed = report(outcomes, args.out)
    if args.plot and args.out:
        from src import drawing
        for outcome in outcomes:
            if outcome.error is None:
                ax = drawing.plot_trajectory(outcome.result, scenarios[outcome.index].target)
                ax.figure.savefig(os.path.join(args.out, f"{outcome.index:03d}_{outcome.scenario_name}.png"))
                drawing.plt.close(ax.figure)
    return 1 if failed else 0


def command_suite(args):
    scenarios = apply_overrides(load_scenarios(args.scenarios, args), args, args.scenarios)
    kinds = [k.strip() for k in args.controllers.split(',') if k.strip()]
    unknown = [k for k in kinds if k not in CONTROLLERS]
    if unknown:
        raise ScenarioError('--controllers', f"unknown controller(s) {unknown}, expected {sorted(CONTROLLERS)}")

    failed = 0
    tables = {}
    with tqdm(total=len(kinds), desc="Controllers", bar_format='Step {n_fmt}/{total_fmt} [{desc}]:|{bar}',
              unit="step", leave=False) as progress:
        for kind in kinds:
            progress.set_description_str(f"{kind}: running {len(scenarios)} trials")
            start_time = time()
            outcomes = harness.run_suite([s.with_controller(kind) for s in scenarios], scheduler=args.scheduler,
                                         progress=True)
            tqdm.write(f"[{current_time()}] [x] {kind} completed in {time() - start_time:.2f} seconds.")
            failed += report(outcomes, os.path.join(args.out, kind) if args.out else None)
            tables[kind] = harness.trial_table(harness.successful(outcomes))
            progress.update(1)

    if args.plot and args.out:
        from src import drawing
        ax = drawing.plot_disturbance_cdf(tables)
        ax.figure.savefig(os.path.join(args.out, 'disturbance_cdf.png'))
    return 1 if failed else 0


def command_sweep(args):
    scenarios = apply_overrides(load_scenarios(args.scenarios, args), args, args.scenarios)
    values = list(harness.parse_wf_grid(args.wf))
    if args.include_zero and 0.0 not in values:
        values = [0.0] + values
    summaries = harness.run_sweep(scenarios, values, scheduler=args.scheduler, progress=True)
    table = harness.sweep_table(summaries)
    tqdm.write(table.to_string(index=False))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        harness.save_to_csv(table, os.path.join(args.out, 'sweep'))
        if args.plot:
            from src import drawing
            ax = drawing.plot_sweep(table)
            ax.figure.savefig(os.path.join(args.out, 'sweep.png'))
    failed = len(scenarios) * len(values) - sum(s.trial_count for s in summaries)
    if failed:
        logger.error(f"{failed} sweep trial(s) failed")
    return 1 if failed else 0


def command_summarize(args):
    table = harness.load_trial_table(args.trials)
    if table.empty:
        logger.error(f"{args.trials} holds no trials")
        return 1
    summary = harness.summarize_table(table, label=os.path.basename(os.path.dirname(os.path.abspath(args.trials))))
    for key, value in summary.to_dict().items():
        tqdm.write(f"{key}: {value}")
    return 0


def command_generate(args):
    scenarios = apply_overrides(load_scenarios(args.suite, args), args, args.suite)
    os.makedirs(args.out, exist_ok=True)
    for scenario in scenarios:
        save_scenario(scenario, os.path.join(args.out, f"{scenario.name}.json"))
    logger.info(f"Wrote {len(scenarios)} scenario(s) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description="Run tactile canopy navigation trials.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help="Log debug messages.")
    verbosity.add_argument('--quiet', action='store_true', help="Only log warnings and errors.")
    parser.add_argument('--seed', type=int, default=None,
                        help="Seed written into every scenario; first generator seed of the dense suite.")
    parser.add_argument('--count', type=int, default=5, help="Number of generated dense scenes.")
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_common(sub):
        sub.add_argument('--out', default=None, help="Output folder.")
        sub.add_argument('--scheduler', default='threads', choices=['threads', 'processes', 'synchronous'],
                         help="dask scheduler used for parallel trials.")
        sub.add_argument('--stop-on-breakage', action='store_true', help="End trials at the first breakage.")
        sub.add_argument('--mode', choices=['point_mass', 'arm'], default=None, help="Override the robot mode.")
        sub.add_argument('--plot', action='store_true', help="Save figures next to the results.")

    run = subparsers.add_parser('run', help="Run scenario(s) with their own controller.")
    run.add_argument('scenario')
    run.add_argument('--controller', choices=sorted(CONTROLLERS), default=None)
    add_common(run)
    run.set_defaults(func=command_run)

    suite = subparsers.add_parser('suite', help="Run scenarios under several controllers.")
    suite.add_argument('scenarios')
    suite.add_argument('--controllers', default='rice,position,hybrid')
    add_common(suite)
    suite.set_defaults(func=command_suite)

    sweep = subparsers.add_parser('sweep', help="Sweep the RICE force weight w_f.")
    sweep.add_argument('scenarios')
    sweep.add_argument('--wf', default='0.2:3.0:15', help="start:stop:count or a comma separated list.")
    sweep.add_argument('--include-zero', action='store_true', help="Also run w_f = 0.")
    add_common(sweep)
    sweep.set_defaults(func=command_sweep)

    summarize = subparsers.add_parser('summarize', help="Summarize a trials.csv file.")
    summarize.add_argument('trials')
    summarize.set_defaults(func=command_summarize)

    generate = subparsers.add_parser('generate', help="Write a built-in suite as scenario JSON files.")
    generate.add_argument('suite', choices=sorted(BUILT_IN))
    generate.add_argument('out')
    generate.set_defaults(func=command_generate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        Logger.set_level(logging.DEBUG)
    elif args.quiet:
        Logger.set_level(logging.WARNING)
    if getattr(args, 'plot', False):
        matplotlib.use('Agg')
    try:
        return args.func(args)
    except ScenarioError as e:
        logger.error(f"Invalid scenario: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
