"""Closed-loop trials, suites and their metrics.

One trial runs the two-rate loop: at every low-level step the taxels are sampled,
the canopy relaxes under the contact loads and the robot moves with the current
velocity command; after ``j`` low-level steps the frames are stacked into a window
and the controller issues the next command. The command of the first window is zero.

## Trajectory format

One row per low-level step:

  | Column Name      | Type   | Description                                            |
  |------------------|--------|--------------------------------------------------------|
  | t                | float  | Time at the end of the step (s)                        |
  | x, y, z          | float  | EE position after the step (m)                         |
  | vx, vy, vz       | float  | Velocity command applied during the step (m/s)         |
  | b{i}_tip_x/y/z   | float  | Tip position of branch i after relaxation (m)          |
  | brokenFlags      | str    | One character per branch, 'B' broken and '-' intact    |
  | stopReason       | str    | Empty except on the last row                           |
"""
import json
import os
from collections import namedtuple
from dataclasses import dataclass, field, replace

import dask
import numpy as np
import pandas as pd
from tqdm.dask import TqdmCallback

from controllers import RiceParams, make_controller
from src.arm import forward_kinematics, point_mass_step, rrmc_step
from src.canopy import build_canopy, empty_canopy, relax_deformation, total_disturbance
from src.logger import Logger
from src.scenario import ARM, validate_scenario
from src.tactile import aggregate_window, sample_tactile

logger = Logger.get_logger(__name__)

STOP_TARGET = 'target'
STOP_GEOMETRY = 'geometryViolation'
STOP_BREAKAGE = 'breakage'
STOP_STALL = 'stall'
STOP_TIMEOUT = 'timeout'
STOP_REASONS = (STOP_TARGET, STOP_GEOMETRY, STOP_BREAKAGE, STOP_STALL, STOP_TIMEOUT)

CONTACT_EPS = 0.01
TRAJECTORY_COLUMNS = ['t', 'x', 'y', 'z', 'vx', 'vy', 'vz']
TRIAL_TABLE_COLUMNS = ['trial', 'scenario', 'controller', 'seed', 'reached', 'stopReason', 'brokenBranchCount',
                       'totalDisturbance', 'finalTargetDeviation', 'contactOnsets', 'maxPathDeviation', 'duration']
SWEEP_COLUMNS = ['wF', 'trialCount', 'medianDisturbance', 'medianTargetDeviation', 'noBreakReachRate', 'reachRate']

TrialOutcome = namedtuple('TrialOutcome', ['index', 'scenario_name', 'result', 'error'])


def tip_columns(branch_count):
    return [f"b{i}_tip_{axis}" for i in range(branch_count) for axis in 'xyz']


def validate_trajectory_dataframe(func):
    def wrapper(*args, **kwargs):
        df = func(*args, **kwargs)
        if not isinstance(df, pd.DataFrame):
            raise TypeError("Output should be a pandas DataFrame")
        columns = list(df.columns)
        tips = columns[len(TRAJECTORY_COLUMNS):-2]
        if columns[:len(TRAJECTORY_COLUMNS)] != TRAJECTORY_COLUMNS or columns[-2:] != ['brokenFlags', 'stopReason']:
            raise ValueError(f"DataFrame should have columns {TRAJECTORY_COLUMNS} + tips + "
                             f"['brokenFlags', 'stopReason'] but has {columns}")
        if tips != tip_columns(len(tips) // 3):
            raise ValueError(f"DataFrame should have tip columns b{{i}}_tip_x/y/z but has {tips}")
        for column in TRAJECTORY_COLUMNS + tips:
            if not pd.api.types.is_numeric_dtype(df[column].dtype):
                raise ValueError(f"DataFrame should have a '{column}' column of numeric type "
                                 f"but is {df[column].dtype}")
        if not df['t'].is_monotonic_increasing:
            raise ValueError("DataFrame should have increasing 't'")
        return df
    return wrapper


@validate_trajectory_dataframe
def build_trajectory(rows, branch_count, stop_reason):
    """Trajectory DataFrame from the per-step rows ``[t, x, y, z, vx, vy, vz, *tips, flags]``."""
    columns = TRAJECTORY_COLUMNS + tip_columns(branch_count) + ['brokenFlags']
    df = pd.DataFrame(rows, columns=columns)
    for column in columns[:-1]:
        df[column] = df[column].astype(float)
    df['brokenFlags'] = df['brokenFlags'].astype(str)
    df['stopReason'] = ''
    if len(df):
        df.loc[df.index[-1], 'stopReason'] = stop_reason
    return df


def load_trajectory(file_path):
    """Reads a trajectory CSV written by :func:`export_results`."""
    df = pd.read_csv(file_path, keep_default_na=False, dtype={'brokenFlags': str, 'stopReason': str})
    return df


def _flag_string(flags):
    return ''.join('B' if broken else '-' for broken in flags)


def path_deviation(points, start, target):
    """Distance of every point from the straight start-target line (m)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    start = np.asarray(start, dtype=float)
    direction = np.asarray(target, dtype=float) - start
    length = np.linalg.norm(direction)
    rel = points - start
    if length < 1e-12:
        return np.linalg.norm(rel, axis=1)
    u = direction / length
    return np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)


@dataclass
class TrialResult:
    """Outcome and logs of one trial.

    ``per_branch_max_deviation`` is the running maximum tip displacement of every
    branch and ``total_disturbance`` their sum. ``windows`` holds one row of
    controller diagnostics per high-level step. ``orientation_drift`` is the largest Frobenius
    distance of the EE rotation from its start; zero in point-mass mode, where the
    orientation is never commanded.
    """
    scenario_name: str
    controller: str
    seed: int
    reached: bool
    stop_reason: str
    broken_branch_count: int
    per_branch_max_deviation: np.ndarray
    total_disturbance: float
    final_target_deviation: float
    trajectory: pd.DataFrame
    windows: pd.DataFrame
    rest_tips: np.ndarray
    contact_onsets: int = 0
    max_path_deviation: float = 0.0
    duration: float = 0.0
    break_events: list = field(default_factory=list)
    joint_log: np.ndarray = None
    saturated_steps: int = 0
    orientation_drift: float = 0.0

    def to_record(self):
        return {'scenario': self.scenario_name, 'controller': self.controller, 'seed': self.seed,
                'reached': bool(self.reached), 'stopReason': self.stop_reason,
                'brokenBranchCount': int(self.broken_branch_count),
                'totalDisturbance': float(self.total_disturbance),
                'finalTargetDeviation': float(self.final_target_deviation),
                'contactOnsets': int(self.contact_onsets), 'maxPathDeviation': float(self.max_path_deviation),
                'duration': float(self.duration)}


def _stop_reason(scenario, x, t, history, canopy, target):
    if np.linalg.norm(x - target) <= scenario.target_tolerance:
        return STOP_TARGET
    if any(frame.contains(x) for frame in scenario.mounting_frames):
        return STOP_GEOMETRY
    if scenario.stop_on_breakage and any(canopy.broken_flags()):
        return STOP_BREAKAGE
    if len(history) > scenario.stall_window:
        if np.linalg.norm(x - history[-1 - scenario.stall_window]) < scenario.stall_eps:
            return STOP_STALL
    if t >= scenario.max_duration - 1e-9:
        return STOP_TIMEOUT
    return None


def _window_record(k, t, window, command):
    max_force = float(np.linalg.norm(window.forces, axis=1).max()) if window.rows else 0.0
    record = {'k': k, 't': t, 'contact': max_force >= CONTACT_EPS, 'maxForce': max_force,
              'controllerContact': bool(command.contact_flag)}
    for name, vector in (('v', command.v), ('gradTarget', command.grad_target), ('gradForce', command.grad_force)):
        for axis, value in zip('xyz', np.asarray(vector, dtype=float)):
            record[f"{name}_{axis}"] = float(value)
    return record


def run_trial(scenario):
    """Runs one closed-loop trial.

    Stop conditions are checked after every high-level step, in the order target
    reached, geometry violation, breakage (only with ``stop_on_breakage``), stall and
    timeout.

    Args:
        scenario (Scenario): The trial configuration.

    Returns:
        TrialResult: Metrics and logs. Runs are deterministic for a given scenario.

    Raises:
        ScenarioError: If the scenario is inconsistent.
    """
    validate_scenario(scenario)
    canopy = build_canopy(scenario.canopy, scenario.seed) if scenario.canopy else empty_canopy(scenario.seed)
    controller = make_controller(scenario.controller, scenario.controller_params)
    controller.reset()
    logger.info(f"Starting {scenario.name} [{scenario.controller}], {scenario.mode} mode")

    target = np.asarray(scenario.target, dtype=float)
    j = scenario.frames_per_window
    dt_low, dt_high = scenario.dt_low, scenario.dt_high
    tool = scenario.tool_rotation()
    arm_mode = scenario.mode == ARM

    joint_log = None
    if arm_mode:
        q = np.asarray(scenario.initial_joint_state, dtype=float).copy()
        pose = forward_kinematics(scenario.arm, q)
        x, R = pose.position, pose.rotation @ tool
        joint_log = [q.copy()]
    else:
        x, R = np.asarray(scenario.initial_position, dtype=float).copy(), tool
    start = x.copy()
    start_rotation = R.copy()
    drift = 0.0
    v = np.zeros(3)
    rest_tips = canopy.tips()

    rows, windows, history, break_events = [], [], [x.copy()], []
    saturated_steps, contact_onsets, in_contact = 0, 0, False
    steps, t = 0, 0.0
    stop = None
    for k in range(int(np.ceil(scenario.max_duration / dt_high - 1e-9))):
        x_ref = x.copy()
        frames = []
        for m in range(j):
            frame, loads = sample_tactile(scenario.sensor, x, canopy, R, index=m + 1)
            frames.append(frame)
            broken_before = canopy.broken_flags()
            canopy = relax_deformation(canopy, loads, scenario.relax_iterations, scenario.relax_step_gain)
            if arm_mode:
                step = rrmc_step(scenario.arm, q, v, dt_low)
                q = step.q
                saturated_steps += int(step.saturated)
                pose = forward_kinematics(scenario.arm, q)
                x, R = pose.position, pose.rotation @ tool
                joint_log.append(q.copy())
                drift = max(drift, float(np.linalg.norm(R - start_rotation)))
            else:
                x = point_mass_step(x, v, dt_low)
            steps += 1
            t = steps * dt_low

            flags = canopy.broken_flags()
            for b, (before, after) in enumerate(zip(broken_before, flags)):
                if after and not before:
                    break_events.append((t, b))
                    logger.warning(f"{scenario.name}: branch {b} broke at t={t:.2f}s")
            rows.append([t, *x, *v, *canopy.tips().ravel(), _flag_string(flags)])

        window = aggregate_window(frames, x_ref, j)
        command = controller.step(x, target, window, dt_high, R)
        record = _window_record(k, t, window, command)
        contact_onsets += int(record['contact'] and not in_contact)
        in_contact = record['contact']
        windows.append(record)
        v = np.asarray(command.v, dtype=float)

        history.append(x.copy())
        stop = _stop_reason(scenario, x, t, history, canopy, target)
        if stop is not None:
            break
    if stop is None:
        stop = STOP_TIMEOUT

    deviations = np.array([branch.max_tip_deviation for branch in canopy.branches])
    result = TrialResult(
        scenario_name=scenario.name,
        controller=scenario.controller,
        seed=scenario.seed,
        reached=stop == STOP_TARGET,
        stop_reason=stop,
        broken_branch_count=int(sum(canopy.broken_flags())),
        per_branch_max_deviation=deviations,
        total_disturbance=total_disturbance(canopy),
        final_target_deviation=float(np.linalg.norm(x - target)),
        trajectory=build_trajectory(rows, canopy.branch_count, stop),
        windows=pd.DataFrame(windows),
        rest_tips=rest_tips,
        contact_onsets=contact_onsets,
        max_path_deviation=float(path_deviation(np.array(history), start, target).max()),
        duration=t,
        break_events=break_events,
        joint_log=None if joint_log is None else np.array(joint_log),
        saturated_steps=saturated_steps,
        orientation_drift=drift,
    )
    logger.info(f"{scenario.name} [{scenario.controller}]: {stop} after {t:.2f}s, "
                 f"disturbance {result.total_disturbance * 1000:.1f}mm, {result.broken_branch_count} broken")
    return result


@dataclass
class SuiteSummary:
    """Aggregate metrics of a set of trials.

    Medians are taken over all trials; ``no_break_reach_rate`` is the fraction of
    trials that reached the target without breaking any branch.
    """
    label: str
    trial_count: int
    reach_rate: float
    no_break_reach_rate: float
    median_disturbance: float
    median_target_deviation: float
    broken_branch_total: int
    parameter: float = None
    trials: list = field(default_factory=list)

    def to_dict(self):
        return {'label': self.label, 'trialCount': self.trial_count, 'reachRate': self.reach_rate,
                'noBreakReachRate': self.no_break_reach_rate, 'medianDisturbance': self.median_disturbance,
                'medianTargetDeviation': self.median_target_deviation,
                'brokenBranchTotal': self.broken_branch_total, 'parameter': self.parameter}


def trial_table(results):
    """One row per trial with the columns of ``TRIAL_TABLE_COLUMNS``."""
    records = [dict(trial=i, **result.to_record()) for i, result in enumerate(results)]
    return pd.DataFrame(records, columns=TRIAL_TABLE_COLUMNS)


def summarize_table(df, label='', parameter=None):
    """Summary of a trial table (e.g. read back from ``trials.csv``)."""
    missing = set(TRIAL_TABLE_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"Trial table is missing columns {sorted(missing)}")
    n = len(df)
    if n == 0:
        raise ValueError("Cannot summarize an empty set of trials")
    reached = df['reached'].astype(bool)
    broken = df['brokenBranchCount'].astype(int)
    return SuiteSummary(label=label,
                        trial_count=n,
                        reach_rate=float(reached.mean()),
                        no_break_reach_rate=float((reached & (broken == 0)).mean()),
                        median_disturbance=float(np.median(df['totalDisturbance'].astype(float))),
                        median_target_deviation=float(np.median(df['finalTargetDeviation'].astype(float))),
                        broken_branch_total=int(broken.sum()),
                        parameter=parameter)


def summarize(results, label='', parameter=None):
    """Aggregates trial results into a :class:`SuiteSummary`.

    Raises:
        ValueError: When ``results`` is empty.
    """
    summary = summarize_table(trial_table(results), label, parameter)
    return replace(summary, trials=list(results))


def _run_guarded(index, scenario):
    try:
        return TrialOutcome(index, scenario.name, run_trial(scenario), None)
    except Exception as e:
        logger.error(f"Trial {index} ({scenario.name}) failed: {type(e).__name__}: {e}")
        return TrialOutcome(index, scenario.name, None, f"{type(e).__name__}: {e}")


def run_suite(scenarios, scheduler='threads', progress=False):
    """Runs independent trials in parallel with dask.

    Failed trials are captured as outcomes with an ``error`` text and do not stop the
    suite. Outcomes come back in input order whatever the scheduler.

    Args:
        scenarios (list of Scenario): Trials to run.
        scheduler (str): dask scheduler ('threads', 'processes' or 'synchronous').
        progress (bool): Show a tqdm progress bar.

    Returns:
        list of TrialOutcome: ``(index, scenario_name, result, error)`` per scenario.
    """
    tasks = [dask.delayed(_run_guarded)(i, scenario) for i, scenario in enumerate(scenarios)]
    if not tasks:
        return []
    if progress:
        with TqdmCallback(desc='Trials', leave=False):
            outcomes = dask.compute(*tasks, scheduler=scheduler)
    else:
        outcomes = dask.compute(*tasks, scheduler=scheduler)
    return sorted(outcomes, key=lambda outcome: outcome.index)


def successful(outcomes):
    return [outcome.result for outcome in outcomes if outcome.error is None]


def parse_wf_grid(text):
    """Parses ``start:stop:count`` (inclusive linspace) or a comma separated list."""
    text = text.strip()
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 3:
            raise ValueError(f"w_f grid should be start:stop:count but is {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError(f"w_f grid count should be at least 1 but is {count}")
        return np.linspace(start, stop, count)
    return np.array([float(v) for v in text.split(',') if v.strip()])


def sweep_scenarios(scenarios, wf_values):
    """Copies of every scenario driven by RICE at each ``w_f``, value-major."""
    scenarios = [scenarios] if not isinstance(scenarios, (list, tuple)) else list(scenarios)
    sweep = []
    for w_f in wf_values:
        for scenario in scenarios:
            base = scenario.controller_params if isinstance(scenario.controller_params, RiceParams) else RiceParams()
            sweep.append(scenario.with_controller('rice', replace(base, w_f=float(w_f))))
    return sweep


def run_sweep(scenarios, wf_values, scheduler='threads', progress=False):
    """Runs RICE over a grid of force weights.

    Args:
        scenarios (Scenario or list of Scenario): Base scenario(s).
        wf_values (array-like): Force weights, non-negative.

    Returns:
        list of SuiteSummary: One per ``w_f``, with ``parameter`` set to it. Values whose trials all
        failed are left out.
    """
    wf_values = [float(w) for w in wf_values]
    if any(w < 0 for w in wf_values):
        raise ValueError(f"w_f values should be non-negative but are {wf_values}")
    per_value = len([scenarios] if not isinstance(scenarios, (list, tuple)) else scenarios)
    outcomes = run_suite(sweep_scenarios(scenarios, wf_values), scheduler, progress)
    summaries = []
    for i, w_f in enumerate(wf_values):
        chunk = successful(outcomes[i * per_value:(i + 1) * per_value])
        if not chunk:
            logger.error(f"Every trial failed for wF={w_f:g}, no summary for it")
            continue
        summaries.append(summarize(chunk, label=f"wF={w_f:g}", parameter=w_f))
    return summaries


def sweep_table(summaries):
    return pd.DataFrame([{'wF': s.parameter, 'trialCount': s.trial_count,
                          'medianDisturbance': s.median_disturbance,
                          'medianTargetDeviation': s.median_target_deviation,
                          'noBreakReachRate': s.no_break_reach_rate, 'reachRate': s.reach_rate}
                         for s in summaries], columns=SWEEP_COLUMNS)


def run_comparison(scenarios, kinds=('rice', 'position', 'hybrid'), scheduler='threads', progress=False):
    """Runs every scenario under each controller with default parameters.

    Returns:
        dict: controller name -> (list of TrialOutcome, SuiteSummary), the summary
        being ``None`` when every trial of that controller failed.
    """
    comparison = {}
    for kind in kinds:
        outcomes = run_suite([scenario.with_controller(kind) for scenario in scenarios], scheduler, progress)
        results = successful(outcomes)
        comparison[kind] = (outcomes, summarize(results, label=kind) if results else None)
    return comparison


def save_to_csv(df, file_path, compressed=False):
    df.to_csv(file_path + ('.csv.gz' if compressed else '.csv'), index=False,
              compression='gzip' if compressed else None)


def export_results(outcomes, out_path, summary=None, compressed=False):
    """Writes trajectories, window diagnostics, the trial table, errors and the summary.

    Layout of ``out_path``::

        trajectories/<index>_<scenario>.csv
        windows/<index>_<scenario>.csv
        trials.csv
        errors.csv          (only when trials failed)
        summary.json        (only when a trial succeeded)
    """
    if not os.path.isdir(out_path):
        logger.warning(f"Creating output folder {out_path}")
    os.makedirs(os.path.join(out_path, 'trajectories'), exist_ok=True)
    os.makedirs(os.path.join(out_path, 'windows'), exist_ok=True)
    results = []
    for outcome in outcomes:
        if outcome.error is not None:
            continue
        stem = f"{outcome.index:03d}_{outcome.scenario_name}"
        save_to_csv(outcome.result.trajectory, os.path.join(out_path, 'trajectories', stem), compressed)
        save_to_csv(outcome.result.windows, os.path.join(out_path, 'windows', stem), compressed)
        results.append(outcome)

    table = trial_table([outcome.result for outcome in results])
    table['trial'] = [outcome.index for outcome in results]
    save_to_csv(table, os.path.join(out_path, 'trials'), compressed)

    errors = [{'trial': o.index, 'scenario': o.scenario_name, 'error': o.error} for o in outcomes
              if o.error is not None]
    if errors:
        save_to_csv(pd.DataFrame(errors), os.path.join(out_path, 'errors'), compressed)

    if summary is None and results:
        summary = summarize([o.result for o in results])
    if summary is None:
        logger.error(f"No successful trials in {out_path}, summary.json not written")
        return table
    with open(os.path.join(out_path, 'summary.json'), 'w', encoding='utf-8') as f:
        json.dump(dict(summary.to_dict(), erroredTrials=len(errors)), f, indent=2)
    return table


def load_trial_table(file_path):
    return pd.read_csv(file_path, keep_default_na=False, dtype={'scenario': str, 'controller': str,
                                                                'stopReason': str})


def load_summary(file_path):
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)
