import glob
import json
import os
import sys

import pandas as pd

from src.harness import TRAJECTORY_COLUMNS, TRIAL_TABLE_COLUMNS, STOP_REASONS, load_trajectory, tip_columns
from src.logger import Logger

logger = Logger.get_logger(__name__)

SUMMARY_KEYS = ['label', 'trialCount', 'reachRate', 'noBreakReachRate', 'medianDisturbance',
                'medianTargetDeviation', 'brokenBranchTotal', 'parameter', 'erroredTrials']


def validate_trajectory(file_path):
    """Checks the columns, time order and stop reason of one trajectory CSV."""
    name = os.path.basename(file_path)
    if not os.path.exists(file_path):
        logger.error(f"[!] ERROR: File not found: {name}")
        return False
    df = load_trajectory(file_path)
    if df.empty:
        logger.error(f"[!] ERROR: DataFrame is empty: {name}")
        return False
    branch_count = (len(df.columns) - len(TRAJECTORY_COLUMNS) - 2) // 3
    expected = TRAJECTORY_COLUMNS + tip_columns(branch_count) + ['brokenFlags', 'stopReason']
    if list(df.columns) != expected:
        logger.error(f"[!] ERROR: incorrect columns in {name}. Expected: {expected}, Found: {list(df.columns)}")
        return False
    if not df['t'].is_monotonic_increasing:
        logger.error(f"[!] ERROR: time is not increasing in {name}")
        return False
    if df['stopReason'].iloc[-1] not in STOP_REASONS or (df['stopReason'].iloc[:-1] != '').any():
        logger.error(f"[!] ERROR: {name} should carry a stop reason on its last row only")
        return False
    logger.info(f"[x] PASSED {name}")
    return True


def validate_trial_table(file_path):
    name = os.path.basename(file_path)
    if not os.path.exists(file_path):
        logger.error(f"[!] ERROR: File not found: {name}")
        return False
    df = pd.read_csv(file_path)
    if list(df.columns) != TRIAL_TABLE_COLUMNS:
        logger.error(f"[!] ERROR: incorrect columns in {name}. Expected: {TRIAL_TABLE_COLUMNS}, "
                     f"Found: {list(df.columns)}")
        return False
    logger.info(f"[x] PASSED {name}")
    return True


def validate_summary(file_path):
    name = os.path.basename(file_path)
    if not os.path.exists(file_path):
        logger.error(f"[!] ERROR: File not found: {name}")
        return False
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            summary = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"[!] ERROR: {name} is not valid JSON: {e}")
        return False
    missing = [key for key in SUMMARY_KEYS if key not in summary]
    if missing:
        logger.error(f"[!] ERROR: {name} is missing keys {missing}")
        return False
    logger.info(f"[x] PASSED {name}")
    return True


def validate_output(output_path):
    """Validates every file of a results folder written by `export_results`."""
    passed = validate_trial_table(os.path.join(output_path, 'trials.csv'))
    passed &= validate_summary(os.path.join(output_path, 'summary.json'))
    for file_path in sorted(glob.glob(os.path.join(output_path, 'trajectories', '*.csv'))):
        passed &= validate_trajectory(file_path)
    return bool(passed)


def main(paths):
    folders = []
    for path in paths:
        # a suite run holds one results folder per controller
        if os.path.exists(os.path.join(path, 'trials.csv')):
            folders.append(path)
        else:
            folders += sorted(os.path.dirname(p) for p in glob.glob(os.path.join(path, '*', 'trials.csv')))
    if not folders:
        logger.error(f"No results folders found in {paths}")
        return 1
    ok = True
    for folder in folders:
        logger.debug(f"Validating results folder: {folder}")
        ok &= validate_output(folder)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:] or [os.path.join(os.getcwd(), 'data/out')]))
