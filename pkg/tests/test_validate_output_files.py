import os

import numpy as np
import pandas as pd
import pytest

import validate_output_files
from src import harness
from src.harness import TrialOutcome, TrialResult, build_trajectory


def fake_outcome(index, name):
    rows = [[0.01, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.06, 0.005, 0.2, '-'],
            [0.02, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.06, 0.005, 0.2, '-']]
    result = TrialResult(scenario_name=name, controller='rice', seed=0, reached=False, stop_reason='timeout',
                         broken_branch_count=0, per_branch_max_deviation=np.zeros(1), total_disturbance=0.0,
                         final_target_deviation=0.2, trajectory=build_trajectory(rows, 1, 'timeout'),
                         windows=pd.DataFrame([{'k': 0}]), rest_tips=np.array([[0.06, 0.005, 0.2]]))
    return TrialOutcome(index, name, result, None)


@pytest.fixture
def results_folder(tmp_path):
    folder = tmp_path / 'rice'
    harness.export_results([fake_outcome(0, 'a'), fake_outcome(1, 'b')], str(folder))
    return folder


def test_exported_folder_is_valid(results_folder):
    assert validate_output_files.validate_output(str(results_folder))
    assert validate_output_files.main([str(results_folder)]) == 0


def test_suite_folder_is_searched(results_folder):
    assert validate_output_files.main([str(results_folder.parent)]) == 0


def test_missing_results_fail(tmp_path):
    assert validate_output_files.main([str(tmp_path)]) == 1


def test_wrong_trial_columns_fail(results_folder):
    pd.DataFrame({'trial': [0]}).to_csv(os.path.join(results_folder, 'trials.csv'), index=False)
    assert not validate_output_files.validate_trial_table(os.path.join(results_folder, 'trials.csv'))


def test_stop_reason_must_be_on_last_row_only(results_folder):
    path = os.path.join(results_folder, 'trajectories', '000_a.csv')
    df = harness.load_trajectory(path)
    df.loc[0, 'stopReason'] = 'timeout'
    df.to_csv(path, index=False)
    assert not validate_output_files.validate_trajectory(path)


def test_invalid_summary_fails(results_folder):
    path = os.path.join(results_folder, 'summary.json')
    with open(path, 'w', encoding='utf-8') as f:
        f.write('{"label": "rice"}')
    assert not validate_output_files.validate_summary(path)


if __name__ == '__main__':
    pytest.main(["-v", __file__])
