import numpy as np
import pytest

from src import harness, suites
from src.suites import (BLOCKING, STIFF, dense_random_scenario, path_branch, reference_suite, repeatability, repeated,
                        single_branch_grid, two_branch_grid)


@pytest.fixture(scope='module')
def comparison():
    return harness.run_comparison(reference_suite())


def outcomes_by_name(comparison, kind):
    outcomes, _ = comparison[kind]
    assert all(outcome.error is None for outcome in outcomes)
    return {outcome.scenario_name: outcome.result for outcome in outcomes}


def test_reference_suite_layout():
    scenarios = reference_suite()
    assert len(scenarios) == 10
    assert len({s.name for s in scenarios}) == 10
    assert len(suites.blocking(scenarios)) == 8
    assert len(suites.stiff(scenarios)) == 6
    assert all(s.target == (0.2, 0.0, 0.1) for s in scenarios)


def test_path_branch_crosses_the_path_at_the_offset():
    spec = path_branch(0.06, 0.005, orientation_deg=30.0)
    # the branch axis passes through (0.06, 0.005) at path height
    y_at_height = spec.attachment_position[1] - suites.PATH_HEIGHT * np.tan(np.deg2rad(30.0))
    assert y_at_height == pytest.approx(0.005)
    with pytest.raises(ValueError, match="Unknown section"):
        path_branch(0.06, 0.0, 'circular_7mm')


def test_rice_reaches_every_target_without_breaking(comparison):
    _, summary = comparison['rice']
    assert summary.trial_count == 10
    assert summary.no_break_reach_rate == 1.0


def test_position_reaches_but_breaks_stiff_branches(comparison):
    results = outcomes_by_name(comparison, 'position')
    assert all(result.reached for result in results.values())
    for scenario in suites.stiff(reference_suite()):
        assert results[scenario.name].broken_branch_count >= 1


def test_hybrid_stalls_on_blocking_scenes(comparison):
    results = outcomes_by_name(comparison, 'hybrid')
    blocked = suites.blocking(reference_suite())
    stalled = [s.name for s in blocked if not results[s.name].reached]
    assert len(stalled) >= len(blocked) / 2


def test_rice_disturbs_less_than_position(comparison):
    _, rice = comparison['rice']
    _, position = comparison['position']
    assert rice.median_disturbance < position.median_disturbance
    assert rice.broken_branch_total < position.broken_branch_total


def test_sweep_high_force_weight_disturbs_less():
    scenario = reference_suite()[0]
    summaries = harness.run_sweep([scenario], [0.2, 2.0, 3.0])
    assert [s.parameter for s in summaries] == [0.2, 2.0, 3.0]
    best = min(s.median_disturbance for s in summaries[1:])
    assert best < summaries[0].median_disturbance
    table = harness.sweep_table(summaries)
    assert list(table['wF']) == [0.2, 2.0, 3.0]


def test_zero_force_weight_matches_position_control():
    scenario = reference_suite()[0]
    (outcome,) = harness.run_suite(harness.sweep_scenarios([scenario], [0.0]), scheduler='synchronous')
    position = harness.run_trial(scenario.with_controller('position'))
    rice = outcome.result
    assert len(rice.trajectory) == len(position.trajectory)
    columns = ['x', 'y', 'z', 'vx', 'vy', 'vz']
    assert np.allclose(rice.trajectory[columns].to_numpy(), position.trajectory[columns].to_numpy(), atol=1e-9)


def test_repeated_runs_are_identical():
    base = [reference_suite()[0], reference_suite()[4]]
    scenarios = [copy for scenario in base for copy in repeated(scenario, 3)]
    assert [s.name for s in scenarios[:3]] == ['single_c10_r0', 'single_c10_r1', 'single_c10_r2']
    results = harness.successful(harness.run_suite(scenarios))
    assert len(results) == 6
    for i in range(0, 6, 3):
        spread = repeatability(results[i:i + 3])
        assert (spread == 0).all()
    assert all(r.reached and r.broken_branch_count == 0 for r in results)



def test_rice_repeats_every_scene_without_breaking():
    scenes = [reference_suite()[i] for i in (0, 1, 4, 5, 6)]
    scenarios = [copy for scenario in scenes for copy in repeated(scenario, 25)]
    results = harness.successful(harness.run_suite(scenarios))
    assert len(results) == 125
    assert harness.summarize(results).no_break_reach_rate == 1.0
    for i in range(0, 125, 25):
        assert (repeatability(results[i:i + 25]) == 0).all()


def test_repeated_rejects_zero():
    with pytest.raises(ValueError):
        repeated(reference_suite()[0], 0)


def test_dense_random_scenes():
    scenes = [dense_random_scenario(seed) for seed in range(5)]
    for scene in scenes:
        assert 8 <= len(scene.canopy) <= 15
        assert scene.target == (0.35, 0.0, 0.1)
    assert any(spec.leaf_specs for scene in scenes for spec in scene.canopy)
    again = dense_random_scenario(3)
    assert [spec.attachment_position for spec in again.canopy] == \
           [spec.attachment_position for spec in scenes[3].canopy]


def test_grid_sizes():
    grid = single_branch_grid()
    assert len(grid) == 4 * 5 * 2
    assert len({s.name for s in grid}) == len(grid)
    assert all(BLOCKING in s.tags and STIFF not in s.tags for s in grid)
    assert len(two_branch_grid()) == 2 * 2 * 2


if __name__ == '__main__':
    pytest.main(["-v", __file__])
