import json

import numpy as np
import pytest

from controllers import HybridParams, RiceParams
from src.arm import REFERENCE_HOME, reference_arm_model
from src.canopy import BranchSpec, LeafSpec
from src.scenario import (ARM, MountingFrame, Scenario, ScenarioError, load_scenario, loads_scenario, save_scenario,
                          scenario_from_dict, scenario_to_dict, validate_scenario)


@pytest.fixture
def rich_scenario():
    branches = [BranchSpec(dimension=0.01, length=0.2, particle_count=5, attachment_position=(0.06, 0.005, 0.0),
                           leaf_specs=[LeafSpec(attach_particle_index=3)]),
                BranchSpec(cross_section='square', dimension=0.005, length=0.2, particle_count=5,
                           attachment_position=(0.13, -0.004, 0.0), orientation_deg=30.0, internal_joint_stiffness=2.0)]
    return Scenario(name='rich', seed=4, canopy=branches, mode=ARM, arm=reference_arm_model(),
                    initial_joint_state=REFERENCE_HOME.copy(), target=(0.2, 0.1, 0.3), controller='hybrid',
                    controller_params=HybridParams(desired_force=0.5), stop_on_breakage=True,
                    mounting_frames=[MountingFrame((0.0, -0.1, -0.1), (0.01, 0.1, 0.0))], tags=('blocking',))


def minimal(**kwargs):
    data = {'schemaVersion': 1, 'name': 'minimal', 'initialPosition': [0.0, 0.0, 0.1], 'target': [0.2, 0.0, 0.1],
            'canopy': [{'dimension': 0.01, 'length': 0.2, 'particleCount': 5}]}
    data.update(kwargs)
    return data


def test_defaults():
    scenario = scenario_from_dict(minimal())
    assert scenario.controller == 'rice'
    assert scenario.controller_params == RiceParams()
    assert scenario.frames_per_window == 2
    assert scenario.dt_low == pytest.approx(0.01)
    assert scenario.dt_high == pytest.approx(0.02)
    assert scenario.canopy[0].cross_section == 'circular'
    assert np.allclose(scenario.tool_rotation(), np.eye(3))


def test_dict_round_trip(rich_scenario):
    data = scenario_to_dict(rich_scenario)
    assert scenario_to_dict(scenario_from_dict(data)) == data


def test_file_round_trip(rich_scenario, tmp_path):
    path = tmp_path / 'rich.json'
    save_scenario(rich_scenario, path)
    loaded = load_scenario(path)
    assert scenario_to_dict(loaded) == scenario_to_dict(rich_scenario)
    assert loaded.canopy[0].leaf_specs[0].attach_particle_index == 3
    assert loaded.mounting_frames[0].contains([0.005, 0.0, -0.05])


def test_controller_params_are_parsed():
    scenario = scenario_from_dict(minimal(controller={'type': 'rice', 'params': {'wF': 0.5, 'alpha': 0.02}}))
    assert scenario.controller_params == RiceParams(w_f=0.5, alpha=0.02)


def test_reference_arm_shorthand():
    scenario = scenario_from_dict(minimal(mode='arm', arm='reference', initialJointState='reference'))
    assert scenario.arm.dof == 6
    assert np.array_equal(scenario.initial_joint_state, REFERENCE_HOME)


def test_unknown_schema_version():
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(minimal(schemaVersion=2))
    assert e.value.field == 'schemaVersion'


def test_malformed_field_is_named():
    data = minimal()
    data['canopy'][0]['dimension'] = -0.01
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(data)
    assert e.value.field == 'canopy[0].dimension'

    data['canopy'][0]['dimension'] = 'thick'
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(data)
    assert e.value.field == 'canopy[0].dimension'


def test_missing_leaf_index_is_named():
    data = minimal()
    data['canopy'][0]['leafSpecs'] = [{'petioleStiffness': 0.02}]
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(data)
    assert e.value.field == 'canopy[0].leafSpecs[0]'


def test_unknown_key():
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(minimal(speed=3))
    assert e.value.field == 'speed'
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(minimal(controller={'type': 'rice', 'params': {'gain': 1.0}}))
    assert e.value.field == 'controller.params.gain'


def test_unknown_controller():
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(minimal(controller={'type': 'impedance'}))
    assert e.value.field == 'controller.type'


def test_json_syntax_error_reports_line():
    text = '{\n  "schemaVersion": 1,\n  "name": ,\n  "seed": 0\n}'
    with pytest.raises(ScenarioError) as e:
        loads_scenario(text)
    assert e.value.line == 3
    assert "(line 3)" in str(e.value)


def test_rates_must_divide():
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(minimal(highLevelRate=30, lowLevelRate=100))
    assert e.value.field == 'lowLevelRate'


def test_arm_mode_needs_an_arm():
    with pytest.raises(ScenarioError) as e:
        validate_scenario(Scenario(mode=ARM))
    assert e.value.field == 'arm'


def test_with_controller_resets_params(rich_scenario):
    rice = rich_scenario.with_controller('rice')
    assert rice.controller_params == RiceParams()
    assert rich_scenario.controller == 'hybrid'
    with pytest.raises(ValueError):
        rich_scenario.with_controller('impedance')


def test_saved_file_uses_camel_case(rich_scenario, tmp_path):
    path = tmp_path / 'rich.json'
    save_scenario(rich_scenario, path)
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    assert data['schemaVersion'] == 1
    assert 'stopOnBreakage' in data and 'stop_on_breakage' not in data
    assert data['canopy'][1]['crossSection'] == 'square'


if __name__ == '__main__':
    pytest.main(["-v", __file__])
