"""Scenario files.

A scenario describes one trial: the canopy, the robot (point mass or arm), the
target, the controller and the run settings. Scenarios are stored as JSON with
camelCase keys and a ``schemaVersion`` field::

    {
      "schemaVersion": 1,
      "name": "single_10mm",
      "seed": 0,
      "mode": "point_mass",
      "initialPosition": [0.0, 0.0, 0.1],
      "target": [0.2, 0.0, 0.1],
      "controller": {"type": "rice", "params": {"wF": 2.0}},
      "canopy": [{"crossSection": "circular", "dimension": 0.01, "length": 0.2,
                  "particleCount": 5, "attachmentPosition": [0.06, 0.005, 0.0]}]
    }

Omitted keys take the defaults of the dataclasses below. Every parsing problem is
raised as :class:`ScenarioError` naming the offending field.
"""
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.spatial.transform import Rotation

from controllers import CONTROLLERS, PARAMS
from src.arm import REFERENCE_HOME, ArmModel, reference_arm_model
from src.canopy import DEFAULT_ITERATIONS, DEFAULT_STEP_GAIN, BranchSpec, LeafSpec, validate_branch_spec
from src.tactile import SensorGeometry

SCHEMA_VERSION = 1
POINT_MASS = 'point_mass'
ARM = 'arm'
MODES = (POINT_MASS, ARM)
REFERENCE_ARM = 'reference'


class ScenarioError(ValueError):
    """Malformed scenario. ``field`` is the dotted path of the offending key, ``line``
    the line of the file when known (JSON syntax errors)."""

    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {message}{location}")


@dataclass
class MountingFrame:
    """Axis-aligned box of rigid mounting structure the EE must not enter."""
    lower: tuple
    upper: tuple

    def contains(self, point):
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= np.asarray(self.lower)) and np.all(point <= np.asarray(self.upper)))


@dataclass
class Scenario:
    """One trial configuration.

    In ``point_mass`` mode the EE starts at ``initial_position`` with the fixed
    orientation ``ee_rpy``. In ``arm`` mode it starts at the forward kinematics of
    ``initial_joint_state`` and ``ee_rpy`` is an extra tool rotation.
    """
    name: str = 'scenario'
    seed: int = 0
    canopy: list = field(default_factory=list)
    mode: str = POINT_MASS
    arm: ArmModel = None
    initial_joint_state: np.ndarray = None
    initial_position: tuple = (0.0, 0.0, 0.0)
    ee_rpy: tuple = (0.0, 0.0, 0.0)
    target: tuple = (0.3, 0.0, 0.0)
    controller: str = 'rice'
    controller_params: object = None
    high_level_rate: float = 50.0
    low_level_rate: float = 100.0
    max_duration: float = 60.0
    target_tolerance: float = 0.005
    stall_window: int = 100
    stall_eps: float = 0.001
    stop_on_breakage: bool = False
    sensor: SensorGeometry = field(default_factory=SensorGeometry)
    relax_iterations: int = DEFAULT_ITERATIONS
    relax_step_gain: float = DEFAULT_STEP_GAIN
    mounting_frames: list = field(default_factory=list)
    tags: tuple = ()

    def __post_init__(self):
        if self.controller_params is None and self.controller in PARAMS:
            self.controller_params = PARAMS[self.controller]()

    @property
    def frames_per_window(self):
        """j, the number of low-level steps per high-level step."""
        return int(round(self.low_level_rate / self.high_level_rate))

    @property
    def dt_low(self):
        return 1.0 / self.low_level_rate

    @property
    def dt_high(self):
        return 1.0 / self.high_level_rate

    def tool_rotation(self):
        return Rotation.from_euler('xyz', self.ee_rpy).as_matrix()

    def with_controller(self, kind, params=None):
        """Copy of the scenario driven by another controller."""
        if kind not in CONTROLLERS:
            raise ValueError(f"Unknown controller {kind!r}, expected one of {sorted(CONTROLLERS)}")
        return replace(self, controller=kind, controller_params=PARAMS[kind]() if params is None else params)


def validate_scenario(scenario):
    """Checks the cross-field constraints of a scenario.

    Raises:
        ScenarioError: Naming the first offending field.
    """
    if scenario.mode not in MODES:
        raise ScenarioError('mode', f"should be one of {MODES} but is {scenario.mode!r}")
    if scenario.controller not in CONTROLLERS:
        raise ScenarioError('controller.type', f"should be one of {sorted(CONTROLLERS)} "
                                               f"but is {scenario.controller!r}")
    if not isinstance(scenario.controller_params, PARAMS[scenario.controller]):
        raise ScenarioError('controller.params', f"should be {PARAMS[scenario.controller].__name__} "
                                                 f"but is {type(scenario.controller_params).__name__}")
    for name in ('high_level_rate', 'low_level_rate', 'max_duration', 'target_tolerance', 'stall_eps',
                 'relax_step_gain'):
        value = getattr(scenario, name)
        if not value > 0:
            raise ScenarioError(_camel(name), f"should be positive but is {value}")
    ratio = scenario.low_level_rate / scenario.high_level_rate
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
        raise ScenarioError('lowLevelRate', f"should be an integer multiple of highLevelRate "
                                            f"({scenario.high_level_rate}) but is {scenario.low_level_rate}")
    if scenario.stall_window < 1:
        raise ScenarioError('stallWindow', f"should be at least 1 but is {scenario.stall_window}")
    if scenario.relax_iterations < 1:
        raise ScenarioError('relaxIterations', f"should be at least 1 but is {scenario.relax_iterations}")
    if scenario.mode == ARM:
        if scenario.arm is None:
            raise ScenarioError('arm', "is required in arm mode")
        if scenario.initial_joint_state is None or len(scenario.initial_joint_state) != scenario.arm.dof:
            raise ScenarioError('initialJointState', f"should list {scenario.arm.dof} joint angles")
    for i, spec in enumerate(scenario.canopy):
        try:
            validate_branch_spec(spec, i)
        except ValueError as e:
            raise _wrap(e, f"canopy[{i}]") from e


def _wrap(error, path):
    """ScenarioError from a ValueError whose message starts with the offending field."""
    head, _, rest = str(error).partition(" ")
    if rest and head.startswith(path):
        return ScenarioError(head, rest)
    return ScenarioError(path, str(error))


def _camel(name):
    head, *rest = name.split('_')
    return head + ''.join(part[:1].upper() + part[1:] for part in rest)


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"should be a number but is {value!r}")
    if integer:
        if int(value) != value:
            raise ScenarioError(path, f"should be an integer but is {value!r}")
        return int(value)
    return float(value)


def _vector(value, path, size=3):
    if not isinstance(value, (list, tuple)) or len(value) != size:
        raise ScenarioError(path, f"should be a list of {size} numbers but is {value!r}")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _matrix(value, path, columns):
    if not isinstance(value, list) or len(value) == 0:
        raise ScenarioError(path, f"should be a non-empty list of rows but is {value!r}")
    return np.array([_vector(row, f"{path}[{i}]", columns) for i, row in enumerate(value)])


def _object(value, path):
    if not isinstance(value, dict):
        raise ScenarioError(path, f"should be an object but is {value!r}")
    return value


def _check_keys(data, allowed, path):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        prefix = f"{path}." if path else ""
        raise ScenarioError(f"{prefix}{unknown[0]}", f"is not a known field (known: {sorted(allowed)})")


def _parse_flat(cls, data, path, vector_fields=(), integer_fields=(), text_fields=(), skip=()):
    """Builds a dataclass from camelCase keys holding numbers, vectors or strings."""
    names = {_camel(f.name): f.name for f in fields(cls) if f.name not in skip}
    data = _object(data, path)
    _check_keys(data, names, path)
    kwargs = {}
    for key, value in data.items():
        name, where = names[key], f"{path}.{key}"
        if value is None:
            kwargs[name] = None
        elif name in text_fields:
            if not isinstance(value, str):
                raise ScenarioError(where, f"should be a string but is {value!r}")
            kwargs[name] = value
        elif name in vector_fields:
            kwargs[name] = _vector(value, where, vector_fields[name])
        else:
            kwargs[name] = _number(value, where, integer=name in integer_fields)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise _wrap(e, path) from e


def _parse_leaf(data, path):
    return _parse_flat(LeafSpec, data, path, vector_fields={'patch_half_extents': 2, 'patch_normal': 3},
                       integer_fields=('attach_particle_index',))


def _parse_branch(data, path):
    data = dict(_object(data, path))
    leaves = data.pop('leafSpecs', [])
    if not isinstance(leaves, list):
        raise ScenarioError(f"{path}.leafSpecs", f"should be a list but is {leaves!r}")
    spec = _parse_flat(BranchSpec, data, path, vector_fields={'attachment_position': 3, 'attachment_rpy': 3},
                       integer_fields=('particle_count',), text_fields=('cross_section',), skip=('leaf_specs',))
    spec.leaf_specs = [_parse_leaf(leaf, f"{path}.leafSpecs[{j}]") for j, leaf in enumerate(leaves)]
    return spec


def _parse_sensor(data, path='sensor'):
    data = dict(_object(data, path))
    offsets = data.pop('padOffsets', None)
    sensor = _parse_flat(SensorGeometry, data, path, integer_fields=('n',), skip=('pad_offsets',))
    if offsets is not None:
        if not isinstance(offsets, list):
            raise ScenarioError(f"{path}.padOffsets", f"should be a list but is {offsets!r}")
        pads = tuple(_vector(o, f"{path}.padOffsets[{i}]") for i, o in enumerate(offsets))
        try:
            sensor = replace(sensor, pad_offsets=pads)
        except ValueError as e:
            raise ScenarioError(f"{path}.padOffsets", str(e)) from e
    return sensor


def _parse_arm(data, path='arm'):
    if data == REFERENCE_ARM:
        return reference_arm_model()
    data = _object(data, path)
    _check_keys(data, ('dhParameters', 'jointLimits', 'basePosition', 'baseRpy', 'toolOffset'), path)
    kwargs = {'dh_parameters': _matrix(data.get('dhParameters'), f"{path}.dhParameters", 4)}
    rows = kwargs['dh_parameters'].shape[0]
    limits = data.get('jointLimits')
    kwargs['joint_limits'] = (np.tile([-2 * np.pi, 2 * np.pi], (rows, 1)) if limits is None
                              else _matrix(limits, f"{path}.jointLimits", 2))
    for key, name in (('basePosition', 'base_position'), ('baseRpy', 'base_rpy'), ('toolOffset', 'tool_offset')):
        if key in data:
            kwargs[name] = _vector(data[key], f"{path}.{key}")
    try:
        return ArmModel(**kwargs)
    except ValueError as e:
        raise _wrap(e, path) from e


def _parse_controller(data, path='controller'):
    data = _object(data, path)
    _check_keys(data, ('type', 'params'), path)
    kind = data.get('type', 'rice')
    if kind not in CONTROLLERS:
        raise ScenarioError(f"{path}.type", f"should be one of {sorted(CONTROLLERS)} but is {kind!r}")
    params = _parse_flat(PARAMS[kind], data.get('params', {}), f"{path}.params")
    return kind, params


_SCALARS = {
    'seed': ('seed', True),
    'highLevelRate': ('high_level_rate', False),
    'lowLevelRate': ('low_level_rate', False),
    'maxDuration': ('max_duration', False),
    'targetTolerance': ('target_tolerance', False),
    'stallWindow': ('stall_window', True),
    'stallEps': ('stall_eps', False),
    'relaxIterations': ('relax_iterations', True),
    'relaxStepGain': ('relax_step_gain', False),
}
_KNOWN_KEYS = set(_SCALARS) | {'schemaVersion', 'name', 'canopy', 'mode', 'arm', 'initialJointState',
                               'initialPosition', 'eeRpy', 'target', 'controller', 'stopOnBreakage', 'sensor',
                               'mountingFrames', 'tags'}


def scenario_from_dict(data):
    """Builds a :class:`Scenario` from parsed JSON.

    Raises:
        ScenarioError: On an unknown schema version, unknown key or malformed value.
    """
    data = _object(data, '<document>')
    version = data.get('schemaVersion')
    if version != SCHEMA_VERSION:
        raise ScenarioError('schemaVersion', f"should be {SCHEMA_VERSION} but is {version!r}")
    _check_keys(data, _KNOWN_KEYS, '')

    kwargs = {}
    if 'name' in data:
        if not isinstance(data['name'], str):
            raise ScenarioError('name', f"should be a string but is {data['name']!r}")
        kwargs['name'] = data['name']
    for key, (name, integer) in _SCALARS.items():
        if key in data:
            kwargs[name] = _number(data[key], key, integer=integer)
    if 'stopOnBreakage' in data:
        if not isinstance(data['stopOnBreakage'], bool):
            raise ScenarioError('stopOnBreakage', f"should be true or false but is {data['stopOnBreakage']!r}")
        kwargs['stop_on_breakage'] = data['stopOnBreakage']
    if 'mode' in data:
        kwargs['mode'] = data['mode']
    for key, name in (('initialPosition', 'initial_position'), ('eeRpy', 'ee_rpy'), ('target', 'target')):
        if key in data:
            kwargs[name] = _vector(data[key], key)

    canopy = data.get('canopy', [])
    if not isinstance(canopy, list):
        raise ScenarioError('canopy', f"should be a list of branches but is {canopy!r}")
    kwargs['canopy'] = [_parse_branch(branch, f"canopy[{i}]") for i, branch in enumerate(canopy)]

    if data.get('arm') is not None:
        kwargs['arm'] = _parse_arm(data['arm'])
    if data.get('initialJointState') is not None:
        q = data['initialJointState']
        if q == REFERENCE_ARM:
            kwargs['initial_joint_state'] = REFERENCE_HOME.copy()
        else:
            if not isinstance(q, list):
                raise ScenarioError('initialJointState', f"should be a list of angles but is {q!r}")
            kwargs['initial_joint_state'] = np.array([_number(v, f"initialJointState[{i}]")
                                                      for i, v in enumerate(q)])
    if 'controller' in data:
        kwargs['controller'], kwargs['controller_params'] = _parse_controller(data['controller'])
    if 'sensor' in data:
        kwargs['sensor'] = _parse_sensor(data['sensor'])

    frames = data.get('mountingFrames', [])
    if not isinstance(frames, list):
        raise ScenarioError('mountingFrames', f"should be a list but is {frames!r}")
    kwargs['mounting_frames'] = []
    for i, frame in enumerate(frames):
        frame = _object(frame, f"mountingFrames[{i}]")
        _check_keys(frame, ('lower', 'upper'), f"mountingFrames[{i}]")
        lower = _vector(frame.get('lower'), f"mountingFrames[{i}].lower")
        upper = _vector(frame.get('upper'), f"mountingFrames[{i}].upper")
        if not all(lo <= hi for lo, hi in zip(lower, upper)):
            raise ScenarioError(f"mountingFrames[{i}]", "should have lower <= upper on every axis")
        kwargs['mounting_frames'].append(MountingFrame(lower, upper))
    if 'tags' in data:
        tags = data['tags']
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise ScenarioError('tags', f"should be a list of strings but is {tags!r}")
        kwargs['tags'] = tuple(tags)

    scenario = Scenario(**kwargs)
    validate_scenario(scenario)
    return scenario


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _flat_to_dict(obj, skip=()):
    return {_camel(f.name): _plain(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}


def scenario_to_dict(scenario):
    """JSON-ready dictionary of a scenario; the inverse of :func:`scenario_from_dict`."""
    canopy = []
    for spec in scenario.canopy:
        branch = _flat_to_dict(spec, skip=('leaf_specs',))
        branch['leafSpecs'] = [_flat_to_dict(leaf) for leaf in spec.leaf_specs]
        canopy.append(branch)
    data = {
        'schemaVersion': SCHEMA_VERSION,
        'name': scenario.name,
        'seed': scenario.seed,
        'mode': scenario.mode,
        'initialPosition': _plain(scenario.initial_position),
        'eeRpy': _plain(scenario.ee_rpy),
        'target': _plain(scenario.target),
        'controller': {'type': scenario.controller, 'params': _flat_to_dict(scenario.controller_params)},
        'canopy': canopy,
        'stopOnBreakage': scenario.stop_on_breakage,
        'sensor': _flat_to_dict(scenario.sensor),
        'mountingFrames': [{'lower': _plain(f.lower), 'upper': _plain(f.upper)} for f in scenario.mounting_frames],
        'tags': list(scenario.tags),
    }
    for key, (name, _) in _SCALARS.items():
        data[key] = _plain(getattr(scenario, name))
    if scenario.arm is not None:
        data['arm'] = _flat_to_dict(scenario.arm)
    if scenario.initial_joint_state is not None:
        data['initialJointState'] = _plain(np.asarray(scenario.initial_joint_state, dtype=float))
    return data


def loads_scenario(text):
    """Parses scenario JSON text; syntax errors carry the line number."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError('<document>', f"invalid JSON: {e.msg}", line=e.lineno) from e
    return scenario_from_dict(data)


def load_scenario(path):
    with open(path, 'r', encoding='utf-8') as f:
        return loads_scenario(f.read())


def save_scenario(scenario, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scenario_to_dict(scenario), f, indent=2)
