from .controller import Controller, ControllerCommand, validate_controller_command
from .position import PositionController, PositionParams, position_step
from .rice import RiceController, RiceParams, blend_gradients, force_gradient, rice_step, target_gradient
from .hybrid import HybridController, HybridParams, hybrid_step, measured_force_x

CONTROLLERS = {cls.NAME: cls for cls in (RiceController, PositionController, HybridController)}
PARAMS = {RiceController.NAME: RiceParams, PositionController.NAME: PositionParams, HybridController.NAME: HybridParams}


def make_controller(kind, params=None):
    """Creates a controller by its scenario name ('rice', 'position' or 'hybrid')."""
    if kind not in CONTROLLERS:
        raise ValueError(f"Unknown controller {kind!r}, expected one of {sorted(CONTROLLERS)}")
    return CONTROLLERS[kind](params)
