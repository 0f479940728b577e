from dataclasses import dataclass

import numpy as np
from controllers.controller import Controller, ControllerCommand
from src.numerics import NORMALIZE_EPS, normalize


@dataclass
class PositionParams:
    alpha: float = 0.01

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha should be positive but is {self.alpha}")


def position_step(x_k, x_target, alpha):
    """Straight-line pursuit at speed ``alpha``; ignores any tactile input.

    Args:
        x_k (array-like): Current EE position.
        x_target (array-like): Target position.
        alpha (float): Speed in m/s, positive.

    Returns:
        ControllerCommand: ``v = alpha·(x_target − x_k)/‖x_target − x_k‖``, zero at the target.
    """
    if not alpha > 0:
        raise ValueError(f"alpha should be positive but is {alpha}")
    direction = normalize(np.asarray(x_target, dtype=float) - np.asarray(x_k, dtype=float), NORMALIZE_EPS)
    return ControllerCommand(v=alpha * direction, grad_target=-direction, grad_h=-direction)


class PositionController(Controller):
    """Baseline that drives directly towards the target."""

    NAME = 'position'

    def __init__(self, params=None):
        self.params = PositionParams() if params is None else params
        super().__init__(self.params.alpha)

    def _step(self, x_k, x_target, window, dt, ee_rotation):
        return position_step(x_k, x_target, self.alpha)
