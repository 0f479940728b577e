from dataclasses import dataclass

import numpy as np

from controllers.controller import Controller, ControllerCommand
from controllers.position import position_step
from src.numerics import normalize


@dataclass
class HybridParams:
    """Admittance gains of the x_EE channel.

    The gains correspond to the translational x entry of 6-D mass/damping diagonals
    ``[0, 0, 0, 100, 0, 0]`` and ``[0, 0, 0, 50, 0, 0]``.
    """
    desired_force: float = 1.0
    virtual_mass: float = 100.0
    virtual_damping: float = 50.0
    alpha: float = 0.01
    no_contact_eps: float = 0.01

    def __post_init__(self):
        if not self.virtual_mass > 0:
            raise ValueError(f"virtual_mass should be positive but is {self.virtual_mass}")
        if self.virtual_damping < 0:
            raise ValueError(f"virtual_damping should be non-negative but is {self.virtual_damping}")
        if not self.alpha > 0:
            raise ValueError(f"alpha should be positive but is {self.alpha}")


def measured_force_x(window):
    """Magnitude of the net taxel force of the window's last frame projected on x_EE."""
    return float(abs(window.last_frame_forces().sum(axis=0)[0]))


def hybrid_step(x_k, x_target, force_x, admittance_velocity, params, dt, x_axis=None):
    """Admittance control along x_EE, position control on the other axes.

    In contact the x_EE speed follows ``m_a·v̇ + b_a·v = f_d − force_x`` (explicit Euler,
    clamped to ``±alpha``). Without contact it is ``min(alpha, pursuit x-component)`` and
    the admittance speed is held, so a fresh contact starts from the last admittance state
    (zero after a reset) and the EE halts on touch.

    Args:
        x_k (array-like): Current EE position.
        x_target (array-like): Target position.
        force_x (float): Measured contact force along x_EE (N, non-negative).
        admittance_velocity (float): Admittance speed of the previous step (m/s).
        params (HybridParams): Gains.
        dt (float): High-level period (s), positive.
        x_axis (array-like, optional): World direction of x_EE, world x if omitted.

    Returns:
        tuple: (ControllerCommand, new admittance speed).
    """
    if not dt > 0:
        raise ValueError(f"dt should be positive but is {dt}")
    e_x = np.array([1.0, 0.0, 0.0]) if x_axis is None else normalize(np.asarray(x_axis, dtype=float))
    pursuit = position_step(x_k, x_target, params.alpha)
    along = float(pursuit.v @ e_x)
    lateral = pursuit.v - along * e_x

    contact = force_x > params.no_contact_eps
    if contact:
        accel = (params.desired_force - force_x - params.virtual_damping * admittance_velocity) / params.virtual_mass
        v_x = float(np.clip(admittance_velocity + accel * dt, -params.alpha, params.alpha))
        state = v_x
    else:
        v_x = min(params.alpha, along)
        state = admittance_velocity

    v = v_x * e_x + lateral
    speed = np.linalg.norm(v)
    if speed > params.alpha:
        v = v * (params.alpha / speed)
    command = ControllerCommand(v=v, grad_target=pursuit.grad_target, grad_h=pursuit.grad_h, contact_flag=contact)
    return command, state


class HybridController(Controller):
    """Hybrid baseline; keeps the admittance speed between steps."""

    NAME = 'hybrid'

    def __init__(self, params=None):
        self.params = HybridParams() if params is None else params
        super().__init__(self.params.alpha)
        self.admittance_velocity = 0.0

    def reset(self):
        self.admittance_velocity = 0.0

    def _step(self, x_k, x_target, window, dt, ee_rotation):
        force_x = 0.0 if window is None else measured_force_x(window)
        command, self.admittance_velocity = hybrid_step(x_k, x_target, force_x, self.admittance_velocity,
                                                        self.params, dt, ee_rotation[:, 0])
        return command
