"""Reactive interaction-aware controller.

The objective blends a target-reach cost ``U = ‖x_Target − x‖²`` and an interaction
cost ``G`` whose gradient is estimated from the tactile window by least squares:

    ∇H = w_x·∇̂U + w_f·∇̂G,     v = −alpha·∇H/‖∇H‖

so the EE always moves at ``alpha`` and turns away from the taxels that feel the
largest force increase.
"""
from dataclasses import dataclass

import numpy as np

from controllers.controller import Controller, ControllerCommand
from src.numerics import NORMALIZE_EPS, normalize, solve_normal_equations

GRADIENT_EPS = 1e-9
DEGENERATE_DIRECTION_EPS = 1e-12
MIN_USABLE_ROWS = 3


@dataclass
class RiceParams:
    w_x: float = 1.0
    w_f: float = 2.0
    alpha: float = 0.01
    no_contact_eps: float = 0.01

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha should be positive but is {self.alpha}")
        if self.w_x < 0 or self.w_f < 0:
            raise ValueError(f"weights should be non-negative but are w_x={self.w_x}, w_f={self.w_f}")
        if self.w_x == 0 and self.w_f == 0:
            raise ValueError("w_x and w_f should not both be zero")
        if self.no_contact_eps < 0:
            raise ValueError(f"no_contact_eps should be non-negative but is {self.no_contact_eps}")


def target_gradient(x_k, x_target):
    """Normalized gradient of ``U``: ``normalize(−2(x_Target − x_k))``."""
    diff = np.asarray(x_target, dtype=float) - np.asarray(x_k, dtype=float)
    return normalize(-2.0 * diff, NORMALIZE_EPS)


def force_gradient(window, no_contact_eps=0.01):
    """Least-squares estimate of the normalized interaction-cost gradient.

    Every row i of the window gives a direction ``d̂_i = (p_i − x_ref)/‖p_i − x_ref‖``
    and a cost change ``ΔG_i = ‖f_i‖ − ‖f_ref‖``; the gradient solves ``D̂·g ≈ ΔG``.

    Args:
        window (TactileWindow): Stacked forces and taxel positions.
        no_contact_eps (float): Largest taxel force (N) still treated as no contact.

    Returns:
        tuple: (unit gradient or zeros, contact flag). Rows whose taxel coincides with
        ``x_ref`` are skipped; with fewer than three usable rows the result is
        ``(zeros, False)``.
    """
    magnitudes = np.linalg.norm(window.forces, axis=1)
    if magnitudes.size == 0 or magnitudes.max() < no_contact_eps:
        return np.zeros(3), False

    offsets = window.taxel_positions - window.x_ref
    distances = np.linalg.norm(offsets, axis=1)
    usable = distances > DEGENERATE_DIRECTION_EPS
    if np.count_nonzero(usable) < MIN_USABLE_ROWS:
        return np.zeros(3), False

    directions = offsets[usable] / distances[usable, None]
    delta_g = magnitudes[usable] - np.linalg.norm(window.f_ref)
    return normalize(solve_normal_equations(directions, delta_g), NORMALIZE_EPS), True


def blend_gradients(grad_u, grad_g, params):
    """Weighted objective gradient and the fixed-speed command it implies.

    Returns:
        tuple: (v, ∇H) with ``v = −alpha·∇H/‖∇H‖``, or zero when ``‖∇H‖ < 1e-9``.
    """
    grad_h = params.w_x * np.asarray(grad_u, dtype=float) + params.w_f * np.asarray(grad_g, dtype=float)
    norm = np.linalg.norm(grad_h)
    # exact cancellation with contact also ends here; the plant breaks the tie next step
    v = np.zeros(3) if norm < GRADIENT_EPS else -params.alpha * grad_h / norm
    return v, grad_h


def rice_step(x_k, x_target, window, params):
    """One high-level step of the blended controller.

    Args:
        x_k (array-like): Current EE position.
        x_target (array-like): Target position.
        window (TactileWindow or None): Tactile window; ``None`` means no contact.
        params (RiceParams): Weights, speed and contact threshold.

    Returns:
        ControllerCommand: ``v = −alpha·∇H/‖∇H‖``, or zero when ``‖∇H‖ < 1e-9``.
    """
    grad_u = target_gradient(x_k, x_target)
    if window is None:
        grad_g, contact = np.zeros(3), False
    else:
        grad_g, contact = force_gradient(window, params.no_contact_eps)

    v, grad_h = blend_gradients(grad_u, grad_g, params)
    return ControllerCommand(v=v, grad_target=grad_u, grad_force=grad_g, grad_h=grad_h, contact_flag=contact)


class RiceController(Controller):
    """Stateless wrapper of :func:`rice_step`."""

    NAME = 'rice'

    def __init__(self, params=None):
        self.params = RiceParams() if params is None else params
        super().__init__(self.params.alpha)

    def _step(self, x_k, x_target, window, dt, ee_rotation):
        return rice_step(x_k, x_target, window, self.params)
