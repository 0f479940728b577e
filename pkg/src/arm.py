"""Serial-arm kinematics and the low-level resolved-rate motion controller (RRMC).

The arm is described by standard Denavit-Hartenberg rows ``(a, alpha, d, theta_offset)``.
Only the position of the end effector is controlled, so the Jacobian is the 3×b
positional part. A point-mass mode integrates Cartesian velocities directly.
"""
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from src.numerics import PINV_TOL, as_vec3, pseudoinverse

EEPose = namedtuple('EEPose', ['position', 'rotation'])
RRMCResult = namedtuple('RRMCResult', ['q', 'saturated', 'tracking_error'])


@dataclass
class ArmModel:
    """Kinematic description of a b-joint revolute arm.

    Attributes:
        dh_parameters (np.ndarray): Rows ``(a, alpha, d, theta_offset)`` in metres/radians.
        joint_limits (np.ndarray): Rows ``(lower, upper)`` in radians.
        base_position (tuple): Base frame origin in the world.
        base_rpy (tuple): Base frame orientation as xyz Euler angles (rad).
        tool_offset (tuple): End-effector point expressed in the last DH frame.
    """
    dh_parameters: np.ndarray
    joint_limits: np.ndarray
    base_position: tuple = (0.0, 0.0, 0.0)
    base_rpy: tuple = (0.0, 0.0, 0.0)
    tool_offset: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        self.dh_parameters = np.asarray(self.dh_parameters, dtype=float).reshape(-1, 4)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float).reshape(-1, 2)
        if self.dof < 3:
            raise ValueError(f"arm should have at least 3 joints for 3-D velocity tracking but has {self.dof}")
        if self.joint_limits.shape[0] != self.dof:
            raise ValueError(f"joint_limits should have {self.dof} rows but has {self.joint_limits.shape[0]}")
        if not np.all(self.joint_limits[:, 0] < self.joint_limits[:, 1]):
            raise ValueError("joint_limits should have lower < upper for every joint")
        as_vec3(self.base_position, 'base_position')
        as_vec3(self.base_rpy, 'base_rpy')
        as_vec3(self.tool_offset, 'tool_offset')

    @property
    def dof(self):
        return self.dh_parameters.shape[0]

    def base_transform(self):
        T = np.eye(4)
        T[:3, :3] = Rotation.from_euler('xyz', self.base_rpy).as_matrix()
        T[:3, 3] = self.base_position
        return T


def dh_transform(a, alpha, d, theta):
    """Homogeneous transform of one standard DH row: ``Rz(θ)·Tz(d)·Tx(a)·Rx(α)``."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([[ct, -st * ca, st * sa, a * ct],
                     [st, ct * ca, -ct * sa, a * st],
                     [0.0, sa, ca, d],
                     [0.0, 0.0, 0.0, 1.0]])


def _check_q(model, q):
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != model.dof:
        raise ValueError(f"q should have {model.dof} entries but has {q.size}")
    return q


def joint_frames(model, q):
    """World transforms ``T_0 .. T_b`` of the base and every DH frame."""
    q = _check_q(model, q)
    frames = [model.base_transform()]
    for (a, alpha, d, offset), qi in zip(model.dh_parameters, q):
        frames.append(frames[-1] @ dh_transform(a, alpha, d, qi + offset))
    return frames


def forward_kinematics(model, q):
    """End-effector pose for joint vector ``q``.

    Args:
        model (ArmModel): Arm description.
        q (array-like): Joint angles, length b.

    Returns:
        EEPose: ``position`` (3,) and ``rotation`` (3, 3) in the world frame.
    """
    last = joint_frames(model, q)[-1]
    position = last[:3, 3] + last[:3, :3] @ np.asarray(model.tool_offset, dtype=float)
    return EEPose(position, last[:3, :3].copy())


def jacobian(model, q):
    """Geometric positional Jacobian (3×b); column i is ``z_i × (p_ee − p_i)``."""
    frames = joint_frames(model, q)
    last = frames[-1]
    p_ee = last[:3, 3] + last[:3, :3] @ np.asarray(model.tool_offset, dtype=float)
    J = np.zeros((3, model.dof))
    for i in range(model.dof):
        z_i = frames[i][:3, 2]
        p_i = frames[i][:3, 3]
        J[:, i] = np.cross(z_i, p_ee - p_i)
    return J


def rrmc_step(model, q, v_desired, dt, tol=PINV_TOL):
    """One resolved-rate step: ``q' = clamp(q + J⁺(q)·v·dt)``.

    Args:
        model (ArmModel): Arm description.
        q (array-like): Current joint angles inside the limits.
        v_desired (array-like): Desired end-effector velocity (m/s).
        dt (float): Low-level period in seconds, positive.
        tol (float): Relative singular-value truncation for the pseudoinverse.

    Returns:
        RRMCResult: New joint vector, whether any joint hit its limit, and the
        Cartesian tracking error ``‖(FK(q')−FK(q))/dt − v‖`` in m/s.
    """
    if not dt > 0:
        raise ValueError(f"dt should be positive but is {dt}")
    q = _check_q(model, q)
    v = as_vec3(v_desired, 'v_desired')
    if not np.any(v):
        return RRMCResult(q.copy(), False, 0.0)

    q_dot = pseudoinverse(jacobian(model, q), tol) @ v
    q_free = q + q_dot * dt
    lower, upper = model.joint_limits[:, 0], model.joint_limits[:, 1]
    q_new = np.clip(q_free, lower, upper)
    saturated = bool(np.any(q_new != q_free))

    achieved = (forward_kinematics(model, q_new).position - forward_kinematics(model, q).position) / dt
    return RRMCResult(q_new, saturated, float(np.linalg.norm(achieved - v)))


def point_mass_step(x, v, dt):
    """Explicit Euler step of a free point: ``x' = x + v·dt``."""
    if not dt > 0:
        raise ValueError(f"dt should be positive but is {dt}")
    return as_vec3(x, 'x') + as_vec3(v, 'v') * dt


def reference_arm_model():
    """Fixed generic 6R arm (UR5-like DH rows) used by tests and example scenarios."""
    dh = np.array([[0.0, np.pi / 2, 0.089159, 0.0],
                   [-0.425, 0.0, 0.0, 0.0],
                   [-0.39225, 0.0, 0.0, 0.0],
                   [0.0, np.pi / 2, 0.10915, 0.0],
                   [0.0, -np.pi / 2, 0.09465, 0.0],
                   [0.0, 0.0, 0.0823, 0.0]])
    limits = np.tile([-2 * np.pi, 2 * np.pi], (6, 1))
    return ArmModel(dh_parameters=dh, joint_limits=limits)


REFERENCE_HOME = np.array([0.0, -1.2, 1.5, -1.9, -1.57, 0.0])


if __name__ == '__main__':
    model = reference_arm_model()
    print(forward_kinematics(model, REFERENCE_HOME).position)
    print(rrmc_step(model, REFERENCE_HOME, [0.01, 0, 0], 0.01))
