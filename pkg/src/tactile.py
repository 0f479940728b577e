"""Simulated fingertip taxel arrays.

Two planar n×n pads sit on the gripper face, facing along x_EE and offset along
y_EE/z_EE. Every taxel is a penalty probe: within ``taxel_contact_radius`` of the
canopy surface it reports ``k_c·(radius − distance)`` along the surface normal,
expressed in the EE frame, and the plant receives the opposite load.
"""
from dataclasses import dataclass, field

import numpy as np

from src.canopy import ContactLoad, closest_points_on_canopy
from src.numerics import as_vec3


@dataclass
class SensorGeometry:
    """Layout of the two taxel pads in the EE frame."""
    n: int = 4
    pitch: float = 0.005
    pad_offsets: tuple = field(default=((0.015, 0.010, 0.0), (0.015, -0.010, 0.0)))
    taxel_contact_radius: float = 0.004
    contact_stiffness: float = 5000.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sensor.n should be a positive integer but is {self.n}")
        if not self.pitch > 0:
            raise ValueError(f"sensor.pitch should be positive but is {self.pitch}")
        if len(self.pad_offsets) != 2:
            raise ValueError(f"sensor.padOffsets should list 2 pads but lists {len(self.pad_offsets)}")
        for i, offset in enumerate(self.pad_offsets):
            as_vec3(offset, f"sensor.padOffsets[{i}]")
        if not self.taxel_contact_radius > 0:
            raise ValueError(f"sensor.taxelContactRadius should be positive but is {self.taxel_contact_radius}")
        if not self.contact_stiffness > 0:
            raise ValueError(f"sensor.contactStiffness should be positive but is {self.contact_stiffness}")

    @property
    def taxel_count(self):
        """N = 2n²."""
        return 2 * self.n * self.n

    def local_taxel_positions(self):
        """Taxel positions in the EE frame, pad by pad, row-major within a pad."""
        ticks = (np.arange(self.n) - (self.n - 1) / 2.0) * self.pitch
        zz, yy = np.meshgrid(ticks, ticks, indexing='ij')
        grid = np.column_stack([np.zeros(zz.size), yy.ravel(), zz.ravel()])
        return np.vstack([grid + np.asarray(offset, dtype=float) for offset in self.pad_offsets])

    def pad_of(self, taxel_index):
        return taxel_index // (self.n * self.n)


@dataclass
class TactileFrame:
    """One sample of all N taxels.

    ``forces`` are in the EE frame, ``taxel_positions`` in the world frame and
    ``rotation`` is the EE orientation the frame was taken with.
    """
    forces: np.ndarray
    taxel_positions: np.ndarray
    index: int = 1
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def world_forces(self):
        return self.forces @ self.rotation.T


@dataclass
class TactileWindow:
    """All frames of one high-level period stacked frame-major (s = N·j rows)."""
    forces: np.ndarray
    taxel_positions: np.ndarray
    f_ref: np.ndarray
    x_ref: np.ndarray
    frame_count: int = 1

    @property
    def rows(self):
        return self.forces.shape[0]

    @property
    def taxel_count(self):
        return self.rows // self.frame_count

    def last_frame_forces(self):
        return self.forces[-self.taxel_count:]


def taxel_world_positions(geometry, ee_position, ee_rotation=None):
    R = np.eye(3) if ee_rotation is None else np.asarray(ee_rotation, dtype=float)
    return as_vec3(ee_position, 'ee_position') + geometry.local_taxel_positions() @ R.T


def sample_tactile(geometry, ee_position, canopy, ee_rotation=None, index=1):
    """Samples every taxel against the canopy.

    Args:
        geometry (SensorGeometry): Pad layout.
        ee_position (array-like): EE position in the world.
        canopy (CanopyState): Current plant.
        ee_rotation (np.ndarray, optional): EE orientation, identity if omitted.
        index (int): Frame index within the window (1-based).

    Returns:
        tuple: (TactileFrame, list of ContactLoad). Non-contacting taxels report exact
        zeros and emit no load.
    """
    R = np.eye(3) if ee_rotation is None else np.asarray(ee_rotation, dtype=float)
    positions = taxel_world_positions(geometry, ee_position, R)
    branch, link, points, distance, normals = closest_points_on_canopy(canopy, positions)

    radius = geometry.taxel_contact_radius
    forces_world = np.zeros_like(positions)
    loads = []
    for i in np.flatnonzero(distance < radius):
        force = geometry.contact_stiffness * (radius - distance[i]) * normals[i]
        forces_world[i] = force
        loads.append(ContactLoad(branch_index=int(branch[i]), link_index=int(link[i]), point=points[i].copy(),
                                 force=-force, stiffness=geometry.contact_stiffness))
    frame = TactileFrame(forces=forces_world @ R, taxel_positions=positions, index=index, rotation=R.copy())
    return frame, loads


def aggregate_window(frames, ee_ref_position, expected_frames=None):
    """Stacks the frames of one high-level period.

    ``f_ref`` is the mean taxel force of the first frame and ``x_ref`` the EE position
    at the start of the window.

    Raises:
        ValueError: If no frames are given, frame sizes differ, or the count differs
            from ``expected_frames``.
    """
    if len(frames) == 0:
        raise ValueError("window should contain at least one frame")
    if expected_frames is not None and len(frames) != expected_frames:
        raise ValueError(f"window should contain {expected_frames} frames but has {len(frames)}")
    n_taxels = frames[0].forces.shape[0]
    for frame in frames:
        if frame.forces.shape != (n_taxels, 3) or frame.taxel_positions.shape != (n_taxels, 3):
            raise ValueError(f"mismatched frame sizes: expected {n_taxels}x3 but got {frame.forces.shape} "
                             f"forces and {frame.taxel_positions.shape} positions")
    return TactileWindow(forces=np.vstack([f.forces for f in frames]),
                         taxel_positions=np.vstack([f.taxel_positions for f in frames]),
                         f_ref=frames[0].forces.mean(axis=0),
                         x_ref=as_vec3(ee_ref_position, 'ee_ref_position'),
                         frame_count=len(frames))
