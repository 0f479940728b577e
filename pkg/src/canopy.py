"""Deformable mock-plant canopy.

Each branch is a chain of particles hanging off a mounting point. Bending happens at
2-DoF torsional joints: one external joint where the branch is attached to its frame
and one internal joint at the base of every link. Leaves hang off particles on a single
soft 2-DoF petiole joint and carry a flat rectangular patch.

The plant is quasi-static: every call to :func:`relax_deformation` minimises

    E(θ) = Σ ½ κ θ² − Σ load · displacement (+ ½ k s² penalty terms)

over the joint angles of the unbroken branches. A branch whose joint exceeds its
break angle is marked broken and keeps its deformed shape for the rest of the trial.

States are values: every operation returns a new :class:`CanopyState`.
"""
from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.spatial.transform import Rotation

from src.logger import Logger
from src.numerics import as_vec3, normalize, rot_x, rot_y

logger = Logger.get_logger(__name__)

YOUNGS_MODULUS_BALSA = 3.0e9
# outer-fibre strain at rupture; 5 mm sections on 50 mm links break at 0.35 rad
BREAK_STRAIN = 0.0175
DEFAULT_ITERATIONS = 50
DEFAULT_STEP_GAIN = 1.0
EXTERNAL_TO_INTERNAL_STIFFNESS = 2.0

CIRCULAR = 'circular'
SQUARE = 'square'
CROSS_SECTIONS = (CIRCULAR, SQUARE)

# (cross section, dimension in metres)
SECTION_PRESETS = {
    'circular_5mm': (CIRCULAR, 0.005),
    'circular_10mm': (CIRCULAR, 0.010),
    'circular_12mm': (CIRCULAR, 0.012),
    'square_5mm': (SQUARE, 0.005),
}

_E_X = np.array([1.0, 0.0, 0.0])
_E_Y = np.array([0.0, 1.0, 0.0])
_E_Z = np.array([0.0, 0.0, 1.0])


def bending_stiffness(cross_section, dimension, link_length, youngs_modulus=YOUNGS_MODULUS_BALSA):
    """Torsional joint stiffness ``κ = E·I/ℓ`` of one link.

    Args:
        cross_section (str): 'circular' (``I = πd⁴/64``) or 'square' (``I = a⁴/12``).
        dimension (float): Diameter or side length in metres.
        link_length (float): Length of the link in metres.
        youngs_modulus (float): Elastic modulus in Pa.

    Returns:
        float: Stiffness in N·m/rad.
    """
    if dimension <= 0 or link_length <= 0:
        raise ValueError(f"dimension and link_length should be positive but are {dimension} and {link_length}")
    if cross_section == CIRCULAR:
        second_moment = np.pi * dimension ** 4 / 64.0
    elif cross_section == SQUARE:
        second_moment = dimension ** 4 / 12.0
    else:
        raise ValueError(f"Unknown cross section: {cross_section}")
    return youngs_modulus * second_moment / link_length


def rupture_angle(dimension, link_length, strain=BREAK_STRAIN):
    """Joint angle at which the outer fibre of a link reaches ``strain``.

    The rupture moment ``σ·I/c`` over the joint stiffness ``E·I/ℓ`` gives ``ε·ℓ/c`` with
    ``c`` half the diameter or side. Circular and square sections share the formula.
    """
    if dimension <= 0 or link_length <= 0:
        raise ValueError(f"dimension and link_length should be positive but are {dimension} and {link_length}")
    return strain * link_length / (dimension / 2.0)


@dataclass
class LeafSpec:
    """A leaf: soft petiole joint at a particle plus a rectangular patch.

    ``patch_normal`` is given in the frame of the parent link. The patch sticks out
    sideways from the branch, starting ``petiole_length`` away from the particle.
    """
    attach_particle_index: int
    petiole_stiffness: float = 0.02
    patch_half_extents: tuple = (0.02, 0.01)
    patch_normal: tuple = (1.0, 0.0, 0.0)
    petiole_length: float = 0.01


@dataclass
class BranchSpec:
    """Static description of one branch.

    Stiffnesses left as ``None`` are derived from the cross section with
    :func:`bending_stiffness`; the external joint defaults to twice the internal one.
    A ``break_angle`` left as ``None`` follows from :func:`rupture_angle`, so thick
    branches snap at smaller bends than thin ones.
    """
    cross_section: str = CIRCULAR
    dimension: float = 0.010
    length: float = 0.3
    particle_count: int = 6
    attachment_position: tuple = (0.0, 0.0, 0.0)
    attachment_rpy: tuple = (0.0, 0.0, 0.0)
    orientation_deg: float = 0.0
    external_joint_stiffness: float = None
    internal_joint_stiffness: float = None
    break_angle: float = None
    leaf_specs: list = field(default_factory=list)
    youngs_modulus: float = YOUNGS_MODULUS_BALSA

    @property
    def link_count(self):
        return self.particle_count - 1

    @property
    def link_length(self):
        return self.length / self.link_count

    @property
    def radius(self):
        return self.dimension / 2.0

    @property
    def joint_dof_count(self):
        """Bending DoF of the branch itself (external + internal joints)."""
        return 2 * self.link_count + 2

    def internal_stiffness(self):
        if self.internal_joint_stiffness is not None:
            return float(self.internal_joint_stiffness)
        return bending_stiffness(self.cross_section, self.dimension, self.link_length, self.youngs_modulus)

    def external_stiffness(self):
        if self.external_joint_stiffness is not None:
            return float(self.external_joint_stiffness)
        return EXTERNAL_TO_INTERNAL_STIFFNESS * self.internal_stiffness()

    def breaking_angle(self):
        if self.break_angle is not None:
            return float(self.break_angle)
        return rupture_angle(self.dimension, self.link_length)

    def base_rotation(self):
        """Rest orientation of the first link; the branch grows along its local z axis."""
        attach = Rotation.from_euler('xyz', self.attachment_rpy).as_matrix()
        return rot_x(np.deg2rad(self.orientation_deg)) @ attach


def validate_branch_spec(spec, index=0):
    """Raises ValueError naming the first invalid field of ``spec``."""
    prefix = f"canopy[{index}]"
    if spec.cross_section not in CROSS_SECTIONS:
        raise ValueError(f"{prefix}.crossSection should be one of {CROSS_SECTIONS} but is {spec.cross_section!r}")
    if not spec.dimension > 0:
        raise ValueError(f"{prefix}.dimension should be positive but is {spec.dimension}")
    if not spec.length > 0:
        raise ValueError(f"{prefix}.length should be positive but is {spec.length}")
    if int(spec.particle_count) != spec.particle_count or spec.particle_count < 2:
        raise ValueError(f"{prefix}.particleCount should be an integer >= 2 but is {spec.particle_count}")
    if spec.break_angle is not None and not spec.break_angle > 0:
        raise ValueError(f"{prefix}.breakAngle should be positive but is {spec.break_angle}")
    for name, value in (('externalJointStiffness', spec.external_joint_stiffness),
                        ('internalJointStiffness', spec.internal_joint_stiffness)):
        if value is not None and not value > 0:
            raise ValueError(f"{prefix}.{name} should be positive but is {value}")
    as_vec3(spec.attachment_position, f"{prefix}.attachmentPosition")
    as_vec3(spec.attachment_rpy, f"{prefix}.attachmentRpy")
    for j, leaf in enumerate(spec.leaf_specs):
        leaf_prefix = f"{prefix}.leafSpecs[{j}]"
        if not 0 <= leaf.attach_particle_index < spec.particle_count:
            raise ValueError(f"{leaf_prefix}.attachParticleIndex should be within [0, {spec.particle_count - 1}] "
                             f"but is {leaf.attach_particle_index}")
        if not leaf.petiole_stiffness > 0:
            raise ValueError(f"{leaf_prefix}.petioleStiffness should be positive but is {leaf.petiole_stiffness}")
        if len(leaf.patch_half_extents) != 2 or min(leaf.patch_half_extents) <= 0:
            raise ValueError(f"{leaf_prefix}.patchHalfExtents should be two positive numbers "
                             f"but is {leaf.patch_half_extents}")
        normal = as_vec3(leaf.patch_normal, f"{leaf_prefix}.patchNormal")
        if not abs(np.linalg.norm(normal) - 1.0) < 1e-6:
            raise ValueError(f"{leaf_prefix}.patchNormal should be a unit vector but has norm {np.linalg.norm(normal)}")


@dataclass
class BranchState:
    """Deformation state of one branch.

    ``joint_angles`` holds the branch DoF followed by two DoF per leaf.
    ``max_tip_deviation`` is a running maximum and ``broken`` latches.
    """
    joint_angles: np.ndarray
    particle_positions: np.ndarray
    rest_tip: np.ndarray
    broken: bool = False
    max_tip_deviation: float = 0.0

    @property
    def tip(self):
        return self.particle_positions[-1]

    def tip_deviation(self):
        return float(np.linalg.norm(self.tip - self.rest_tip))


@dataclass
class CanopyState:
    """All branches of a scene plus bookkeeping of the last relaxation."""
    specs: list
    branches: list
    seed: int = 0
    energy_traces: tuple = ()

    @property
    def branch_count(self):
        return len(self.branches)

    @property
    def joint_count(self):
        return sum(spec.joint_dof_count for spec in self.specs)

    def tips(self):
        return np.array([b.tip for b in self.branches]).reshape(-1, 3)

    def broken_flags(self):
        return [b.broken for b in self.branches]


@dataclass
class ContactLoad:
    """Force applied by the sensor to a point of a link or a leaf.

    ``link_index`` values at or above the branch's link count address leaves
    (``link_count + leaf number``). A positive ``stiffness`` turns the load into a
    penalty spring that relaxes as the contact point moves along the force.
    """
    branch_index: int
    link_index: int
    point: np.ndarray
    force: np.ndarray
    stiffness: float = 0.0


ClosestPoint = namedtuple('ClosestPoint', ['branch_index', 'link_index', 'point', 'distance', 'normal'])


class _Kinematics:
    """Forward chain of one branch at a given joint vector.

    Stores per-body frames and, for every DoF, the world rotation axis and pivot so
    that ``∂x/∂θ_d = axis_d × (x − pivot_d)`` for points downstream of DoF ``d``.
    """

    def __init__(self, spec, angles):
        n_links = spec.link_count
        ell = spec.link_length
        n_dof = angles.size
        self.axes = np.zeros((n_dof, 3))
        self.pivots = np.zeros((n_dof, 3))
        self.particles = np.zeros((spec.particle_count, 3))
        self.body_rotations = []
        self.body_origins = []
        self.body_dofs = []

        frame = spec.base_rotation()
        origin = np.array(spec.attachment_position, dtype=float)
        self.particles[0] = origin
        frame = self._joint(frame, origin, angles, 0)
        for link in range(n_links):
            frame = self._joint(frame, origin, angles, 2 + 2 * link)
            self.body_rotations.append(frame)
            self.body_origins.append(origin)
            self.body_dofs.append(2 * link + 4)
            origin = origin + ell * frame[:, 2]
            self.particles[link + 1] = origin

        leaf_dof = spec.joint_dof_count
        for leaf in spec.leaf_specs:
            parent = min(leaf.attach_particle_index, n_links - 1)
            anchor = self.particles[leaf.attach_particle_index]
            leaf_frame = self._joint(self.body_rotations[parent], anchor, angles, leaf_dof)
            self.body_rotations.append(leaf_frame)
            self.body_origins.append(anchor)
            self.body_dofs.append(None)
            leaf_dof += 2
        self._leaf_parents = [min(leaf.attach_particle_index, n_links - 1) for leaf in spec.leaf_specs]
        self._n_links = n_links
        self.rotations = np.array(self.body_rotations)
        self.origins = np.array(self.body_origins)

    def dof_mask(self):
        """Boolean (bodies, n_dof) table of the DoF that move each body."""
        mask = np.zeros((len(self.body_rotations), self.axes.shape[0]), dtype=bool)
        for body in range(mask.shape[0]):
            mask[body, self.dofs_of(body)] = True
        return mask

    def _joint(self, frame, pivot, angles, dof):
        self.axes[dof] = frame[:, 0]
        self.pivots[dof] = pivot
        frame = frame @ rot_x(angles[dof])
        self.axes[dof + 1] = frame[:, 1]
        self.pivots[dof + 1] = pivot
        return frame @ rot_y(angles[dof + 1])

    def dofs_of(self, body):
        """Indices of the DoF that move a point attached to ``body``."""
        if body < self._n_links:
            return np.arange(self.body_dofs[body])
        leaf = body - self._n_links
        parent_dofs = np.arange(2 * self._leaf_parents[leaf] + 4)
        first = self.axes.shape[0] - 2 * (len(self._leaf_parents) - leaf)
        return np.concatenate([parent_dofs, [first, first + 1]])

    def to_world(self, body, local):
        return self.body_origins[body] + self.body_rotations[body] @ local


def _leaf_patch_local(leaf):
    """Centre and in-plane axes (u, v) of a leaf patch in its own frame."""
    n = normalize(np.asarray(leaf.patch_normal, dtype=float))
    v = normalize(np.cross(_E_Z, n))
    if not np.any(v):
        v = _E_Y.copy() if abs(n[1]) < 0.9 else _E_X.copy()
        v = normalize(v - n * (v @ n))
    u = np.cross(n, v)
    center = (leaf.petiole_length + leaf.patch_half_extents[1]) * v
    return center, u, v


def _stiffness_vector(spec):
    kappa = np.full(spec.joint_dof_count, spec.internal_stiffness())
    kappa[:2] = spec.external_stiffness()
    petioles = [leaf.petiole_stiffness for leaf in spec.leaf_specs for _ in range(2)]
    return np.concatenate([kappa, petioles])


def _dof_count(spec):
    return spec.joint_dof_count + 2 * len(spec.leaf_specs)


def _branch_state(spec, angles, rest_tip=None):
    kin = _Kinematics(spec, angles)
    tip = kin.particles[-1]
    return BranchState(joint_angles=angles, particle_positions=kin.particles,
                       rest_tip=tip.copy() if rest_tip is None else rest_tip)


def build_canopy(specs, seed=0):
    """Builds the canopy at rest.

    All joint angles are zero, no branch is broken and tip deviations are zero.

    Args:
        specs (list of BranchSpec): Branches of the scene, at least one.
        seed (int): Scene seed, stored for bookkeeping.

    Returns:
        CanopyState: The rest state.

    Raises:
        ValueError: If ``specs`` is empty or a spec is invalid.
    """
    if len(specs) == 0:
        raise ValueError("canopy should contain at least one branch")
    for i, spec in enumerate(specs):
        validate_branch_spec(spec, i)
    branches = [_branch_state(spec, np.zeros(_dof_count(spec))) for spec in specs]
    return CanopyState(specs=list(specs), branches=branches, seed=int(seed))


def empty_canopy(seed=0):
    """A scene without branches (free-space trials)."""
    return CanopyState(specs=[], branches=[], seed=int(seed))


class _Loads:
    """Contact loads of one branch, each anchored to a material point of a body.

    A load of magnitude ``f`` and stiffness ``k`` has potential ``−f·s + ½k·s²`` in the
    slide ``s`` of its point along the force direction, capped at ``−f²/2k`` once the
    point has moved ``f/k`` (the contact has opened). ``k = 0`` is a dead load.
    """

    def __init__(self, loads, kin, mask):
        loads = [load for load in loads if np.any(load.force)]
        self.count = len(loads)
        if not loads:
            return
        forces = np.array([load.force for load in loads], dtype=float)
        self.bodies = np.array([load.link_index for load in loads], dtype=int)
        self.magnitudes = np.linalg.norm(forces, axis=1)
        self.directions = forces / self.magnitudes[:, None]
        self.stiffness = np.array([load.stiffness for load in loads], dtype=float)
        springs = self.stiffness > 0
        self.caps = np.full(self.count, np.inf)
        self.caps[springs] = self.magnitudes[springs] / self.stiffness[springs]
        self.starts = np.array([load.point for load in loads], dtype=float)
        self.locals = np.einsum('lji,lj->li', kin.rotations[self.bodies], self.starts - kin.origins[self.bodies])
        self.mask = mask[self.bodies]

    def points(self, kin):
        return kin.origins[self.bodies] + np.einsum('lij,lj->li', kin.rotations[self.bodies], self.locals)

    def slides(self, points):
        return np.einsum('li,li->l', self.directions, points - self.starts)

    def energy(self, s):
        closed = s < self.caps
        f, k = self.magnitudes, self.stiffness
        return float(np.sum(np.where(closed, -f * s + 0.5 * k * s * s, -0.5 * f * self.caps)))

    def derivative(self, s):
        return np.where(s < self.caps, -self.magnitudes + self.stiffness * s, 0.0)

    def curvature(self, s):
        return np.where(s < self.caps, self.stiffness, 0.0)

    def normal_jacobian(self, kin, points):
        """(loads, n_dof) derivative of every slide with respect to the joint angles."""
        lever = points[:, None, :] - kin.pivots[None, :, :]
        moment = np.cross(lever, self.directions[:, None, :])
        return np.einsum('ldk,dk->ld', moment, kin.axes) * self.mask


def _energy(kappa, angles, loads, kin):
    elastic = 0.5 * float(kappa @ (angles * angles))
    if loads.count == 0:
        return elastic
    return elastic + loads.energy(loads.slides(loads.points(kin)))


def _exceeds_break(spec, angles):
    pairs = angles[:spec.joint_dof_count].reshape(-1, 2)
    return bool(np.any(np.hypot(pairs[:, 0], pairs[:, 1]) > spec.breaking_angle()))


def _relax_branch(spec, branch, loads, iterations, step_gain, index):
    """Damped, stiffness-preconditioned descent on one branch. Returns (branch, trace)."""
    angles = branch.joint_angles.copy()
    kappa = _stiffness_vector(spec)
    kin = _Kinematics(spec, angles)
    terms = _Loads(loads, kin, kin.dof_mask())
    energy = _energy(kappa, angles, terms, kin)
    trace = [energy]
    broken = False

    for _ in range(iterations):
        gradient = kappa * angles
        hessian = np.diag(kappa)
        if terms.count:
            points = terms.points(kin)
            s = terms.slides(points)
            jn = terms.normal_jacobian(kin, points)
            gradient = gradient + jn.T @ terms.derivative(s)
            hessian = hessian + jn.T @ (terms.curvature(s)[:, None] * jn)
        step = -scipy.linalg.solve(hessian, gradient, assume_a='pos')
        if not np.max(np.abs(step)) > 1e-13:
            break

        gain = step_gain
        accepted = False
        for _ in range(40):
            trial = angles + gain * step
            trial_kin = _Kinematics(spec, trial)
            trial_energy = _energy(kappa, trial, terms, trial_kin)
            if trial_energy <= energy:
                accepted = True
                break
            gain *= 0.5
        if not accepted:
            break

        decrease = energy - trial_energy
        angles, kin, energy = trial, trial_kin, trial_energy
        trace.append(energy)
        if _exceeds_break(spec, angles):
            broken = True
            break
        if decrease <= 1e-15 * max(1.0, abs(energy)):
            break

    tip = kin.particles[-1]
    deviation = float(np.linalg.norm(tip - branch.rest_tip))
    new_branch = BranchState(joint_angles=angles, particle_positions=kin.particles, rest_tip=branch.rest_tip,
                             broken=broken, max_tip_deviation=max(branch.max_tip_deviation, deviation))
    if broken:
        logger.debug(f"Branch {index} broke (max joint angle above {spec.breaking_angle():.3f} rad)")
    return new_branch, np.array(trace)


def relax_deformation(state, loads, iterations=DEFAULT_ITERATIONS, step_gain=DEFAULT_STEP_GAIN):
    """Quasi-static relaxation of the canopy under contact loads.

    Unbroken branches take up to ``iterations`` damped descent steps on their joint
    angles; every accepted step keeps the energy non-increasing. Branches that exceed
    their break angle are marked broken and frozen. Broken branches ignore loads.

    Args:
        state (CanopyState): Current canopy.
        loads (list of ContactLoad): Loads of this step.
        iterations (int): Iteration budget, at least 1.
        step_gain (float): Initial step length of every iteration, positive.

    Returns:
        CanopyState: The relaxed canopy, with per-branch energy traces attached.
    """
    if iterations < 1:
        raise ValueError(f"iterations should be at least 1 but is {iterations}")
    if not step_gain > 0:
        raise ValueError(f"step_gain should be positive but is {step_gain}")

    per_branch = [[] for _ in state.branches]
    for load in loads:
        if not 0 <= load.branch_index < state.branch_count:
            raise ValueError(f"load references branch {load.branch_index} but the canopy has {state.branch_count}")
        spec = state.specs[load.branch_index]
        if not 0 <= load.link_index < spec.link_count + len(spec.leaf_specs):
            raise ValueError(f"load references link {load.link_index} of branch {load.branch_index} "
                             f"which has {spec.link_count} links and {len(spec.leaf_specs)} leaves")
        per_branch[load.branch_index].append(load)

    branches, traces = [], []
    for i, (spec, branch) in enumerate(zip(state.specs, state.branches)):
        at_rest = not np.any(branch.joint_angles)
        if branch.broken or (at_rest and not per_branch[i]):
            branches.append(branch)
            traces.append(np.array([]))
            continue
        new_branch, trace = _relax_branch(spec, branch, per_branch[i], iterations, step_gain, i)
        branches.append(new_branch)
        traces.append(trace)
    return replace(state, branches=branches, energy_traces=tuple(traces))


def _closest_on_capsules(starts, ends, radius, query):
    seg = ends - starts
    length_sq = np.einsum('ij,ij->i', seg, seg)
    t = np.clip(np.einsum('ij,ij->i', query - starts, seg) / length_sq, 0.0, 1.0)
    axis_points = starts + t[:, None] * seg
    offset = query - axis_points
    axis_dist = np.linalg.norm(offset, axis=1)
    return axis_points, offset, axis_dist, axis_dist - radius


def _fallback_normal(direction):
    normal = np.cross(direction, _E_X)
    if np.linalg.norm(normal) < 1e-9:
        normal = np.cross(direction, _E_Y)
    return normalize(normal)


def _closest_on_patch(center, u, v, half_extents, normal, query):
    rel = query - center
    a = np.clip(rel @ u, -half_extents[0], half_extents[0])
    b = np.clip(rel @ v, -half_extents[1], half_extents[1])
    point = center + a * u + b * v
    offset = query - point
    distance = float(np.linalg.norm(offset))
    if distance > 1e-12:
        return point, distance, offset / distance
    return point, 0.0, normal if rel @ normal >= 0 else -normal


def leaf_patches(state):
    """World geometry of every leaf: list of (branch, body, center, u, v, half_extents, normal)."""
    patches = []
    for b, (spec, branch) in enumerate(zip(state.specs, state.branches)):
        if not spec.leaf_specs:
            continue
        kin = _Kinematics(spec, branch.joint_angles)
        for j, leaf in enumerate(spec.leaf_specs):
            body = spec.link_count + j
            center, u, v = _leaf_patch_local(leaf)
            R = kin.body_rotations[body]
            n = normalize(np.asarray(leaf.patch_normal, dtype=float))
            patches.append((b, body, kin.to_world(body, center), R @ u, R @ v, leaf.patch_half_extents, R @ n))
    return patches


def closest_point_on_canopy(state, query_point):
    """Nearest surface point over all link capsules and leaf patches.

    Capsules have radius ``dimension/2``. The distance is signed: negative inside a
    capsule (``−radius`` on the axis). The normal always points from the surface
    towards the query (outwards when inside).

    Args:
        state (CanopyState): Canopy to query.
        query_point (array-like): World point.

    Returns:
        ClosestPoint: (branch_index, link_index, point, distance, normal).
    """
    query = as_vec3(query_point, 'query_point')
    best = None
    for b, (spec, branch) in enumerate(zip(state.specs, state.branches)):
        particles = branch.particle_positions
        starts, ends = particles[:-1], particles[1:]
        axis_points, offset, axis_dist, dist = _closest_on_capsules(starts, ends, spec.radius, query)
        link = int(np.argmin(dist))
        if best is None or dist[link] < best.distance:
            if axis_dist[link] > 1e-12:
                normal = offset[link] / axis_dist[link]
            else:
                normal = _fallback_normal(normalize(ends[link] - starts[link]))
            point = axis_points[link] + spec.radius * normal
            best = ClosestPoint(b, link, point, float(dist[link]), normal)

    for b, body, center, u, v, half_extents, n in leaf_patches(state):
        point, distance, normal = _closest_on_patch(center, u, v, half_extents, n, query)
        if distance < best.distance:
            best = ClosestPoint(b, body, point, distance, normal)
    return best


def closest_points_on_canopy(state, query_points):
    """Vectorised variant of :func:`closest_point_on_canopy` for many queries.

    Args:
        state (CanopyState): Canopy to query.
        query_points (np.ndarray): Array of shape (M, 3).

    Returns:
        tuple: ``branch`` (M,), ``link`` (M,), ``points`` (M, 3), ``distance`` (M,), ``normals`` (M, 3).
    """
    queries = np.asarray(query_points, dtype=float).reshape(-1, 3)
    m = queries.shape[0]
    best_dist = np.full(m, np.inf)
    best_branch = np.zeros(m, dtype=int)
    best_link = np.zeros(m, dtype=int)
    best_points = np.zeros((m, 3))
    best_normals = np.zeros((m, 3))

    for b, (spec, branch) in enumerate(zip(state.specs, state.branches)):
        starts = branch.particle_positions[:-1]
        seg = branch.particle_positions[1:] - starts
        length_sq = np.einsum('ij,ij->i', seg, seg)
        rel = queries[:, None, :] - starts[None, :, :]
        t = np.clip(np.einsum('mij,ij->mi', rel, seg) / length_sq, 0.0, 1.0)
        axis_points = starts[None, :, :] + t[:, :, None] * seg[None, :, :]
        offset = queries[:, None, :] - axis_points
        axis_dist = np.linalg.norm(offset, axis=2)
        dist = axis_dist - spec.radius
        link = np.argmin(dist, axis=1)
        rows = np.arange(m)
        d = dist[rows, link]
        better = d < best_dist
        if not np.any(better):
            continue
        a = axis_dist[rows, link]
        normals = offset[rows, link] / np.where(a > 1e-12, a, 1.0)[:, None]
        for i in np.flatnonzero(better & (a <= 1e-12)):
            normals[i] = _fallback_normal(normalize(seg[link[i]]))
        best_dist[better] = d[better]
        best_branch[better] = b
        best_link[better] = link[better]
        best_normals[better] = normals[better]
        best_points[better] = axis_points[rows, link][better] + spec.radius * normals[better]

    for b, body, center, u, v, half_extents, n in leaf_patches(state):
        rel = queries - center
        a = np.clip(rel @ u, -half_extents[0], half_extents[0])
        c = np.clip(rel @ v, -half_extents[1], half_extents[1])
        points = center + a[:, None] * u + c[:, None] * v
        offset = queries - points
        distance = np.linalg.norm(offset, axis=1)
        better = distance < best_dist
        on_patch = distance <= 1e-12
        normals = offset / np.where(on_patch, 1.0, distance)[:, None]
        normals[on_patch] = np.where((rel[on_patch] @ n >= 0)[:, None], n, -n)
        best_dist[better] = distance[better]
        best_branch[better] = b
        best_link[better] = body
        best_points[better] = points[better]
        best_normals[better] = normals[better]
    return best_branch, best_link, best_points, best_dist, best_normals


def total_disturbance(state):
    """Sum over branches of the running maximum tip deviation (metres)."""
    return float(sum(branch.max_tip_deviation for branch in state.branches))


def analytic_tip_deflection(spec, force):
    """Small-angle tip deflection of a straight branch under a lateral tip force.

    Every joint ``d`` at distance ``r_d`` below the tip contributes ``F·r_d²/κ_d``.
    """
    ell = spec.link_length
    arms = [spec.length] + [spec.length - i * ell for i in range(spec.link_count)]
    stiffnesses = [spec.external_stiffness()] + [spec.internal_stiffness()] * spec.link_count
    return float(force * sum(r * r / k for r, k in zip(arms, stiffnesses)))


if __name__ == '__main__':
    canopy = build_canopy([BranchSpec(particle_count=6)])
    load = ContactLoad(0, 4, canopy.branches[0].tip, np.array([0.0, 0.5, 0.0]))
    relaxed = relax_deformation(canopy, [load])
    print(relaxed.branches[0].tip, total_disturbance(relaxed))
