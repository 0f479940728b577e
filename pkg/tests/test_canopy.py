from dataclasses import replace

import numpy as np
import pytest

from src.canopy import (YOUNGS_MODULUS_BALSA, BranchSpec, ContactLoad, LeafSpec, analytic_tip_deflection,
                        bending_stiffness, build_canopy, closest_point_on_canopy, closest_points_on_canopy,
                        leaf_patches, relax_deformation, rupture_angle, total_disturbance)


def vertical_branch(**kwargs):
    defaults = dict(cross_section='circular', dimension=0.010, length=0.3, particle_count=6)
    defaults.update(kwargs)
    return BranchSpec(**defaults)


def tip_load(state, force, branch=0, stiffness=0.0):
    spec = state.specs[branch]
    return ContactLoad(branch, spec.link_count - 1, state.branches[branch].tip.copy(), np.asarray(force, float),
                       stiffness)


def test_rest_tip_is_straight_along_branch_axis():
    canopy = build_canopy([vertical_branch(attachment_position=(0.1, 0.2, 0.0))])
    assert canopy.branches[0].tip == pytest.approx([0.1, 0.2, 0.3])
    assert not canopy.branches[0].broken
    assert canopy.branches[0].tip_deviation() == 0.0


def test_tilted_branch_grows_in_the_yz_plane():
    canopy = build_canopy([vertical_branch(orientation_deg=30.0)])
    tip = canopy.branches[0].tip
    assert tip == pytest.approx([0.0, -0.3 * np.sin(np.deg2rad(30)), 0.3 * np.cos(np.deg2rad(30))])


def test_joint_count_per_branch():
    canopy = build_canopy([vertical_branch(), vertical_branch(attachment_position=(0.2, 0.0, 0.0))])
    assert canopy.branch_count == 2
    assert canopy.joint_count == 2 * (2 * (6 - 1) + 2)
    assert canopy.branches[0].joint_angles.size == 12


def test_build_is_deterministic():
    specs = [vertical_branch(), vertical_branch(attachment_position=(0.2, 0.0, 0.0), orientation_deg=-20)]
    a, b = build_canopy(specs, seed=3), build_canopy(specs, seed=3)
    for ba, bb in zip(a.branches, b.branches):
        assert np.array_equal(ba.particle_positions, bb.particle_positions)
        assert np.array_equal(ba.joint_angles, bb.joint_angles)


def test_build_rejects_empty_and_invalid_specs():
    with pytest.raises(ValueError, match="at least one branch"):
        build_canopy([])
    with pytest.raises(ValueError, match=r"canopy\[1\].dimension"):
        build_canopy([vertical_branch(), vertical_branch(dimension=-0.01)])
    with pytest.raises(ValueError, match=r"leafSpecs\[0\].attachParticleIndex"):
        build_canopy([vertical_branch(leaf_specs=[LeafSpec(attach_particle_index=9)])])


def test_bending_stiffness_sections():
    circular = bending_stiffness('circular', 0.01, 0.05)
    square = bending_stiffness('square', 0.01, 0.05)
    assert circular == pytest.approx(YOUNGS_MODULUS_BALSA * np.pi * 0.01 ** 4 / 64 / 0.05)
    assert square == pytest.approx(YOUNGS_MODULUS_BALSA * 0.01 ** 4 / 12 / 0.05)
    with pytest.raises(ValueError):
        bending_stiffness('hexagonal', 0.01, 0.05)


def test_thicker_sections_break_at_smaller_angles():
    assert rupture_angle(0.005, 0.05) == pytest.approx(0.35)
    assert rupture_angle(0.010, 0.05) == pytest.approx(0.175)
    assert rupture_angle(0.012, 0.05) == pytest.approx(0.0175 * 0.05 / 0.006)
    assert vertical_branch(length=0.2, particle_count=5).breaking_angle() == pytest.approx(0.175)
    assert vertical_branch(cross_section='square', dimension=0.005, length=0.2,
                           particle_count=5).breaking_angle() == pytest.approx(0.35)
    assert vertical_branch(break_angle=1.0).breaking_angle() == 1.0
    with pytest.raises(ValueError, match="breakAngle"):
        build_canopy([vertical_branch(break_angle=0.0)])


def test_default_threshold_breaks_a_thick_branch_that_a_fixed_one_spares():
    # about 0.21 rad at the base joint: above 0.175, below 0.35
    thick = vertical_branch(length=0.2, particle_count=5)
    for spec, broken in ((thick, True), (replace(thick, break_angle=0.35), False)):
        canopy = build_canopy([spec])
        relaxed = relax_deformation(canopy, [tip_load(canopy, [0.0, 35.0, 0.0])])
        assert relaxed.branches[0].broken is broken


def test_external_joint_defaults_to_twice_internal():
    spec = vertical_branch()
    assert spec.external_stiffness() == pytest.approx(2 * spec.internal_stiffness())
    assert vertical_branch(external_joint_stiffness=7.0).external_stiffness() == 7.0


def test_relax_without_loads_keeps_rest_state():
    canopy = build_canopy([vertical_branch()])
    relaxed = relax_deformation(canopy, [])
    assert np.array_equal(relaxed.branches[0].particle_positions, canopy.branches[0].particle_positions)
    assert total_disturbance(relaxed) == 0.0


def test_small_tip_load_matches_torsional_chain_deflection():
    spec = vertical_branch()
    canopy = build_canopy([spec])
    force = 0.5
    relaxed = relax_deformation(canopy, [tip_load(canopy, [0.0, force, 0.0])])

    # independent small-angle sum over the external joint and every internal joint
    kappa = YOUNGS_MODULUS_BALSA * np.pi * spec.dimension ** 4 / 64 / spec.link_length
    arms = [spec.length, spec.length] + [spec.length - i * spec.link_length for i in range(1, spec.link_count)]
    stiffnesses = [2 * kappa] + [kappa] * spec.link_count
    expected = force * sum(r * r / k for r, k in zip(arms, stiffnesses))

    deflection = relaxed.branches[0].tip[1] - canopy.branches[0].tip[1]
    assert deflection == pytest.approx(expected, rel=0.1)
    assert analytic_tip_deflection(spec, force) == pytest.approx(expected)


def test_breakage_latches_and_freezes_shape():
    canopy = build_canopy([vertical_branch()])
    broken = relax_deformation(canopy, [tip_load(canopy, [0.0, 200.0, 0.0])])
    assert broken.branches[0].broken

    unloaded = relax_deformation(broken, [])
    assert unloaded.branches[0].broken
    assert np.array_equal(unloaded.branches[0].joint_angles, broken.branches[0].joint_angles)
    assert np.array_equal(unloaded.branches[0].particle_positions, broken.branches[0].particle_positions)
    assert unloaded.branches[0].max_tip_deviation == broken.branches[0].max_tip_deviation


def test_zero_load_relaxation_returns_to_rest():
    canopy = build_canopy([vertical_branch()])
    bent = relax_deformation(canopy, [tip_load(canopy, [0.5, 1.0, 0.0])])
    assert not bent.branches[0].broken
    assert bent.branches[0].tip_deviation() > 1e-3

    back = relax_deformation(bent, [])
    assert np.linalg.norm(back.branches[0].tip - back.branches[0].rest_tip) < 1e-4
    assert back.branches[0].max_tip_deviation == bent.branches[0].max_tip_deviation


def test_energy_never_increases_during_relaxation():
    rng = np.random.default_rng(7)
    spec = vertical_branch(length=0.2, particle_count=5)
    canopy = build_canopy([spec])
    for _ in range(100):
        loads = []
        for _ in range(int(rng.integers(1, 5))):
            link = int(rng.integers(spec.link_count))
            start, end = canopy.branches[0].particle_positions[link:link + 2]
            point = start + rng.uniform() * (end - start)
            loads.append(ContactLoad(0, link, point, rng.normal(size=3) * 2.0, stiffness=5000.0))
        relaxed = relax_deformation(canopy, loads)
        trace = relaxed.energy_traces[0]
        assert trace.size >= 1
        assert np.all(np.diff(trace) <= 0.0)


def test_broken_branch_ignores_loads():
    canopy = build_canopy([vertical_branch()])
    broken = relax_deformation(canopy, [tip_load(canopy, [0.0, 200.0, 0.0])])
    pushed = relax_deformation(broken, [tip_load(broken, [50.0, 0.0, 0.0])])
    assert np.array_equal(pushed.branches[0].particle_positions, broken.branches[0].particle_positions)
    assert pushed.energy_traces[0].size == 0


def test_relax_validates_arguments():
    canopy = build_canopy([vertical_branch()])
    with pytest.raises(ValueError, match="iterations"):
        relax_deformation(canopy, [], iterations=0)
    with pytest.raises(ValueError, match="step_gain"):
        relax_deformation(canopy, [], step_gain=0.0)
    with pytest.raises(ValueError, match="branch 3"):
        relax_deformation(canopy, [ContactLoad(3, 0, np.zeros(3), np.ones(3))])
    with pytest.raises(ValueError, match="link 9"):
        relax_deformation(canopy, [ContactLoad(0, 9, np.zeros(3), np.ones(3))])


def test_closest_point_far_query():
    canopy = build_canopy([vertical_branch()])
    closest = closest_point_on_canopy(canopy, [1.0, 0.0, 0.15])
    assert closest.branch_index == 0
    assert closest.link_index == 2
    assert closest.distance == pytest.approx(1.0 - 0.005)
    assert closest.normal == pytest.approx([1.0, 0.0, 0.0])
    assert closest.point == pytest.approx([0.005, 0.0, 0.15])


def test_closest_point_on_axis_is_inside():
    canopy = build_canopy([vertical_branch()])
    closest = closest_point_on_canopy(canopy, [0.0, 0.0, 0.03])
    assert closest.distance <= 0.0
    assert closest.distance == pytest.approx(-0.005)
    assert np.linalg.norm(closest.normal) == pytest.approx(1.0)
    assert closest.normal[2] == pytest.approx(0.0)


def test_closest_point_matches_sampled_surface():
    canopy = build_canopy([vertical_branch(), vertical_branch(attachment_position=(0.1, 0.05, 0.0),
                                                               orientation_deg=25.0, dimension=0.005)])
    rng = np.random.default_rng(11)
    queries = rng.uniform([-0.1, -0.15, -0.05], [0.2, 0.15, 0.35], size=(100, 3))

    samples, radii = [], []
    for spec, branch in zip(canopy.specs, canopy.branches):
        for start, end in zip(branch.particle_positions[:-1], branch.particle_positions[1:]):
            t = np.linspace(0.0, 1.0, 2001)[:, None]
            samples.append(start + t * (end - start))
            radii.append(np.full(2001, spec.radius))
    samples, radii = np.vstack(samples), np.concatenate(radii)

    _, _, _, distances, _ = closest_points_on_canopy(canopy, queries)
    for query, distance in zip(queries, distances):
        expected = np.min(np.linalg.norm(samples - query, axis=1) - radii)
        assert abs(distance - expected) < 1e-3
        single = closest_point_on_canopy(canopy, query)
        assert single.distance == pytest.approx(distance, abs=1e-12)


def test_leaf_patch_is_part_of_the_surface():
    spec = vertical_branch(leaf_specs=[LeafSpec(attach_particle_index=2)])
    canopy = build_canopy([spec])
    patches = leaf_patches(canopy)
    assert len(patches) == 1
    anchor = canopy.branches[0].particle_positions[2]
    closest = closest_point_on_canopy(canopy, anchor + np.array([0.01, 0.02, 0.0]))
    assert closest.link_index == spec.link_count
    assert closest.distance == pytest.approx(0.01)
    assert closest.normal == pytest.approx([1.0, 0.0, 0.0])


def test_leaf_load_bends_the_petiole():
    spec = vertical_branch(leaf_specs=[LeafSpec(attach_particle_index=2)])
    canopy = build_canopy([spec])
    center = leaf_patches(canopy)[0][2]
    load = ContactLoad(0, spec.link_count, center, np.array([0.0, 0.0, -0.002]))
    relaxed = relax_deformation(canopy, [load])
    assert np.any(relaxed.branches[0].joint_angles[spec.joint_dof_count:])
    assert not relaxed.branches[0].broken


def test_total_disturbance_sums_branch_maxima():
    canopy = build_canopy([vertical_branch(), vertical_branch(attachment_position=(0.2, 0.0, 0.0))])
    assert total_disturbance(canopy) == 0.0
    branches = [replace(canopy.branches[0], max_tip_deviation=0.022),
                replace(canopy.branches[1], max_tip_deviation=0.013)]
    assert total_disturbance(replace(canopy, branches=branches)) == pytest.approx(0.035)


if __name__ == '__main__':
    pytest.main(["-v", __file__])
