import numpy as np
import pytest

from src.canopy import BranchSpec, build_canopy
from src.tactile import SensorGeometry, TactileFrame, aggregate_window, sample_tactile, taxel_world_positions

EE = np.array([0.0, 0.0, 0.1])


def branch_at(x, y, dimension=0.005):
    return build_canopy([BranchSpec(cross_section='circular', dimension=dimension, length=0.3, particle_count=6,
                                    attachment_position=(x, y, 0.0))])


def test_taxel_layout_is_pad_major():
    geometry = SensorGeometry()
    local = geometry.local_taxel_positions()
    assert local.shape == (32, 3)
    assert geometry.taxel_count == 32
    # index = iz·n + iy within a pad
    assert local[0] == pytest.approx([0.015, 0.0025, -0.0075])
    assert local[1] == pytest.approx([0.015, 0.0075, -0.0075])
    assert local[4] == pytest.approx([0.015, 0.0025, -0.0025])
    assert local[16] == pytest.approx([0.015, -0.0175, -0.0075])
    assert geometry.pad_of(15) == 0
    assert geometry.pad_of(16) == 1


def test_taxel_world_positions_follow_rotation():
    geometry = SensorGeometry()
    quarter_turn = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    positions = taxel_world_positions(geometry, EE, quarter_turn)
    assert positions[0] == pytest.approx(EE + np.array([-0.0025, 0.015, -0.0075]))


def test_far_canopy_reads_exact_zeros():
    frame, loads = sample_tactile(SensorGeometry(), EE, branch_at(0.5, 0.5))
    assert frame.forces.shape == (32, 3)
    assert not np.any(frame.forces)
    assert loads == []


def test_contact_on_one_pad_only():
    geometry = SensorGeometry()
    frame, loads = sample_tactile(geometry, EE, branch_at(0.0195, 0.015))
    magnitudes = np.linalg.norm(frame.forces, axis=1)
    assert np.any(magnitudes[:16] > 0)
    assert not np.any(frame.forces[16:])
    assert all(geometry.pad_of(i) == 0 for i in np.flatnonzero(magnitudes))
    # the surface pushes the pad back towards the EE
    assert np.all(frame.forces[magnitudes > 0, 0] < 0)

    assert len(loads) == np.count_nonzero(magnitudes)
    reaction = np.sum([load.force for load in loads], axis=0)
    assert reaction == pytest.approx(-frame.world_forces().sum(axis=0))
    assert all(load.stiffness == geometry.contact_stiffness for load in loads)


@pytest.mark.parametrize('depth', [0.0005, 0.001])
def test_force_grows_linearly_with_depth(depth):
    geometry = SensorGeometry()
    radius = 0.0025
    x_axis = 0.015 + geometry.taxel_contact_radius + radius - depth
    frame, _ = sample_tactile(geometry, EE, branch_at(x_axis, 0.0125))
    expected = geometry.contact_stiffness * depth
    for iz in range(geometry.n):
        assert frame.forces[iz * geometry.n + 2] == pytest.approx([-expected, 0.0, 0.0], abs=1e-9)
    assert np.count_nonzero(np.linalg.norm(frame.forces, axis=1)) == geometry.n


def test_sensor_geometry_validation():
    with pytest.raises(ValueError, match="sensor.n"):
        SensorGeometry(n=0)
    with pytest.raises(ValueError, match="sensor.pitch"):
        SensorGeometry(pitch=-0.001)
    with pytest.raises(ValueError, match="sensor.padOffsets"):
        SensorGeometry(pad_offsets=((0.015, 0.01, 0.0),))


def make_frame(value, index, n_taxels=32):
    return TactileFrame(forces=np.full((n_taxels, 3), float(value)), taxel_positions=np.zeros((n_taxels, 3)),
                        index=index)


def test_window_has_n_times_j_rows():
    window = aggregate_window([make_frame(1, 1), make_frame(2, 2)], [0.0, 0.0, 0.1])
    assert window.rows == 64
    assert window.frame_count == 2
    assert window.taxel_count == 32
    assert window.f_ref == pytest.approx([1.0, 1.0, 1.0])
    assert window.x_ref == pytest.approx([0.0, 0.0, 0.1])


def test_window_is_frame_major():
    window = aggregate_window([make_frame(1, 1), make_frame(2, 2)], EE)
    assert np.all(window.forces[:32] == 1.0)
    assert np.all(window.forces[32:] == 2.0)
    assert np.all(window.last_frame_forces() == 2.0)


def test_window_of_zero_frames_is_rejected():
    with pytest.raises(ValueError, match="at least one frame"):
        aggregate_window([], EE)


def test_window_with_mismatched_frames_is_rejected():
    with pytest.raises(ValueError, match="mismatched frame sizes"):
        aggregate_window([make_frame(1, 1), make_frame(1, 2, n_taxels=16)], EE)
    with pytest.raises(ValueError, match="should contain 2 frames"):
        aggregate_window([make_frame(1, 1)], EE, expected_frames=2)


if __name__ == '__main__':
    pytest.main(["-v", __file__])
