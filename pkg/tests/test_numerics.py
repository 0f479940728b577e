import numpy as np
import pytest

from src.numerics import as_vec3, condition_number, normalize, pseudoinverse, rot_x, rot_y, solve_normal_equations


def test_normalize_axis_vector():
    assert np.array_equal(normalize([2, 0, 0]), [1.0, 0.0, 0.0])


def test_normalize_zero_returns_zero():
    assert np.array_equal(normalize([0, 0, 0]), [0.0, 0.0, 0.0])


def test_normalize_diagonal():
    assert normalize([1, 1, 1]) == pytest.approx([0.5774] * 3, abs=1e-4)


def test_normalize_rejects_non_positive_eps():
    with pytest.raises(ValueError):
        normalize([1, 0, 0], eps=0.0)


def test_as_vec3_names_the_quantity():
    with pytest.raises(ValueError, match="target should have 3 components"):
        as_vec3([1, 2], 'target')
    with pytest.raises(ValueError, match="target should be finite"):
        as_vec3([1, np.nan, 2], 'target')


def test_pseudoinverse_identity_and_zero():
    assert np.allclose(pseudoinverse(np.eye(3)), np.eye(3))
    pinv = pseudoinverse(np.zeros((2, 3)))
    assert pinv.shape == (3, 2)
    assert not np.any(pinv)


def test_pseudoinverse_of_full_rank_matrix_is_inverse():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(6, 6)) + 6 * np.eye(6)
    assert np.linalg.norm(pseudoinverse(M) @ M - np.eye(6)) < 1e-9


def test_pseudoinverse_satisfies_moore_penrose_conditions():
    rng = np.random.default_rng(2)
    for _ in range(200):
        rows, cols = rng.integers(1, 9, size=2)
        rank = int(rng.integers(1, min(rows, cols) + 1))
        M = rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, cols))
        P = pseudoinverse(M)
        # rounding grows with the conditioning of the product
        kappa = np.linalg.norm(M, 2) * np.linalg.norm(P, 2)
        atol = 1e-12 * kappa * max(1.0, np.linalg.norm(M, 2), np.linalg.norm(P, 2))
        assert np.allclose(M @ P @ M, M, rtol=0.0, atol=atol)
        assert np.allclose(P @ M @ P, P, rtol=0.0, atol=atol)
        assert np.allclose((M @ P).T, M @ P, rtol=0.0, atol=atol)
        assert np.allclose((P @ M).T, P @ M, rtol=0.0, atol=atol)
        assert np.linalg.matrix_rank(P) == rank


def test_pseudoinverse_truncates_near_singular_values():
    M = np.diag([1.0, 1e-14, 2.0])
    pinv = pseudoinverse(M)
    assert np.all(np.isfinite(pinv))
    assert abs(pinv[1, 1]) < 1e-12


def test_pseudoinverse_rejects_bad_input():
    with pytest.raises(ValueError):
        pseudoinverse(np.array([[np.inf, 0.0]]))
    with pytest.raises(ValueError):
        pseudoinverse(np.eye(2), tol=-1.0)


def test_solve_normal_equations_orthonormal_rows():
    assert solve_normal_equations(np.eye(3), [1, 2, 3]) == pytest.approx([1, 2, 3])


def test_solve_normal_equations_repeated_row():
    D = np.array([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    assert solve_normal_equations(D, [1, 3, 2, 3]) == pytest.approx([2, 2, 3])


def test_solve_normal_equations_rank_deficient_gives_minimum_norm():
    D = np.array([[1, 0, 0], [1, 0, 0]], dtype=float)
    assert solve_normal_equations(D, [1, 1]) == pytest.approx([1, 0, 0], abs=1e-12)


def test_solve_normal_equations_matches_lstsq():
    rng = np.random.default_rng(1)
    for _ in range(50):
        D = rng.normal(size=(64, 3))
        b = rng.normal(size=64)
        expected = np.linalg.lstsq(D, b, rcond=None)[0]
        assert np.allclose(solve_normal_equations(D, b), expected, atol=1e-10)


def test_solve_normal_equations_shape_errors():
    with pytest.raises(ValueError, match="3 columns"):
        solve_normal_equations(np.ones((4, 2)), np.ones(4))
    with pytest.raises(ValueError, match="to match D"):
        solve_normal_equations(np.ones((4, 3)), np.ones(3))


def test_condition_number_of_singular_matrix_is_infinite():
    assert condition_number(np.zeros((3, 3))) == np.inf
    assert condition_number(np.diag([4.0, 2.0, 1.0])) == pytest.approx(4.0)


def test_rotations_turn_the_right_axes():
    assert rot_x(np.pi / 2) @ [0.0, 1.0, 0.0] == pytest.approx([0.0, 0.0, 1.0])
    assert rot_y(np.pi / 2) @ [0.0, 0.0, 1.0] == pytest.approx([1.0, 0.0, 0.0])
    for R in (rot_x(0.3), rot_y(-1.2)):
        assert np.allclose(R.T @ R, np.eye(3))
        assert np.linalg.det(R) == pytest.approx(1.0)


if __name__ == '__main__':
    pytest.main(["-v", __file__])
