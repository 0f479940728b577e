"""Small dense linear-algebra helpers shared by the controllers, the arm and the plant.

Vectors are plain ``numpy`` arrays of shape ``(3,)``; matrices are 2-D arrays.
All functions are pure and return new arrays.
"""
import numpy as np
import scipy.linalg

NORMALIZE_EPS = 1e-12
PINV_TOL = 1e-10
COND_LIMIT = 1e10


def as_vec3(v, name='vector'):
    """Converts ``v`` into a finite float array of shape (3,).

    Args:
        v (array-like): Three components.
        name (str): Quantity name used in error messages.

    Returns:
        np.ndarray: Float copy of ``v``.

    Raises:
        ValueError: If ``v`` does not have three finite components.
    """
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} should have 3 components but has {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} should be finite but is {arr}")
    return arr


def normalize(v, eps=NORMALIZE_EPS):
    """Returns ``v/‖v‖`` or the zero vector when ``‖v‖ ≤ eps``.

    A zero result means "no direction" to the caller.

    Args:
        v (array-like): Vector to normalize.
        eps (float): Norm threshold, must be positive.

    Returns:
        np.ndarray: Unit vector or zeros of the same shape.

    Examples:
        >>> normalize([2, 0, 0])
        array([1., 0., 0.])
    """
    if eps <= 0:
        raise ValueError(f"eps should be positive but is {eps}")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= eps:
        return np.zeros_like(v)
    return v / norm


def _check_finite_matrix(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} should be a 2-D matrix but has {M.ndim} dimensions")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} should only contain finite entries")
    return M


def pseudoinverse(M, tol=PINV_TOL):
    """Moore-Penrose pseudoinverse via a truncated singular value decomposition.

    Singular values below ``tol * σ_max`` are treated as zero, so rank-deficient and
    near-singular matrices (e.g. a stretched-out arm) give finite results.

    Args:
        M (array-like): Matrix of shape (rows, cols).
        tol (float): Relative truncation tolerance, ``tol >= 0``.

    Returns:
        np.ndarray: Matrix of shape (cols, rows).

    Raises:
        ValueError: If ``M`` has non-finite entries or ``tol`` is negative.
    """
    if tol < 0:
        raise ValueError(f"tol should be non-negative but is {tol}")
    M = _check_finite_matrix(M, 'M')
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return np.zeros((cols, rows))

    U, s, Vt = scipy.linalg.svd(M, full_matrices=False, lapack_driver='gesvd')
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((cols, rows))

    keep = s > tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def solve_normal_equations(D, b, cond_limit=COND_LIMIT, tol=PINV_TOL):
    """Least-squares solution ``argmin_g ‖D g − b‖²`` for a three-column ``D``.

    The normal equations ``DᵀD g = Dᵀb`` are solved directly while they are well
    conditioned. Above ``cond_limit`` the minimum-norm solution through the truncated
    pseudoinverse of ``D`` is returned instead.

    Args:
        D (array-like): Matrix of shape (R, 3).
        b (array-like): Right-hand side of length R.
        cond_limit (float): Condition estimate of ``DᵀD`` above which it counts as rank deficient.
        tol (float): Truncation tolerance for the pseudoinverse fallback.

    Returns:
        np.ndarray: Solution of shape (3,).

    Raises:
        ValueError: On non-finite input or mismatching shapes.
    """
    D = _check_finite_matrix(D, 'D')
    b = np.asarray(b, dtype=float).reshape(-1)
    if D.shape[1] != 3:
        raise ValueError(f"D should have 3 columns but has {D.shape[1]}")
    if D.shape[0] != b.size:
        raise ValueError(f"b should have {D.shape[0]} entries to match D but has {b.size}")
    if not np.all(np.isfinite(b)):
        raise ValueError("b should only contain finite entries")

    DtD = D.T @ D
    if condition_number(DtD) > cond_limit:
        return pseudoinverse(D, tol) @ b
    return scipy.linalg.solve(DtD, D.T @ b, assume_a='pos')


def condition_number(M):
    """2-norm condition number, ``inf`` for singular matrices."""
    s = scipy.linalg.svdvals(M)
    if s.size == 0 or s[-1] <= 0.0:
        return np.inf
    return s[0] / s[-1]


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0],
                     [0.0, c, -s],
                     [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s],
                     [0.0, 1.0, 0.0],
                     [-s, 0.0, c]])


if __name__ == '__main__':
    D = np.array([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    print(solve_normal_equations(D, [1, 3, 2, 3]))  # [2. 2. 3.]
