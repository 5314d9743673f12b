"""Independent reference computations used by the tests.

Everything here works on dense matrices or closed forms and shares no code
path with the package beyond plain numpy/scipy.
"""

import numpy as np
from scipy.linalg import expm


def skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def dense_element(R, cols):
    """``[[R, C], [0, I]]`` with ``cols`` the 3-vectors stacked as rows."""
    cols = np.asarray(cols, dtype=float)
    k = cols.shape[0]
    X = np.eye(3 + k)
    X[:3, :3] = R
    X[:3, 3:] = cols.T
    return X


def dense_tangent(w, cols):
    cols = np.asarray(cols, dtype=float)
    k = cols.shape[0]
    V = np.zeros((3 + k, 3 + k))
    V[:3, :3] = skew(w)
    V[:3, 3:] = cols.T
    return V


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rodrigues_expm(theta, axis):
    """Rotation via the general matrix exponential (scaling and squaring)."""
    return expm(theta * skew(axis))


def shift_block(n):
    """Dense ``H`` built from its action: position slot <- velocity, velocity <- gravity."""
    H = np.zeros((6 + n, 6 + n))
    H[4, 3] = 1.0
    H[5, 4] = 1.0
    return H


def group_form_observer_rhs(R, p, v, g, P, omega, accel, Y, k_r, kp, kv, kg, Gamma, g_known):
    """``[X, H] + X V + Delta X`` assembled densely, returned as the top block rows.

    ``V`` carries the body rate and specific force; ``Delta`` carries sigma and
    the output injections built from ``z_j = R y_j - p + p_j``.
    """
    n = P.shape[0]
    X = dense_element(R, np.vstack([p, v, g, P]))
    H = shift_block(n)
    V = dense_tangent(omega, np.vstack([np.zeros(3), accel, np.zeros(3), np.zeros((n, 3))]))
    z = np.array([R @ Y[j] - p + P[j] for j in range(n)])
    sigma = k_r * np.cross(g, g_known)
    delta_cols = np.vstack([kp @ z, kv @ z, kg @ z, Gamma @ z])
    D = dense_tangent(sigma, delta_cols)
    Xdot = X @ H - H @ X + X @ V + D @ X
    return Xdot[:3, :3], Xdot[:3, 3], Xdot[:3, 4], Xdot[:3, 5], Xdot[:3, 6:].T


def char_poly_gain_single(eigs):
    """For ``n = 1`` the observer matrix is a companion form; ``L`` equals the
    characteristic-polynomial coefficients of the requested spectrum."""
    c = np.real(np.poly(eigs))
    return c[1:]


def sorted_spectrum_distance(a, b):
    """Distance after lexicographic sorting; a cruder matching than an optimal
    assignment but adequate when both sets are well separated or equal."""
    key = lambda z: (round(z.real, 6), round(z.imag, 6))
    a = sorted(np.asarray(a, complex), key=key)
    b = sorted(np.asarray(b, complex), key=key)
    return max(abs(x - y) for x, y in zip(a, b))


def circle_truth(t):
    p = 3.0 * np.array([np.cos(t), np.sin(t), 1.0])
    v = 3.0 * np.array([-np.sin(t), np.cos(t), 0.0])
    a = 3.0 * np.array([-np.cos(t), -np.sin(t), 0.0])
    return p, v, a


def reduced_attitude_closed_form(t, u0, G, k_r):
    """``u = g_breve . g`` under the zero-translation-error flow: ``u' = k_R (G^2 - u^2)``."""
    return G * np.tanh(k_r * G * t + np.arctanh(u0 / G))
