"""SO(3) and the extended-pose group SE_{3+n}(3).

A group element bundles one rotation with three vector columns
(position, velocity, gravity) and ``n`` landmark columns::

    M(R, x1, x2, x3, XL) = [ R   x1 x2 x3 XL ]
                           [ 0      I_{3+n}  ]

Elements are stored structurally; :func:`embed` builds the dense
``(6+n) x (6+n)`` matrix and is only meant for checks.

Landmark columns are stored as an ``(n, 3)`` array (one row per landmark),
which is the transpose of the ``3 x n`` block in the matrix layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-9
SKEW_TOL = 1e-9


def hat(w) -> np.ndarray:
    """Cross-product matrix, ``hat(w) @ y == np.cross(w, y)``."""
    w0, w1, w2 = np.asarray(w, dtype=float)
    return np.array([[0.0, -w2, w1],
                     [w2, 0.0, -w0],
                     [-w1, w0, 0.0]])


def vee(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (3, 3):
        raise ValueError(f"vee expects a 3x3 matrix, got shape {s.shape}")
    if np.max(np.abs(s + s.T)) > SKEW_TOL:
        raise ValueError("vee: matrix is not skew-symmetric")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def rotation_from_angle_axis(theta: float, axis) -> np.ndarray:
    """Rodrigues formula ``I + sin(t) [v]x + (1 - cos(t)) [v]x^2``.

    The axis must already be a unit vector; no silent normalization.
    """
    v = np.asarray(axis, dtype=float)
    if v.shape != (3,):
        raise ValueError("axis must be a 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"axis must be unit length, |v| = {np.linalg.norm(v)!r}")
    K = hat(v)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def exp_so3(phi) -> np.ndarray:
    """Matrix exponential of ``hat(phi)``; safe at small angles."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    K = hat(phi)
    if theta2 < 1e-12:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def log_so3(R) -> np.ndarray:
    """Rotation vector of ``R`` (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        if axis @ w < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * w


def rotation_angle(R) -> float:
    """Angle of ``R`` in radians, via the clamped trace formula."""
    c = np.clip((np.trace(np.asarray(R)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(c))


def right_jacobian_inv(phi) -> np.ndarray:
    """Inverse right Jacobian of SO(3).

    If ``R(t) = R0 exp(phi(t))`` then ``phi' = Jr^{-1}(phi) w`` where ``w`` is the
    body rate.
    """
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    K = hat(phi)
    if theta2 < 1e-8:
        c = 1.0 / 12.0 + theta2 / 720.0
    else:
        theta = np.sqrt(theta2)
        c = 1.0 / theta2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + c * (K @ K)


def orthogonality_defect(R) -> float:
    R = np.asarray(R)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation (polar projection) of an arbitrary 3x3 matrix."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def orthonormalize(R) -> np.ndarray:
    """Re-project ``R`` only if its defect exceeds the tolerance."""
    R = np.asarray(R, dtype=float)
    if orthogonality_defect(R) > ORTHO_TOL:
        return project_to_so3(R)
    return R


def is_rotation(R, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R)
    return (R.shape == (3, 3) and orthogonality_defect(R) <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


@dataclass(frozen=True)
class GroupElement:
    """Element ``M(r, x1, x2, x3, xL)`` of SE_{3+n}(3)."""

    r: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    xL: np.ndarray  # (n, 3)

    def __post_init__(self):
        for name in ("r", "x1", "x2", "x3", "xL"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.xL.ndim != 2 or self.xL.shape[1] != 3:
            raise ValueError(f"xL must have shape (n, 3), got {self.xL.shape}")

    @property
    def n(self) -> int:
        return self.xL.shape[0]

    @classmethod
    def identity(cls, n: int) -> "GroupElement":
        z = np.zeros(3)
        return cls(np.eye(3), z, z, z, np.zeros((n, 3)))

    def columns(self) -> np.ndarray:
        """All translation-like columns stacked as rows, shape ``(3+n, 3)``."""
        return np.vstack([self.x1, self.x2, self.x3, self.xL])


@dataclass(frozen=True)
class TangentElement:
    """Element ``V(hat(w), xi1, xi2, xi3, xiL)`` of the Lie algebra."""

    w: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    xiL: np.ndarray  # (n, 3)

    def __post_init__(self):
        for name in ("w", "xi1", "xi2", "xi3", "xiL"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.xiL.shape[0]


def embed(a: GroupElement) -> np.ndarray:
    n = a.n
    X = np.eye(6 + n)
    X[:3, :3] = a.r
    X[:3, 3:] = a.columns().T
    return X


def embed_tangent(v: TangentElement) -> np.ndarray:
    n = v.n
    V = np.zeros((6 + n, 6 + n))
    V[:3, :3] = hat(v.w)
    V[:3, 3:] = np.vstack([v.xi1, v.xi2, v.xi3, v.xiL]).T
    return V


def from_matrix(X) -> GroupElement:
    X = np.asarray(X, dtype=float)
    n = X.shape[0] - 6
    if n < 0 or X.shape != (6 + n, 6 + n):
        raise ValueError("not an SE_{3+n}(3) matrix")
    cols = X[:3, 3:].T
    return GroupElement(X[:3, :3], cols[0], cols[1], cols[2], cols[3:])


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.n != b.n:
        raise ValueError(f"landmark count mismatch: {a.n} vs {b.n}")
    R = a.r
    return GroupElement(
        R @ b.r,
        R @ b.x1 + a.x1,
        R @ b.x2 + a.x2,
        R @ b.x3 + a.x3,
        b.xL @ R.T + a.xL,
    )


def inverse(a: GroupElement) -> GroupElement:
    Rt = a.r.T
    return GroupElement(Rt, -Rt @ a.x1, -Rt @ a.x2, -Rt @ a.x3, -a.xL @ a.r)


def lie_bracket(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"bracket needs equal square matrices, got {a.shape} and {b.shape}")
    return a @ b - b @ a


@dataclass(frozen=True)
class StructMatrices:
    H: np.ndarray
    S: np.ndarray
    H_r: np.ndarray
    S_r: np.ndarray
    Q: np.ndarray
    r_vectors: np.ndarray  # (6+n, n), column i is r_i


def shift_matrix(n: int) -> np.ndarray:
    """``S``: copies velocity into the position slot and gravity into velocity."""
    S = np.zeros((3 + n, 3 + n))
    S[1, 0] = 1.0
    S[2, 1] = 1.0
    return S


def reduced_shift_matrix(n: int) -> np.ndarray:
    S_r = np.zeros((2 + n, 2 + n))
    S_r[0, 2:] = 1.0
    S_r[1, 0] = 1.0
    return S_r


def struct_matrices(n: int) -> StructMatrices:
    if n < 1:
        raise ValueError("n must be >= 1")
    S = shift_matrix(n)
    S_r = reduced_shift_matrix(n)
    H = np.zeros((6 + n, 6 + n))
    H[3:, 3:] = S
    H_r = np.zeros((5 + n, 5 + n))
    H_r[3:, 3:] = S_r
    Q = np.zeros((3, 6 + n))
    Q[:, :3] = np.eye(3)
    r = np.zeros((6 + n, n))
    r[3, :] = -1.0
    r[6:, :] = np.eye(n)
    return StructMatrices(H, S, H_r, S_r, Q, r)


def landmark_vector(n: int, i: int) -> np.ndarray:
    """``r_i = [0, 0, 0, -1, 0, 0, e_i]`` for a 0-based landmark index."""
    if not 0 <= i < n:
        raise IndexError(f"landmark index {i} out of range for n={n}")
    r = np.zeros(6 + n)
    r[3] = -1.0
    r[6 + i] = 1.0
    return r


def group_action_measure(x_inv: GroupElement, i: int) -> np.ndarray:
    """``X^{-1} r_i`` computed structurally (0-based ``i``).

    With ``x_inv = inverse(X)`` the top three entries are ``R^T (p - p_i)``.
    """
    n = x_inv.n
    r = landmark_vector(n, i)
    top = -x_inv.x1 + x_inv.xL[i]
    return np.concatenate([top, r[3:]])
