"""Error states, stability checks, alignment and convergence metrics.

Conventions: ``E = X X^-1`` (truth times inverse estimate), so ``R~ = R R^^T``,
``p~ = p - R~ p^`` and so on. The translational error is stacked as an
``(n + 2, 3)`` array ``[eps_1 .. eps_n, v~, g~]`` with ``eps_i = p~ - p~_i``;
flattening it row-major gives the 3(n+2)-vector ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dynamics import TrueState, TruthStream
from .gains import build_lti, closed_loop
from .lie import GroupElement, compose, inverse, project_to_so3, rotation_angle
from .observer import ObserverLog, ObserverState


@dataclass(frozen=True)
class ErrorVector:
    eps: np.ndarray      # (n, 3)
    v_tilde: np.ndarray
    g_tilde: np.ndarray
    p_tilde: np.ndarray  # kept for alignment; not part of x

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.eps, self.v_tilde, self.g_tilde])

    @property
    def x(self) -> np.ndarray:
        return self.stacked.ravel()


@dataclass(frozen=True)
class AttitudeError:
    r_tilde: np.ndarray
    g_breve: np.ndarray  # R~^T g


@dataclass(frozen=True)
class AlignmentTransform:
    r_star: np.ndarray
    p_star: np.ndarray

    @classmethod
    def identity(cls) -> "AlignmentTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, est: ObserverState) -> ObserverState:
        R = self.r_star
        return ObserverState(R @ est.r_hat, R @ est.p_hat + self.p_star, R @ est.v_hat,
                             R @ est.g_hat, est.landmarks_hat @ R.T + self.p_star, est.t)


def truth_group(truth: TrueState, g) -> GroupElement:
    return GroupElement(truth.r, truth.p, truth.v, g, truth.landmarks)


def error_group(truth: TrueState, g, est: ObserverState) -> GroupElement:
    if truth.n != est.n:
        raise ValueError(f"landmark count mismatch: {truth.n} vs {est.n}")
    return compose(truth_group(truth, g), inverse(est.as_group()))


def error_vector(truth: TrueState, g, est: ObserverState) -> ErrorVector:
    E = error_group(truth, g, est)
    return ErrorVector(E.x1 - E.xL, E.x2.copy(), E.x3.copy(), E.x1.copy())


def attitude_error(truth: TrueState, est: ObserverState, g) -> AttitudeError:
    rt = truth.r @ est.r_hat.T
    return AttitudeError(rt, rt.T @ np.asarray(g, dtype=float))


# -- batched versions over logs -------------------------------------------------

@dataclass
class ErrorLog:
    t: np.ndarray
    r_tilde: np.ndarray  # (K, 3, 3)
    p_tilde: np.ndarray  # (K, 3)
    x: np.ndarray        # (K, n+2, 3)
    g_breve: np.ndarray  # (K, 3)


def error_log(truth: TruthStream, est: ObserverLog, rows=None) -> ErrorLog:
    """Errors at the logged observer samples.

    ``truth`` is the half-step stream used for the run; rows ``0..rows-1`` of
    ``est`` are used (default: all rows that were actually integrated).
    """
    rows = est.valid_rows() if rows is None else rows
    idx = 2 * est.log_every * np.arange(rows)
    R, p, v = truth.r[idx], truth.p[idx], truth.v[idx]
    g = truth.gravity
    Rt = np.einsum("kij,klj->kil", R, est.r[:rows])
    p_t = p - np.einsum("kij,kj->ki", Rt, est.p[:rows])
    v_t = v - np.einsum("kij,kj->ki", Rt, est.v[:rows])
    g_t = g - np.einsum("kij,kj->ki", Rt, est.g[:rows])
    pl_t = truth.landmarks[None] - np.einsum("kij,kmj->kmi", Rt, est.landmarks[:rows])
    x = np.concatenate([p_t[:, None, :] - pl_t, v_t[:, None, :], g_t[:, None, :]], axis=1)
    gb = np.einsum("kji,j->ki", Rt, g)
    return ErrorLog(est.t[:rows].copy(), Rt, p_t, x, gb)


def lti_reference(t, x0, L) -> np.ndarray:
    """``x(t) = expm((A - L C) t) x(0)`` for each time, x in ``(n+2, 3)`` layout.

    Acting on the ``(n+2, 3)`` layout with ``A - L C`` is the same as acting on
    the flattened vector with ``(A - L C) kron I3``.
    """
    M = closed_loop(build_lti(L.shape[1]), L)
    x0 = np.asarray(x0, dtype=float)
    return np.array([expm(M * tk) @ x0 for tk in np.asarray(t) - t[0]])


def lti_residual(t, x, L, noiseless: bool = True) -> float:
    """Max over samples of ``|x(t_k) - x_ref(t_k)| / max(1, |x(0)|)``."""
    if not noiseless:
        raise ValueError("the LTI comparison is only meaningful for noiseless runs")
    x = np.asarray(x, dtype=float)
    ref = lti_reference(t, x[0], L)
    scale = max(1.0, float(np.linalg.norm(x[0])))
    return float(np.max(np.linalg.norm((x - ref).reshape(len(x), -1), axis=1)) / scale)


# -- reduced attitude ----------------------------------------------------------

def lyapunov_values(g_breve, g):
    """``(L1, L2) = (|g - g_breve|^2 / 2, |g + g_breve|^2 / 2)``; works on stacks."""
    gb = np.asarray(g_breve, dtype=float)
    g = np.asarray(g, dtype=float)
    return (0.5 * np.sum((g - gb) ** 2, axis=-1), 0.5 * np.sum((g + gb) ** 2, axis=-1))


def attitude_field(g_breve, g, k_r: float) -> np.ndarray:
    """Reduced attitude vector field with zero translational error."""
    gb = np.asarray(g_breve, dtype=float)
    return k_r * np.cross(np.cross(gb, g), gb)


def lyapunov_rate(g_breve, g, k_r: float):
    """Predicted ``dL1/dt = -k_R |g x g_breve|^2``."""
    c = np.cross(np.asarray(g, dtype=float), np.asarray(g_breve, dtype=float))
    return -k_r * np.sum(c * c, axis=-1)


def lyapunov_fd_constant(g, k_r: float) -> float:
    """Bound on ``|L1'''| / 6`` for the exact flow, so central differences at
    step ``h`` are accurate to ``C h^2``.

    With ``G = |g|^2`` and ``u = g_breve . g``, ``u' = k_R (G^2 - u^2)`` solves to
    ``u = G tanh(k_R G t + c)``; ``L1 = G - u`` and ``|tanh'''| <= 2``.
    """
    G = float(np.dot(g, g))
    kappa = k_r * G
    return G * kappa ** 3 / 3.0


@dataclass(frozen=True)
class LyapunovCheck:
    max_deviation: float
    tolerance: float
    monotone: bool
    passed: bool


def lyapunov_rate_check(t, g_breve, g, k_r: float, x_norm=None, x_tol=None):
    """Compare central differences of L1 with ``-k_R |g x g_breve|^2``.

    ``x_norm`` holds ``|x|`` along the run. A nonzero ``x`` shifts the rate by at
    most ``2 k_R |g|^3 |x|``, which is added to the tolerance; runs where that
    shift exceeds a tenth of the difference tolerance (or ``|x| > x_tol`` when
    given) are refused.

    The difference bound ``C h^2`` is tight where ``g_breve . g`` crosses zero.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 3:
        raise ValueError("need at least three samples")
    h = float(t[1] - t[0])
    tol = max(1e-6, lyapunov_fd_constant(g, k_r) * h * h)
    if x_norm is not None:
        shift = 2.0 * k_r * float(np.linalg.norm(g)) ** 3
        xmax = float(np.max(np.abs(x_norm)))
        if xmax > (0.1 * tol / shift if x_tol is None else x_tol):
            raise ValueError("translational error is not zero; the L1 identity does not apply")
        tol += shift * xmax
    L1, _ = lyapunov_values(g_breve, g)
    fd = (L1[2:] - L1[:-2]) / (2.0 * h)
    pred = lyapunov_rate(np.asarray(g_breve)[1:-1], g, k_r)
    dev = float(np.max(np.abs(fd - pred)))
    # allow rounding-level increments once L1 has settled
    monotone = bool(np.all(np.diff(L1) <= 1e-9 * max(1.0, float(L1[0]))))
    return LyapunovCheck(dev, tol, monotone, dev <= tol and monotone)


def linearization_check(g, k_r: float, h: float = 1e-3):
    """Numerical Jacobian of the reduced attitude field at ``g_breve = -g``.

    Central differences in ambient coordinates; the field is quadratic so the
    differences are exact up to rounding. Returns ``(jacobian, eigenvalues)``
    with eigenvalues sorted ascending.
    """
    if not k_r > 0:
        raise ValueError("k_R must be positive")
    g = np.asarray(g, dtype=float)
    J = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[:, k] = (attitude_field(-g + e, g, k_r) - attitude_field(-g - e, g, k_r)) / (2.0 * h)
    return J, np.sort(np.linalg.eigvals(J).real)


def linearization_matrix(g, k_r: float) -> np.ndarray:
    """``k_R (|g|^2 I - g g^T)``."""
    g = np.asarray(g, dtype=float)
    return k_r * (np.dot(g, g) * np.eye(3) - np.outer(g, g))


def attitude_residual(t, g_breve, g_tilde, g, k_r: float):
    """Residual of the reduced attitude dynamics against its zero-error part.

    Returns ``(residual_norms, bounds)`` at interior samples, with the
    derivative from central differences and the bound ``k_R |g|^2 |g~|``.
    """
    t = np.asarray(t, dtype=float)
    gb = np.asarray(g_breve, dtype=float)
    h = float(t[1] - t[0])
    d = (gb[2:] - gb[:-2]) / (2.0 * h)
    res = np.linalg.norm(d - attitude_field(gb[1:-1], g, k_r), axis=1)
    G = float(np.dot(g, g))
    bound = k_r * G * np.linalg.norm(np.asarray(g_tilde)[1:-1], axis=1)
    return res, bound


def consistent_estimate(truth: TrueState, g, r_tilde) -> ObserverState:
    """Estimate whose error is ``E = M(r_tilde, 0, 0, 0, 0)``: zero translational error."""
    Rt = np.asarray(r_tilde, dtype=float)
    return ObserverState(Rt.T @ truth.r, Rt.T @ truth.p, Rt.T @ truth.v,
                         Rt.T @ np.asarray(g, dtype=float), truth.landmarks @ Rt, truth.t)


# -- alignment and metrics -------------------------------------------------------

def alignment_transform(r_tilde, p_tilde, window: float = 0.1) -> AlignmentTransform:
    """Chordal mean of ``R~`` and mean of ``p~`` over the final ``window`` fraction."""
    r_tilde = np.asarray(r_tilde, dtype=float)
    K = r_tilde.shape[0]
    m = int(np.floor(window * K))
    if not 0 < window <= 1 or m < 1:
        raise ValueError("alignment window is empty")
    r_star = project_to_so3(r_tilde[-m:].mean(axis=0))
    p_star = np.asarray(p_tilde, dtype=float)[-m:].mean(axis=0)
    return AlignmentTransform(r_star, p_star)


METRIC_COLUMNS = ("t", "err_rot_deg", "err_pos_m", "err_vel_mps", "err_grav_mps2",
                  "landmark_rmse_m", "lyap1", "norm_x")


def metrics(truth: TrueState, g, est: ObserverState, align: AlignmentTransform) -> dict:
    """Aligned error metrics for a single sample."""
    g = np.asarray(g, dtype=float)
    a = align.apply(est)
    att = attitude_error(truth, est, g)
    ev = error_vector(truth, g, est)
    diff = truth.landmarks - a.landmarks_hat
    return {
        "t": float(truth.t),
        "err_rot_deg": float(np.degrees(rotation_angle(truth.r @ a.r_hat.T))),
        "err_pos_m": float(np.linalg.norm(truth.p - a.p_hat)),
        "err_vel_mps": float(np.linalg.norm(truth.v - a.v_hat)),
        "err_grav_mps2": float(np.linalg.norm(g - a.g_hat)),
        "landmark_rmse_m": float(np.sqrt(np.mean(np.sum(diff * diff, axis=1)))),
        "lyap1": float(lyapunov_values(att.g_breve, g)[0]),
        "norm_x": float(np.linalg.norm(ev.x)),
    }


def metrics_log(truth: TruthStream, est: ObserverLog, align: AlignmentTransform, rows=None):
    """Vectorised :func:`metrics` over logged samples; returns a dict of arrays."""
    rows = est.valid_rows() if rows is None else rows
    idx = 2 * est.log_every * np.arange(rows)
    R, p, v = truth.r[idx], truth.p[idx], truth.v[idx]
    g = truth.gravity
    Rs, ps = align.r_star, align.p_star
    Ra = np.einsum("ij,kjl->kil", Rs, est.r[:rows])
    rel = np.einsum("kij,klj->kil", R, Ra)
    c = np.clip((np.trace(rel, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
    pa = est.p[:rows] @ Rs.T + ps
    va = est.v[:rows] @ Rs.T
    ga = est.g[:rows] @ Rs.T
    la = est.landmarks[:rows] @ Rs.T + ps
    diff = truth.landmarks[None] - la
    err = error_log(truth, est, rows)
    return {
        "t": est.t[:rows].copy(),
        "err_rot_deg": np.degrees(np.arccos(c)),
        "err_pos_m": np.linalg.norm(p - pa, axis=1),
        "err_vel_mps": np.linalg.norm(v - va, axis=1),
        "err_grav_mps2": np.linalg.norm(g - ga, axis=1),
        "landmark_rmse_m": np.sqrt(np.mean(np.sum(diff * diff, axis=2), axis=1)),
        "lyap1": lyapunov_values(err.g_breve, g)[0],
        "norm_x": np.linalg.norm(err.x.reshape(rows, -1), axis=1),
    }
