"""The SLAM observer: state, gains, innovation and time integration.

Estimates ``(R^, p^, v^, g^, p^_1..p^_n)`` from body rates, specific force and
body-frame landmark positions. With ``z_j = R^ y_j - p^ + p^_j`` and
``sigma = k_R (g^ x g)``::

    R^'   = R^ hat(omega + R^T sigma)
    p^'   = sigma x p^   + v^          + sum_j kp_j z_j
    v^'   = sigma x v^   + g^ + R^ a   + sum_j kv_j z_j
    g^'   = sigma x g^                 + sum_j kg_j z_j
    p^_i' = sigma x p^_i               + sum_j Gamma_ij z_j
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .dynamics import MeasurementFrame, MeasurementStream
from .gains import GainDesign, decompose_gains
from .lie import GroupElement, hat, is_rotation, rotation_from_angle_axis

GAIN_TOL = 1e-10


@dataclass(frozen=True)
class ObserverState:
    r_hat: np.ndarray
    p_hat: np.ndarray
    v_hat: np.ndarray
    g_hat: np.ndarray
    landmarks_hat: np.ndarray  # (n, 3)
    t: float = 0.0

    def __post_init__(self):
        for name in ("r_hat", "p_hat", "v_hat", "g_hat", "landmarks_hat"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        if self.landmarks_hat.ndim != 2 or self.landmarks_hat.shape[1] != 3:
            raise ValueError("landmarks_hat must have shape (n, 3)")
        if not is_rotation(self.r_hat):
            raise ValueError("r_hat is not a rotation matrix")

    @property
    def n(self) -> int:
        return self.landmarks_hat.shape[0]

    def as_group(self) -> GroupElement:
        return GroupElement(self.r_hat, self.p_hat, self.v_hat, self.g_hat, self.landmarks_hat)

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in
                   (self.r_hat, self.p_hat, self.v_hat, self.g_hat, self.landmarks_hat))


def initial_state(n: int, angle: float = 0.5 * np.pi, axis=(1.0, 1.0, 1.0)) -> ObserverState:
    """Default start: rotated attitude estimate, every other estimate zero.

    ``axis`` is normalised here before it reaches the Rodrigues formula.
    """
    axis = np.asarray(axis, dtype=float)
    r = rotation_from_angle_axis(angle, axis / np.linalg.norm(axis))
    z = np.zeros(3)
    return ObserverState(r, z, z, z, np.zeros((n, 3)))


@dataclass(frozen=True)
class ObserverGains:
    """Observer gains plus the designed ``L`` they came from.

    ``Gamma`` may be given densely, or (for large ``n``) as
    ``diag(gamma_diag) + gamma_u @ gamma_v.T`` with ``Gamma`` left ``None``.
    """

    k_r: float
    K_p: np.ndarray
    K_v: np.ndarray
    K_g: np.ndarray
    Gamma: Optional[np.ndarray]
    L: np.ndarray
    gamma_diag: Optional[np.ndarray] = field(default=None, repr=False)
    gamma_u: Optional[np.ndarray] = field(default=None, repr=False)
    gamma_v: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.k_r > 0:
            raise ValueError("k_R must be positive")
        n = self.L.shape[1]
        for name in ("K_p", "K_v", "K_g"):
            vec = np.asarray(getattr(self, name), dtype=float).ravel()
            if vec.size != n:
                raise ValueError(f"{name} must have length {n}")
            object.__setattr__(self, name, vec)
        if self.Gamma is None and self.gamma_diag is None:
            raise ValueError("Gamma or its diagonal-plus-low-rank factors are required")
        if not np.allclose(self.L[n], self.K_v, rtol=0, atol=GAIN_TOL) or \
                not np.allclose(self.L[n + 1], self.K_g, rtol=0, atol=GAIN_TOL):
            raise ValueError("K_v, K_g disagree with the last two rows of L")
        err = np.max(np.abs(np.outer(np.ones(n), self.K_p) - self.gamma_matrix() - self.L[:n]))
        if err > GAIN_TOL * max(1.0, float(np.max(np.abs(self.L)))):
            raise ValueError(f"1 K_p^T - Gamma differs from L[:n] by {err:.3e}")

    @property
    def n(self) -> int:
        return self.L.shape[1]

    def gamma_matrix(self) -> np.ndarray:
        if self.Gamma is not None:
            return np.asarray(self.Gamma, dtype=float)
        return np.diag(self.gamma_diag) + self.gamma_u @ self.gamma_v.T

    def apply_gamma(self, z: np.ndarray) -> np.ndarray:
        """``Gamma @ z`` for ``z`` of shape ``(n, 3)``."""
        if self.gamma_diag is not None:
            return self.gamma_diag[:, None] * z + self.gamma_u @ (self.gamma_v.T @ z)
        return self.Gamma @ z

    def kernel_args(self):
        """Gain arguments in the layout of the integration kernels."""
        n = self.n
        if self.gamma_diag is not None:
            dense = np.zeros((0, 0))
            diag, u, v = self.gamma_diag, self.gamma_u, self.gamma_v
        else:
            dense = np.asarray(self.Gamma, dtype=float)
            diag, u, v = np.zeros(n), np.zeros((n, 0)), np.zeros((n, 0))
        c = np.ascontiguousarray
        return (float(self.k_r), c(self.K_p), c(self.K_v), c(self.K_g), c(dense, dtype=float),
                c(diag, dtype=float), c(u, dtype=float), c(v, dtype=float))

    @classmethod
    def from_design(cls, design: GainDesign, k_r: float = 1.0, k_p_mode="ones",
                    dense: Optional[bool] = None) -> "ObserverGains":
        """Gains for ``design``.

        When the design carries the diagonal-plus-rank-two factors of ``L[:n]``
        Gamma is kept factored (O(n) per step) unless ``dense=True``.
        """
        K_p, K_v, K_g, Gamma = decompose_gains(design, k_p_mode)
        factored = design.top_diag is not None
        if dense is None:
            dense = not factored
        if dense or not factored:
            return cls(k_r, K_p, K_v, K_g, Gamma, design.L)
        n = design.n
        # Gamma = 1 K_p^T - diag(d) - U [K_v K_g]^T
        u = np.hstack([np.ones((n, 1)), -design.top_u])
        v = np.stack([K_p, K_v, K_g], axis=1)
        return cls(k_r, K_p, K_v, K_g, None, design.L, -design.top_diag, u, v)


@dataclass(frozen=True)
class Innovation:
    z: np.ndarray      # (n, 3)
    sigma: np.ndarray  # (3,)


@dataclass(frozen=True)
class ObserverDerivative:
    r_dot: np.ndarray
    p_dot: np.ndarray
    v_dot: np.ndarray
    g_dot: np.ndarray
    landmarks_dot: np.ndarray
    body_rate: np.ndarray  # omega + R^T sigma


def _check_frame(state: ObserverState, frame: MeasurementFrame):
    y = np.asarray(frame.y, dtype=float)
    if y.shape != (state.n, 3):
        raise ValueError(f"frame has landmark block {y.shape}, expected ({state.n}, 3)")
    return y


def innovation(state: ObserverState, frame: MeasurementFrame, gains: ObserverGains,
               g_known) -> Innovation:
    y = _check_frame(state, frame)
    if gains.n != state.n:
        raise ValueError(f"gains are for n={gains.n}, state has n={state.n}")
    z = y @ state.r_hat.T - state.p_hat + state.landmarks_hat
    sigma = gains.k_r * np.cross(state.g_hat, np.asarray(g_known, dtype=float))
    return Innovation(z, sigma)


def observer_derivative(state: ObserverState, frame: MeasurementFrame, gains: ObserverGains,
                        g_known) -> ObserverDerivative:
    inn = innovation(state, frame, gains, g_known)
    z, s = inn.z, inn.sigma
    R = state.r_hat
    w = np.asarray(frame.omega, dtype=float) + R.T @ s
    return ObserverDerivative(
        R @ hat(w),
        np.cross(s, state.p_hat) + state.v_hat + gains.K_p @ z,
        np.cross(s, state.v_hat) + state.g_hat + R @ np.asarray(frame.accel, float) + gains.K_v @ z,
        np.cross(s, state.g_hat) + gains.K_g @ z,
        np.cross(s, state.landmarks_hat) + gains.apply_gamma(z),
        w,
    )


def _stage_frames(frames, n):
    if isinstance(frames, MeasurementFrame):
        frames = (frames, frames, frames)
    if len(frames) != 3:
        raise ValueError("step needs one frame or the three stage frames (t, t+dt/2, t+dt)")
    om = np.array([f.omega for f in frames], dtype=float)
    ac = np.array([f.accel for f in frames], dtype=float)
    Y = np.array([f.y for f in frames], dtype=float)
    if Y.shape != (3, n, 3):
        raise ValueError(f"frame landmark blocks must be ({n}, 3)")
    return om, ac, Y


def step(state: ObserverState, frame: Union[MeasurementFrame, Sequence[MeasurementFrame]],
         gains: ObserverGains, g_known, dt: float) -> ObserverState:
    """Advance the observer by ``dt``.

    ``frame`` is either a single frame (held over the step) or the three frames
    at ``t``, ``t + dt/2`` and ``t + dt``. Rotation and vector states are
    integrated together by a 4th-order Lie-group Runge-Kutta scheme.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    om, ac, Y = _stage_frames(frame, state.n)
    g_known = np.asarray(g_known, dtype=float)
    if not (state.is_finite() and np.isfinite(om).all() and np.isfinite(ac).all()
            and np.isfinite(Y).all() and np.isfinite(g_known).all()):
        raise ValueError("non-finite observer input")
    k_r, kp, kv, kg, dense, diag, u, v = gains.kernel_args()
    R, p, vel, g, P = kernels.observer_step(
        state.r_hat, state.p_hat, state.v_hat, state.g_hat,
        np.ascontiguousarray(state.landmarks_hat), om, ac, Y,
        k_r, kp, kv, kg, dense, diag, u, v, g_known, dt)
    return ObserverState(R, p, vel, g, P, state.t + dt)


@dataclass
class ObserverLog:
    """Estimates at logged steps; ``steps_done < n_steps`` means the run diverged."""

    t: np.ndarray
    r: np.ndarray  # (K, 3, 3)
    p: np.ndarray
    v: np.ndarray
    g: np.ndarray
    landmarks: np.ndarray  # (K, n, 3)
    steps_done: int
    n_steps: int
    log_every: int

    @property
    def diverged(self) -> bool:
        return self.steps_done < self.n_steps

    def state(self, k: int) -> ObserverState:
        return ObserverState(self.r[k], self.p[k], self.v[k], self.g[k], self.landmarks[k],
                             float(self.t[k]))

    def valid_rows(self) -> int:
        return self.steps_done // self.log_every + 1


def run(state: ObserverState, meas: MeasurementStream, gains: ObserverGains, g_known, dt: float,
        log_every: int = 1) -> ObserverLog:
    """Integrate over a half-step measurement stream (see ``dynamics``)."""
    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    if meas.y.shape[1] != state.n:
        raise ValueError("measurement stream and state disagree on n")
    n_steps = (meas.t.size - 1) // 2
    k_r, kp, kv, kg, dense, diag, u, v = gains.kernel_args()
    R, p, vel, g, P, done = kernels.observer_run(
        np.ascontiguousarray(state.r_hat), state.p_hat, state.v_hat, state.g_hat,
        np.ascontiguousarray(state.landmarks_hat),
        np.ascontiguousarray(meas.omega), np.ascontiguousarray(meas.accel),
        np.ascontiguousarray(meas.y), k_r, kp, kv, kg, dense, diag, u, v,
        np.asarray(g_known, dtype=float), dt, log_every)
    t = state.t + dt * log_every * np.arange(R.shape[0])
    return ObserverLog(t, R, p, vel, g, P, int(done), n_steps, log_every)
