"""Ground-truth rigid-body motion, static landmarks and synthetic IMU/landmark data.

The simulated world is z-up with constant gravity. Truth and measurements are
produced on a *half-step* grid (spacing ``dt / 2``) so that the observer can read
its inputs at every Runge-Kutta stage time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels

GRAVITY = np.array([0.0, 0.0, -9.81])
DEFAULT_BOX = ((-10.0, 10.0), (-10.0, 10.0), (0.0, 5.0))
TRAJECTORIES = ("analytic_circle", "hover", "custom")


@dataclass(frozen=True)
class TrueState:
    r: np.ndarray
    p: np.ndarray
    v: np.ndarray
    landmarks: np.ndarray  # (n, 3)
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.landmarks.shape[0]


@dataclass(frozen=True)
class MeasurementFrame:
    t: float
    omega: np.ndarray
    accel: np.ndarray
    y: np.ndarray  # (n, 3), body-frame relative positions R^T (p - p_i)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-axis variances of the additive white Gaussian measurement noise."""

    var_omega: float = 0.01
    var_accel: float = 0.2
    var_landmark: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.var_omega, self.var_accel, self.var_landmark) < 0:
            raise ValueError("noise variances must be non-negative")

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, seed)

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(self.var_omega * factor, self.var_accel * factor,
                         self.var_landmark * factor, self.seed)

    @property
    def is_zero(self) -> bool:
        return self.var_omega == 0 and self.var_accel == 0 and self.var_landmark == 0


@dataclass
class SimConfig:
    """Simulation scenario.

    ``trajectory`` is ``"analytic_circle"``, ``"hover"`` (body at rest at ``p0``
    with attitude ``r0``) or ``"custom"``. A custom trajectory is driven by
    body-frame inputs ``omega_fn(t)`` and ``accel_fn(t)`` from the initial pose
    ``(r0, p0, v0)``.
    """

    n: int = 15
    duration: float = 60.0
    dt: float = 1e-3
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    trajectory: str = "analytic_circle"
    landmark_box: Sequence[Sequence[float]] = DEFAULT_BOX
    landmark_seed: int = 7
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    decimation: int = 1
    omega_fn: Optional[Callable[[float], np.ndarray]] = None
    accel_fn: Optional[Callable[[float], np.ndarray]] = None
    r0: np.ndarray = field(default_factory=lambda: np.eye(3))
    p0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must be at least dt")
        if self.n < 1:
            raise ValueError("at least one landmark is required")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if self.trajectory == "custom" and (self.omega_fn is None or self.accel_fn is None):
            raise ValueError("custom trajectory needs omega_fn and accel_fn")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


# -- analytic circle -----------------------------------------------------------

def circle_position(t):
    return 3.0 * np.array([np.cos(t), np.sin(t), 1.0])


def circle_velocity(t):
    return 3.0 * np.array([-np.sin(t), np.cos(t), 0.0])


def circle_acceleration(t):
    return 3.0 * np.array([-np.cos(t), -np.sin(t), 0.0])


def circle_omega(t):
    return np.array([-np.cos(2.0 * t), 1.0, np.sin(2.0 * t)])


def _circle_omega_grid(t):
    t = np.asarray(t, dtype=float)
    return np.stack([-np.cos(2.0 * t), np.ones_like(t), np.sin(2.0 * t)], axis=-1)


def specific_force(r, p_ddot, gravity):
    """Accelerometer reading ``R^T (p'' - g)``."""
    return np.asarray(r).T @ (np.asarray(p_ddot) - np.asarray(gravity))


def circle_attitude(t: float, max_step: float = 5e-4) -> np.ndarray:
    """``R(t)`` from ``R(0) = I`` under the circle's angular velocity."""
    if t == 0:
        return np.eye(3)
    n_steps = max(1, int(np.ceil(abs(t) / max_step)))
    h = t / n_steps
    grid = np.linspace(0.0, t, 2 * n_steps + 1)
    return kernels.attitude_run(np.eye(3), _circle_omega_grid(grid), h)[-1]


def analytic_truth(t: float, cfg: SimConfig, landmarks=None):
    """Truth state on the circle plus the exact IMU signals at time ``t``.

    Returns ``(state, omega, accel)``.
    """
    if cfg.trajectory != "analytic_circle":
        raise ValueError("analytic_truth requires the analytic_circle trajectory")
    if landmarks is None:
        landmarks = sample_landmarks(cfg.n, cfg.landmark_box, cfg.landmark_seed)
    r = circle_attitude(t, max_step=cfg.dt / 2)
    state = TrueState(r, circle_position(t), circle_velocity(t), np.asarray(landmarks), t)
    accel = specific_force(r, circle_acceleration(t), cfg.gravity)
    return state, circle_omega(t), accel


# -- propagation ---------------------------------------------------------------

def _stage_inputs(u, dt, t0=0.0):
    """Normalise an input to its values at ``(t0, t0 + dt/2, t0 + dt)``."""
    if callable(u):
        return np.array([u(t0), u(t0 + 0.5 * dt), u(t0 + dt)], dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape == (3,):
        return np.tile(u, (3, 1))
    if u.shape == (3, 3):
        return u
    raise ValueError(f"input must be a 3-vector, stage triple or callable, got {u.shape}")


def propagate_truth(state: TrueState, omega, accel, dt: float, g) -> TrueState:
    """Advance the rigid body by ``dt``.

    ``omega`` and ``accel`` are either constant 3-vectors (held over the step),
    ``(3, 3)`` arrays of values at the start, middle and end of the step, or
    callables of absolute time.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    om = _stage_inputs(omega, dt, state.t)
    ac = _stage_inputs(accel, dt, state.t)
    r, p, v = kernels.truth_step(state.r, state.p, state.v, om, ac, np.asarray(g, float), dt)
    return TrueState(r, p, v, state.landmarks, state.t + dt)


def sample_landmarks(n: int, box=DEFAULT_BOX, seed: int = 7) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("landmark box must be three (low, high) pairs with low < high")
    rng = np.random.default_rng(seed)
    return rng.uniform(box[:, 0], box[:, 1], size=(n, 3))


def relative_positions(r, p, landmarks) -> np.ndarray:
    """Noise-free landmark measurements ``R^T (p - p_i)``, one row per landmark."""
    return (np.asarray(p) - np.asarray(landmarks)) @ np.asarray(r)


def synthesize_measurements(state: TrueState, omega_true, accel_true, noise: NoiseSpec,
                            frame_index: int = 0) -> MeasurementFrame:
    """One noisy sample; the noise draw depends only on ``(noise.seed, frame_index)``."""
    rng = np.random.default_rng([noise.seed, frame_index])
    n = state.n
    omega = np.asarray(omega_true, float) + np.sqrt(noise.var_omega) * rng.standard_normal(3)
    accel = np.asarray(accel_true, float) + np.sqrt(noise.var_accel) * rng.standard_normal(3)
    y = relative_positions(state.r, state.p, state.landmarks)
    y = y + np.sqrt(noise.var_landmark) * rng.standard_normal((n, 3))
    return MeasurementFrame(state.t, omega, accel, y)


# -- streams over a whole run --------------------------------------------------

@dataclass
class TruthStream:
    """Truth sampled on the half-step grid ``t_j = j * dt / 2``."""

    t: np.ndarray
    r: np.ndarray          # (M, 3, 3)
    p: np.ndarray          # (M, 3)
    v: np.ndarray          # (M, 3)
    omega: np.ndarray      # (M, 3) exact body rate
    accel: np.ndarray      # (M, 3) exact specific force
    landmarks: np.ndarray  # (n, 3)
    gravity: np.ndarray

    def state(self, j: int) -> TrueState:
        return TrueState(self.r[j], self.p[j], self.v[j], self.landmarks, float(self.t[j]))

    def every(self, stride: int) -> "TruthStream":
        s = slice(None, None, stride)
        return TruthStream(self.t[s], self.r[s], self.p[s], self.v[s], self.omega[s],
                           self.accel[s], self.landmarks, self.gravity)


@dataclass
class MeasurementStream:
    """Measurements on the half-step grid, laid out for the batch kernels."""

    t: np.ndarray
    omega: np.ndarray  # (M, 3)
    accel: np.ndarray  # (M, 3)
    y: np.ndarray      # (M, n, 3)
    noiseless: bool

    def frame(self, j: int) -> MeasurementFrame:
        return MeasurementFrame(float(self.t[j]), self.omega[j], self.accel[j], self.y[j])

    def stage(self, k: int):
        """Stage triples for observer step ``k``."""
        s = slice(2 * k, 2 * k + 3)
        return self.omega[s], self.accel[s], self.y[s]


def generate_truth(cfg: SimConfig, duration: Optional[float] = None, landmarks=None) -> TruthStream:
    duration = cfg.duration if duration is None else duration
    n_steps = int(round(duration / cfg.dt))
    h = cfg.dt / 2
    t = np.arange(2 * n_steps + 1) * h
    if landmarks is None:
        landmarks = sample_landmarks(cfg.n, cfg.landmark_box, cfg.landmark_seed)
    landmarks = np.asarray(landmarks, dtype=float)
    g = cfg.gravity

    if cfg.trajectory == "analytic_circle":
        # rotation on the half-step grid, inputs at quarter-step stage times
        fine = np.arange(4 * n_steps + 1) * (h / 2)
        r = kernels.attitude_run(np.eye(3), _circle_omega_grid(fine), h)
        p = 3.0 * np.stack([np.cos(t), np.sin(t), np.ones_like(t)], axis=-1)
        v = 3.0 * np.stack([-np.sin(t), np.cos(t), np.zeros_like(t)], axis=-1)
        acc = 3.0 * np.stack([-np.cos(t), -np.sin(t), np.zeros_like(t)], axis=-1)
        omega = _circle_omega_grid(t)
        accel = np.einsum("kji,kj->ki", r, acc - g)
    elif cfg.trajectory == "hover":
        M = t.size
        r0 = np.asarray(cfg.r0, dtype=float)
        r = np.broadcast_to(r0, (M, 3, 3)).copy()
        p = np.broadcast_to(np.asarray(cfg.p0, float), (M, 3)).copy()
        v = np.zeros((M, 3))
        omega = np.zeros((M, 3))
        accel = np.broadcast_to(-r0.T @ g, (M, 3)).copy()
    else:
        M = t.size
        r = np.zeros((M, 3, 3))
        p = np.zeros((M, 3))
        v = np.zeros((M, 3))
        r[0], p[0], v[0] = cfg.r0, cfg.p0, cfg.v0
        for j in range(M - 1):
            om = _stage_inputs(cfg.omega_fn, h, t[j])
            ac = _stage_inputs(cfg.accel_fn, h, t[j])
            r[j + 1], p[j + 1], v[j + 1] = kernels.truth_step(r[j], p[j], v[j], om, ac, g, h)
        omega = np.array([cfg.omega_fn(tj) for tj in t])
        accel = np.array([cfg.accel_fn(tj) for tj in t])
    return TruthStream(t, r, p, v, omega, accel, landmarks, g.copy())


def generate_measurements(truth: TruthStream, noise: NoiseSpec, decimation: int = 1) -> MeasurementStream:
    """Noisy samples for every grid point of ``truth``.

    Landmark measurements are refreshed every ``decimation`` observer steps and
    held in between.
    """
    M = truth.t.size
    n = truth.landmarks.shape[0]
    y = np.einsum("kji,kmj->kmi", truth.r, truth.p[:, None, :] - truth.landmarks[None, :, :])
    omega = truth.omega.copy()
    accel = truth.accel.copy()
    if not noise.is_zero:
        rng = np.random.default_rng(noise.seed)
        omega += np.sqrt(noise.var_omega) * rng.standard_normal((M, 3))
        accel += np.sqrt(noise.var_accel) * rng.standard_normal((M, 3))
        y += np.sqrt(noise.var_landmark) * rng.standard_normal((M, n, 3))
    if decimation > 1:
        held = (np.arange(M) // (2 * decimation)) * (2 * decimation)
        y = y[held]
    return MeasurementStream(truth.t.copy(), omega, accel, y, noise.is_zero)


__all__ = [
    "GRAVITY", "TrueState", "MeasurementFrame", "NoiseSpec", "SimConfig",
    "analytic_truth", "propagate_truth", "sample_landmarks", "synthesize_measurements",
    "generate_truth", "generate_measurements", "TruthStream", "MeasurementStream",
    "circle_position", "circle_velocity", "circle_acceleration", "circle_omega",
    "specific_force", "relative_positions",
]
