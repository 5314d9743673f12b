"""Pure-numpy integration kernels (fallback for the compiled ``_kernels``).

Both backends expose the same functions with the same argument layout:

* inputs sampled at RK stage times are passed as ``(3, ...)`` arrays whose
  rows are the values at ``t``, ``t + h/2`` and ``t + h``;
* the landmark-coupling matrix Gamma is passed as ``gamma_dense`` (``(n, n)``
  or ``(0, 0)`` when absent) plus ``gamma_diag`` ``(n,)`` and a low-rank pair
  ``gamma_u``, ``gamma_v`` ``(n, r)``, so that
  ``Gamma @ Z = gamma_dense @ Z + gamma_diag * Z + gamma_u @ (gamma_v.T @ Z)``.

Rotations use a 4th-order Runge-Kutta-Munthe-Kaas scheme (right-trivialised);
vector states use classical RK4 on the same stages.
"""

import numpy as np

BACKEND = "python"
_ORTHO_TOL = 1e-9


def _hat(w):
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def _exp(phi):
    t2 = phi @ phi
    K = _hat(phi)
    if t2 < 1e-12:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        t = np.sqrt(t2)
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    return np.eye(3) + a * K + b * (K @ K)


def _jinv(phi, w):
    t2 = phi @ phi
    c1 = np.cross(phi, w)
    if t2 < 1e-8:
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        t = np.sqrt(t2)
        c = 1.0 / t2 - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t))
    return w + 0.5 * c1 + c * np.cross(phi, c1)


def _reortho(R):
    if np.linalg.norm(R.T @ R - np.eye(3)) > _ORTHO_TOL:
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
    return R


def attitude_step(R, omega3, h):
    """Advance ``R' = R hat(omega(t))`` by one step."""
    R = np.asarray(R, dtype=float)
    w1 = omega3[0]
    th = 0.5 * h * w1
    k2 = _jinv(th, omega3[1])
    th = 0.5 * h * k2
    k3 = _jinv(th, omega3[1])
    th = h * k3
    k4 = _jinv(th, omega3[2])
    return _reortho(R @ _exp(h / 6.0 * (w1 + 2.0 * k2 + 2.0 * k3 + k4)))


def truth_step(R, p, v, omega3, accel3, g, h):
    """One step of ``R' = R hat(omega)``, ``p' = v``, ``v' = g + R a``."""
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)

    w1 = omega3[0]
    dp1, dv1 = v, g + R @ accel3[0]

    th = 0.5 * h * w1
    R2 = R @ _exp(th)
    k2 = _jinv(th, omega3[1])
    dp2, dv2 = v + 0.5 * h * dv1, g + R2 @ accel3[1]

    th = 0.5 * h * k2
    R3 = R @ _exp(th)
    k3 = _jinv(th, omega3[1])
    dp3, dv3 = v + 0.5 * h * dv2, g + R3 @ accel3[1]

    th = h * k3
    R4 = R @ _exp(th)
    k4 = _jinv(th, omega3[2])
    dp4, dv4 = v + h * dv3, g + R4 @ accel3[2]

    Rn = _reortho(R @ _exp(h / 6.0 * (w1 + 2.0 * k2 + 2.0 * k3 + k4)))
    pn = p + h / 6.0 * (dp1 + 2.0 * dp2 + 2.0 * dp3 + dp4)
    vn = v + h / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
    return Rn, pn, vn


def observer_rates(R, p, v, g, P, omega, accel, Y, k_r, kp, kv, kg,
                   gamma_dense, gamma_diag, gamma_u, gamma_v, g_known):
    """Body rate of the rotation estimate and time derivatives of the vector states."""
    sigma = k_r * np.cross(g, g_known)
    Z = Y @ R.T - p + P
    dp = np.cross(sigma, p) + v + kp @ Z
    dv = np.cross(sigma, v) + g + R @ accel + kv @ Z
    dg = np.cross(sigma, g) + kg @ Z
    dP = np.cross(sigma, P) + gamma_diag[:, None] * Z
    if gamma_dense.size:
        dP += gamma_dense @ Z
    if gamma_u.shape[1]:
        dP += gamma_u @ (gamma_v.T @ Z)
    w = omega + R.T @ sigma
    return w, dp, dv, dg, dP


def observer_step(R, p, v, g, P, omega3, accel3, Y3, k_r, kp, kv, kg,
                  gamma_dense, gamma_diag, gamma_u, gamma_v, g_known, h):
    gains = (k_r, kp, kv, kg, gamma_dense, gamma_diag, gamma_u, gamma_v, g_known)

    w1, *d1 = observer_rates(R, p, v, g, P, omega3[0], accel3[0], Y3[0], *gains)

    th = 0.5 * h * w1
    s = [x + 0.5 * h * d for x, d in zip((p, v, g, P), d1)]
    w, *d2 = observer_rates(R @ _exp(th), *s, omega3[1], accel3[1], Y3[1], *gains)
    k2 = _jinv(th, w)

    th = 0.5 * h * k2
    s = [x + 0.5 * h * d for x, d in zip((p, v, g, P), d2)]
    w, *d3 = observer_rates(R @ _exp(th), *s, omega3[1], accel3[1], Y3[1], *gains)
    k3 = _jinv(th, w)

    th = h * k3
    s = [x + h * d for x, d in zip((p, v, g, P), d3)]
    w, *d4 = observer_rates(R @ _exp(th), *s, omega3[2], accel3[2], Y3[2], *gains)
    k4 = _jinv(th, w)

    Rn = _reortho(R @ _exp(h / 6.0 * (w1 + 2.0 * k2 + 2.0 * k3 + k4)))
    out = [x + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
           for x, a, b, c, d in zip((p, v, g, P), d1, d2, d3, d4)]
    return (Rn, *out)


def observer_run(R, p, v, g, P, omega, accel, Y, k_r, kp, kv, kg,
                 gamma_dense, gamma_diag, gamma_u, gamma_v, g_known, h, log_every):
    """Integrate over a half-step input stream of length ``2N + 1``.

    Returns ``(R_log, p_log, v_log, g_log, P_log, steps_done)``; rows are logged
    at steps ``0, log_every, 2*log_every, ...``. Integration stops early (and
    ``steps_done < N``) if any state becomes non-finite; the offending state is
    not logged.
    """
    n_steps = (omega.shape[0] - 1) // 2
    n_log = n_steps // log_every + 1
    n = P.shape[0]
    R_log = np.zeros((n_log, 3, 3))
    p_log = np.zeros((n_log, 3))
    v_log = np.zeros((n_log, 3))
    g_log = np.zeros((n_log, 3))
    P_log = np.zeros((n_log, n, 3))

    R = np.array(R, dtype=float)
    p, v, g, P = (np.array(x, dtype=float) for x in (p, v, g, P))
    gains = (k_r, kp, kv, kg, gamma_dense, gamma_diag, gamma_u, gamma_v, g_known)
    R_log[0], p_log[0], v_log[0], g_log[0], P_log[0] = R, p, v, g, P
    for k in range(n_steps):
        j = 2 * k
        R, p, v, g, P = observer_step(R, p, v, g, P, omega[j:j + 3], accel[j:j + 3],
                                      Y[j:j + 3], *gains, h)
        if not (np.isfinite(R).all() and np.isfinite(P).all() and np.isfinite(p).all()
                and np.isfinite(v).all() and np.isfinite(g).all()):
            return R_log, p_log, v_log, g_log, P_log, k
        if (k + 1) % log_every == 0:
            i = (k + 1) // log_every
            R_log[i], p_log[i], v_log[i], g_log[i], P_log[i] = R, p, v, g, P
    return R_log, p_log, v_log, g_log, P_log, n_steps


def attitude_run(R, omega, h):
    """Rotation samples on the grid of a half-step stream (step ``h`` between samples
    two stream rows apart)."""
    n_steps = (omega.shape[0] - 1) // 2
    out = np.zeros((n_steps + 1, 3, 3))
    R = np.array(R, dtype=float)
    out[0] = R
    for k in range(n_steps):
        R = attitude_step(R, omega[2 * k:2 * k + 3], h)
        out[k + 1] = R
    return out
