"""End-to-end acceptance checks, one test per criterion.

Each test prints an ``ACCEPTANCE nn PASS|FAIL`` line and the session summary
lists them all.
"""

import time

import numpy as np
import pytest

from oracles import dense_element, random_rotation
from seslam import experiment as ex
from seslam.analysis import (consistent_estimate, error_log, linearization_check, lti_residual,
                             lyapunov_rate, lyapunov_rate_check, truth_group)
from seslam.dynamics import (GRAVITY, MeasurementStream, NoiseSpec, SimConfig,
                             generate_measurements, generate_truth)
from seslam.gains import (REFERENCE_EIGENVALUES, build_lti, default_eigenvalues, match_eigenvalues,
                          observability_matrix, place_poles)
from seslam.lie import (GroupElement, compose, embed, group_action_measure, inverse,
                        landmark_vector, rotation_from_angle_axis)
from seslam.observer import ObserverGains, ObserverState, initial_state, run

G = GRAVITY
GN = float(G @ G)


def _element(rng, n):
    return GroupElement(random_rotation(rng), *rng.normal(size=(3, 3)), rng.normal(size=(n, 3)))


def _dense(a):
    return dense_element(a.r, a.columns())


def test_01_group_algebra(acceptance):
    rng = np.random.default_rng(2024)
    cases = 1000
    worst = {"closure": 0.0, "inverse": 0.0, "associativity": 0.0, "measurement": 0.0}
    t0 = time.perf_counter()
    for n in (1, 5, 15):
        I = np.eye(6 + n)
        for _ in range(cases):
            a, b, c = _element(rng, n), _element(rng, n), _element(rng, n)
            Da, Db, Dc = _dense(a), _dense(b), _dense(c)
            ab = compose(a, b)
            worst["closure"] = max(worst["closure"], np.abs(embed(ab) - Da @ Db).max())
            worst["inverse"] = max(worst["inverse"], np.abs(embed(compose(a, inverse(a))) - I).max(),
                                   np.abs(embed(compose(inverse(a), a)) - I).max())
            lhs = embed(compose(ab, c))
            rhs = embed(compose(a, compose(b, c)))
            worst["associativity"] = max(worst["associativity"],
                                         np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max()))
            i = int(rng.integers(n))
            m = group_action_measure(inverse(a), i)
            ref = np.linalg.solve(Da, landmark_vector(n, i))
            worst["measurement"] = max(worst["measurement"], np.abs(m - ref).max())
    elapsed = time.perf_counter() - t0
    ok = (worst["closure"] <= 1e-11 and worst["inverse"] <= 1e-11
          and worst["associativity"] <= 1e-11 and worst["measurement"] <= 1e-11 and elapsed < 10)
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" cases=3x{cases} t={elapsed:.1f}s"
    acceptance(1, "group algebra", ok, detail)
    assert ok, detail


def test_02_observability(acceptance):
    res = {}
    for n in (1, 2, 3, 15, 50):
        O = observability_matrix(build_lti(n))
        res[n] = (int(np.linalg.matrix_rank(O)), float(np.linalg.det(O.T @ O)))
    ok = all(r == n + 2 and d != 0 for n, (r, d) in res.items())
    detail = " ".join(f"n={n}:rank={r}" for n, (r, _) in res.items())
    acceptance(2, "observability", ok, detail)
    assert ok


def test_03_pole_placement(acceptance):
    d = place_poles(build_lti(15), REFERENCE_EIGENVALUES)
    dist = match_eigenvalues(d.achieved_eigs, REFERENCE_EIGENVALUES)
    L1 = place_poles(build_lti(1), [-1, -2, -3]).L.ravel()
    err1 = float(np.abs(L1 - [6, 11, 6]).max())
    ok = dist <= 1e-6 and err1 <= 1e-10
    detail = f"match={dist:.1e} n1_err={err1:.1e}"
    acceptance(3, "pole placement", ok, detail)
    assert ok, detail


def test_04_lti_equivalence(acceptance, ref_gains, ref_design, noiseless_10s):
    cfg, truth, ms = noiseless_10s
    t0 = time.perf_counter()
    log = run(initial_state(15), ms, ref_gains, G, cfg.dt, log_every=10)
    err = error_log(truth, log)
    res = lti_residual(err.t, err.x, ref_design.L)
    elapsed = time.perf_counter() - t0
    ok = res <= 1e-6 and elapsed < 30 and not log.diverged
    detail = f"residual={res:.1e} t={elapsed:.2f}s"
    acceptance(4, "LTI equivalence", ok, detail)
    assert ok, detail


def _independence_gap(gains, dt):
    """Max |x_circle - x_hover| over 10 s when both start from the same E(0)."""
    cfg = SimConfig(duration=10.0, dt=dt, noise=NoiseSpec.zero())
    circ = generate_truth(cfg)
    hov_cfg = SimConfig(duration=10.0, dt=dt, trajectory="hover", noise=NoiseSpec.zero(),
                        p0=np.array([1.0, -2.0, 4.0]),
                        r0=rotation_from_angle_axis(0.8, np.array([0.0, 0.6, 0.8])))
    hov = generate_truth(hov_cfg)
    est_c = initial_state(15)
    Xhat = GroupElement(est_c.r_hat, est_c.p_hat, est_c.v_hat, est_c.g_hat, est_c.landmarks_hat)
    E0 = compose(truth_group(circ.state(0), G), inverse(Xhat))
    Xh_hat = compose(inverse(E0), truth_group(hov.state(0), G))
    est_h = ObserverState(Xh_hat.r, Xh_hat.x1, Xh_hat.x2, Xh_hat.x3, Xh_hat.xL)
    every = int(round(0.01 / dt))
    xs = []
    for truth, est in ((circ, est_c), (hov, est_h)):
        ms = generate_measurements(truth, NoiseSpec.zero())
        xs.append(error_log(truth, run(est, ms, gains, G, dt, every)).x)
    return float(np.abs(xs[0] - xs[1]).max())


def test_05_trajectory_independence(acceptance, ref_gains):
    # the error flow is input free in continuous time; what remains is the
    # O(dt^4) integration error, so also confirm it shrinks ~16x per halving
    coarse = _independence_gap(ref_gains, 1e-3)
    fine = _independence_gap(ref_gains, 5e-4)
    ok = fine <= 1e-8 and 12 <= coarse / fine <= 20
    detail = f"max|dx|={fine:.1e} at dt=5e-4 ({coarse:.1e} at dt=1e-3, ratio {coarse / fine:.1f})"
    acceptance(5, "trajectory independence", ok, detail)
    assert ok, detail


def test_06_lyapunov(acceptance):
    dt = 1e-4
    cfg = SimConfig(n=3, duration=0.1, dt=dt, noise=NoiseSpec.zero())
    truth = generate_truth(cfg)
    ms = generate_measurements(truth, cfg.noise)
    gains = ObserverGains.from_design(place_poles(build_lti(3), default_eigenvalues(3)))
    rng = np.random.default_rng(6)
    checks = []
    starts = [random_rotation(rng) for _ in range(5)]
    # g_breve(0) orthogonal to g
    starts.append(rotation_from_angle_axis(0.5 * np.pi, np.array([1.0, 0.0, 0.0])))
    fd_first = None
    for Rt in starts:
        log = run(consistent_estimate(truth.state(0), G, Rt), ms, gains, G, dt, log_every=1)
        err = error_log(truth, log)
        xn = np.linalg.norm(err.x.reshape(len(err.t), -1), axis=1)
        checks.append(lyapunov_rate_check(err.t, err.g_breve, G, 1.0, xn))
        L1 = 0.5 * np.sum((G - err.g_breve) ** 2, axis=1)
        fd_first = (L1[2] - L1[0]) / (2 * dt)
    pred0 = float(lyapunov_rate(starts[-1].T @ G, G, 1.0))
    ok_rate = abs(pred0 - -9262.9) <= 1e-3 * 9262.9 and abs(fd_first - -9.81 ** 4) <= 1e-3 * 9.81 ** 4
    ok = all(c.passed for c in checks) and ok_rate
    worst = max(c.max_deviation / c.tolerance for c in checks)
    detail = (f"runs={len(checks)} worst dev/tol={worst:.5f} rate0={pred0:.2f} "
              f"fd={fd_first:.2f} (ref -9262.9)")
    acceptance(6, "Lyapunov suite", ok, detail)
    assert ok, detail


def test_07_linearization(acceptance):
    J, ev = linearization_check(G, 1.0)
    target = np.diag([GN, GN, 0.0])
    rel = float(np.abs(J - target).max() / GN)
    ok = rel <= 1e-6 and abs(ev[1] - ev[2]) <= 1e-6 * GN and ev[1] > 0 and abs(ev[0]) <= 1e-6 * GN
    detail = f"rel={rel:.1e} eigs={ev[0]:.2e},{ev[1]:.4f},{ev[2]:.4f}"
    acceptance(7, "linearization", ok, detail)
    assert ok, detail


def test_08_agas_monte_carlo(acceptance):
    cfg = ex.config_from_dict({"mc": {"runs": 100, "duration": 30.0, "seed": 0}})
    t0 = time.perf_counter()
    rows = ex.monte_carlo(cfg)
    elapsed = time.perf_counter() - t0
    s = ex.mc_summary(rows)
    ok = s["converged"] == 100 and elapsed < 300
    detail = (f"converged={s['converged']}/100 max_rot={s['err_rot_deg']['max']:.1e}deg "
              f"max_lm={s['landmark_rmse_m']['max']:.1e}m t={elapsed:.0f}s")
    acceptance(8, "AGAS Monte Carlo", ok, detail)
    assert ok, detail


def test_09_noisy_scenario(acceptance):
    base = ex.load_config(None)
    full = ex.simulate(base)
    quiet_cfg = ex.config_from_dict({"sim": {"noise": {
        "var_omega": 0.01 / 100, "var_accel": 0.2 / 100, "var_landmark": 0.1 / 100}}})
    quiet = ex.simulate(quiet_cfg)
    a, b = ex.steady_state(full), ex.steady_state(quiet)
    bounded = not full.diverged and not quiet.diverged and np.all(np.isfinite(full.metrics["norm_x"]))
    ok = bounded and a < 0.5 and a / b >= 3
    detail = f"rmse={a:.3f}m quiet={b:.4f}m ratio={a / b:.1f}"
    acceptance(9, "noisy scenario", ok, detail)
    assert ok, detail


def test_10_gain_decomposition_neutrality(acceptance, ref_design, noiseless_10s):
    cfg, truth, ms = noiseless_10s
    xs = []
    for mode in ("zeros", "ones"):
        gains = ObserverGains.from_design(ref_design, 1.0, mode)
        log = run(initial_state(15), ms, gains, G, cfg.dt, log_every=10)
        xs.append(error_log(truth, log).x)
    diff = float(np.abs(xs[0] - xs[1]).max())
    ok = diff <= 1e-9
    detail = f"max|dx|={diff:.1e}"
    acceptance(10, "gain decomposition neutrality", ok, detail)
    assert ok, detail


def _step_time(n, steps):
    design = place_poles(build_lti(n), default_eigenvalues(n))
    gains = ObserverGains.from_design(design)
    M = 2 * steps + 1
    y = np.random.default_rng(n).normal(size=(n, 3))
    ms = MeasurementStream(np.arange(M) * 5e-4, np.tile([0.1, 0.2, 0.3], (M, 1)),
                           np.tile([0.0, 0.0, 9.81], (M, 1)), np.tile(y, (M, 1, 1)), True)
    st = initial_state(n)
    return lambda: _timed(st, ms, gains, steps)


def _timed(st, ms, gains, steps):
    t0 = time.perf_counter()
    run(st, ms, gains, G, 1e-3, log_every=steps)
    return (time.perf_counter() - t0) / steps


def test_11_linear_complexity(acceptance):
    ns = np.array([10, 100, 1000])
    runners = [_step_time(int(n), 1000) for n in ns]
    samples = [[] for _ in ns]
    for _ in range(7):  # interleaved so drifts hit every size alike
        for k, f in enumerate(runners):
            samples[k].append(f())
    t = np.array([min(s) for s in samples])
    b, a = np.polyfit(ns, t, 1)
    fit = a + b * ns
    ratio = t / fit
    ok = b > 0 and np.all(fit > 0) and np.all((ratio <= 1.5) & (ratio >= 1 / 1.5))
    detail = " ".join(f"n={n}:{v * 1e6:.1f}us" for n, v in zip(ns, t)) + \
        f" fit/meas={np.round(1 / ratio, 2).tolist()}"
    acceptance(11, "linear complexity", ok, detail)
    assert ok, detail
