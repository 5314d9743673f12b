"""Compiled vs pure-Python kernels: observer steps per second and scaling in n.

    python benchmarks/bench_kernels.py [--steps 2000] [--sizes 10 100 1000] [--json out.json]
"""

import argparse
import json
import sys
import time

import numpy as np

from seslam import kernels
from seslam.dynamics import GRAVITY
from seslam.gains import build_lti, default_eigenvalues, place_poles
from seslam.observer import ObserverGains, initial_state


def make_case(n, steps):
    gains = ObserverGains.from_design(place_poles(build_lti(n), default_eigenvalues(n)))
    M = 2 * steps + 1
    rng = np.random.default_rng(n)
    t = np.arange(M) * 5e-4
    omega = np.ascontiguousarray(np.stack([np.sin(t), np.cos(t), 0.3 + 0 * t], axis=1))
    accel = np.ascontiguousarray(np.tile([0.0, 0.0, 9.81], (M, 1)) + 0.1 * rng.normal(size=(M, 3)))
    y = np.ascontiguousarray(np.tile(rng.normal(size=(n, 3)), (M, 1, 1)))
    s = initial_state(n)
    state = (np.ascontiguousarray(s.r_hat), s.p_hat, s.v_hat, s.g_hat,
             np.ascontiguousarray(s.landmarks_hat))
    return state, omega, accel, y, gains.kernel_args()


def time_backend(backend, case, steps, repeats):
    state, omega, accel, y, gargs = case
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        backend.observer_run(*state, omega, accel, y, *gargs, GRAVITY, 1e-3, steps)
        best = min(best, time.perf_counter() - t0)
    return best / steps


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--py-steps", type=int, default=200, help="steps for the slower fallback")
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled extension not available; timing the fallback only", file=sys.stderr)
    rows = []
    print(f"{'n':>6} {'compiled us/step':>17} {'python us/step':>15} {'speedup':>8}")
    for n in args.sizes:
        py = time_backend(kernels.python_backend, make_case(n, args.py_steps), args.py_steps,
                          args.repeats)
        cy = None
        if compiled is not None:
            cy = time_backend(compiled, make_case(n, args.steps), args.steps, args.repeats)
        rows.append({"n": n, "compiled_s": cy, "python_s": py})
        cy_txt = f"{cy * 1e6:17.2f}" if cy is not None else f"{'-':>17}"
        sp = f"{py / cy:8.1f}" if cy is not None else f"{'-':>8}"
        print(f"{n:6d} {cy_txt} {py * 1e6:15.2f} {sp}")

    for key in ("compiled_s", "python_s"):
        pts = [(r["n"], r[key]) for r in rows if r[key] is not None]
        if len(pts) >= 2:
            ns, ts = map(np.array, zip(*pts))
            b, a = np.polyfit(ns, ts, 1)
            print(f"{key[:-2]}: {a * 1e6:.2f} us + {b * 1e9:.2f} ns * n")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backend": kernels.BACKEND, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
