"""Command-line entry point: ``seslam design-gains | simulate | mc | default-config``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""

import argparse
import json
import logging
import sys

from . import experiment as ex
from .gains import PlacementError, save_gain_file

log = logging.getLogger("seslam")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _load(args):
    return ex.load_config(args.config)


def cmd_design_gains(args) -> int:
    cfg = _load(args)
    try:
        design, gains = ex.design_gains(cfg)
    except (ValueError, PlacementError) as exc:
        raise ex.ConfigError(f"gain design failed: {exc}") from None
    out = ex.output_dir(cfg, args.out)
    save_gain_file(out / "gains.txt", design)
    report = ex.gain_report(design, gains)
    (out / "gains_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"n={design.n} method={design.method} observability rank={report['observability_rank']}")
    print(f"max eigenvalue match distance {report['max_match_distance']:.3e}")
    print("achieved:", " ".join(f"{re:.6g}{im:+.3g}j" if im else f"{re:.6g}"
                                for re, im in report["achieved_eigenvalues"]))
    print(f"wrote {out / 'gains.txt'} and {out / 'gains_report.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    try:
        design, gains = ex.design_gains(cfg)
    except (ValueError, PlacementError) as exc:
        raise ex.ConfigError(f"gain design failed: {exc}") from None
    res = ex.simulate(cfg, noiseless=args.noiseless, seed=args.seed, design=design, gains=gains)
    out = ex.output_dir(cfg, args.out)
    summary = ex.write_simulation(res, out)
    if res.diverged:
        print(f"diverged after {res.log.steps_done} of {res.log.n_steps} steps; "
              f"partial log written to {out}", file=sys.stderr)
        return EXIT_DIVERGED
    fin = summary["final"]
    print(f"t={fin['t']:.3f}s rot={fin['err_rot_deg']:.3e}deg pos={fin['err_pos_m']:.3e}m "
          f"landmarks={fin['landmark_rmse_m']:.3e}m |x|={fin['norm_x']:.3e}")
    print(f"wrote metrics.csv, run_log.csv, summary.json, plot_metrics.py to {out}")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = _load(args)
    runs = args.runs if args.runs is not None else cfg.mc.runs
    if runs < 1:
        raise ex.ConfigError("--runs must be >= 1")
    try:
        rows = ex.monte_carlo(cfg, runs=runs, workers=args.workers)
    except (ValueError, PlacementError) as exc:
        raise ex.ConfigError(str(exc)) from None
    out = ex.output_dir(cfg, args.out)
    summary = ex.write_mc(rows, out)
    print(f"converged {summary['converged']}/{summary['runs']} "
          f"(diverged {summary['diverged']}); wrote {out / 'mc_runs.csv'}")
    return EXIT_OK


def cmd_default_config(args) -> int:
    sys.stdout.write(ex.default_config_text())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="seslam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design-gains", help="place observer poles and write the gain file")
    d.add_argument("--config", help="YAML config (defaults when omitted)")
    d.add_argument("--out", help="output directory")
    d.set_defaults(func=cmd_design_gains)

    s = sub.add_parser("simulate", help="run truth and observer, write logs")
    s.add_argument("--config")
    s.add_argument("--noiseless", action="store_true")
    s.add_argument("--seed", type=int, help="noise seed override")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mc", help="Monte Carlo study over random initial estimates")
    m.add_argument("--config")
    m.add_argument("--runs", type=int)
    m.add_argument("--workers", type=int)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mc)

    c = sub.add_parser("default-config", help="print the default config as YAML")
    c.set_defaults(func=cmd_default_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
