"""Reproducible experiment driver.

Subcommands: stp-sweep | solve | threshold-sweep | simulate | sensitivity |
region-scan. Every run is determined by one INI config (plus explicit
overrides); artifacts land in <out>/<config-hash>/ with the hash embedded in
every file header. Exit codes: 0 ok, 2 config error, 3 numerical failure,
4 cache miss.
"""

import argparse
import os
import sys

import numpy as np

from . import serialize
from .config import load_config_file
from .dominance import box_grid, region_scan, sensitivity_bound_check
from .errors import (
    CacheMiss,
    ConfigError,
    NonConvergence,
    NumericalFailure,
    QDetectError,
    RunawayEpisode,
)
from .protocol import DetectionCosts, build_action_kernel, simulate_episode
from .quantum import DEFAULT_SOLVER, ActionMap, PsychParams
from .stopping import classical_value_iteration, value_iteration


def _cache_dir(config):
    return os.path.join(config.out_dir, config.hash)


def sweep_stp(frame, params, n_phi=101, solver=None):
    """Certain-belief and uniform-belief action rates across the coupling
    sweep, with a total-probability violation flag per row.

    Rows: (phi, p2_given_state2, p2_given_state1, p2_uniform, violation).
    For the standard two-state frame the second action is defection and the
    second state is the defecting opponent.
    """
    solver = solver or DEFAULT_SOLVER
    etas = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    rows = []
    for phi in np.linspace(0.0, 1.0, n_phi):
        p = PsychParams(alpha=params.alpha, lam=params.lam, phi=float(phi))
        gam = ActionMap(frame, p, solver).batch(etas)
        p_def, p_coop, p_unknown = gam[0, -1], gam[1, -1], gam[2, -1]
        lo, hi = min(p_def, p_coop), max(p_def, p_coop)
        violation = bool(p_unknown < lo - 1e-12 or p_unknown > hi + 1e-12)
        rows.append((float(phi), float(p_def), float(p_coop),
                     float(p_unknown), violation))
    return rows


def violation_onset(rows):
    """Smallest phi in the sweep whose row is flagged, or None."""
    for phi, _, _, _, violation in rows:
        if violation:
            return phi
    return None


def cmd_stp_sweep(config, n_phi=101, out=None):
    rows = sweep_stp(config.frame, config.params, n_phi)
    path = out or os.path.join(_cache_dir(config), "stp_sweep.csv")
    serialize.write_csv(
        path,
        ("phi", "p_defect_given_defect", "p_defect_given_coop",
         "p_defect_unknown", "violation"),
        rows,
        config.hash,
    )
    onset = violation_onset(rows)
    print(f"stp-sweep: {len(rows)} rows -> {path}")
    print(f"stp-sweep: violation onset "
          f"{'none' if onset is None else f'{onset:.4g}'}")
    return path, rows


def cmd_solve(config, out=None):
    config.require("change", "obs", "costs")
    kernel = build_action_kernel(
        config.frame, config.params, config.change, config.obs, config.grid
    )
    table, policy = value_iteration(
        kernel, config.change, config.costs,
        tol=config.vi_tol, max_iter=config.max_iter,
    )
    cache = out or _cache_dir(config)
    serialize.write_kernel(os.path.join(cache, "kernel.csv"), kernel, config.hash)
    serialize.write_value(os.path.join(cache, "value.csv"), table, config.hash)
    serialize.write_policy(os.path.join(cache, "policy.csv"), policy, config.hash)
    thr = "none" if policy.threshold is None else f"{policy.threshold:.6g}"
    print(f"solve: threshold {thr} ({policy.crossings} crossings), "
          f"{table.sweeps} sweeps -> {cache}")
    return cache, table, policy


def cmd_threshold_sweep(config, f_values, out=None):
    config.require("change", "obs", "costs")
    kernel = build_action_kernel(
        config.frame, config.params, config.change, config.obs, config.grid
    )
    rows = []
    for f in f_values:
        costs = DetectionCosts(f=float(f), d=config.costs.d)
        _, pol_q = value_iteration(
            kernel, config.change, costs,
            tol=config.vi_tol, max_iter=config.max_iter,
        )
        _, pol_c = classical_value_iteration(
            config.change, config.obs, costs, config.grid,
            tol=config.vi_tol, max_iter=config.max_iter,
        )
        thr_q = np.nan if pol_q.threshold is None else pol_q.threshold
        thr_c = np.nan if pol_c.threshold is None else pol_c.threshold
        rows.append((float(f), float(thr_q), float(thr_c)))
    path = out or os.path.join(_cache_dir(config), "thresholds.csv")
    serialize.write_csv(
        path, ("f", "thr_quantum", "thr_classical"), rows, config.hash
    )
    print(f"threshold-sweep: {len(rows)} rows -> {path}")
    return path, rows


def cmd_simulate(config, n_episodes, out=None):
    config.require("change", "obs", "costs", "seed")
    cache = _cache_dir(config)
    try:
        kernel = serialize.read_kernel(os.path.join(cache, "kernel.csv"), config.hash)
        policy = serialize.read_policy(os.path.join(cache, "policy.csv"), config.hash)
    except CacheMiss as exc:
        raise CacheMiss(f"{exc}; run the solve command first") from None
    amap = ActionMap(config.frame, config.params)
    seeds = np.random.SeedSequence(config.seed).spawn(n_episodes)
    rows = []
    costs_sum = 0.0
    costs_sq = 0.0
    false_alarms = 0
    delays = []
    for i, s in enumerate(seeds):
        trace = simulate_episode(
            config.frame, config.params, config.change, config.obs,
            policy, kernel, s, costs=config.costs, action_map=amap,
        )
        delay = max(trace.stop_time - trace.change_time, 0)
        fa = trace.stop_time < trace.change_time
        rows.append((i, trace.change_time, trace.stop_time, delay,
                     fa, trace.cost))
        costs_sum += trace.cost
        costs_sq += trace.cost**2
        false_alarms += int(fa)
        if not fa:
            delays.append(delay)
    path = out or os.path.join(cache, "episodes.csv")
    serialize.write_csv(
        path,
        ("episode", "tau0", "tau", "delay", "false_alarm", "cost"),
        rows,
        config.hash,
    )
    mean = costs_sum / n_episodes
    var = max(costs_sq / n_episodes - mean**2, 0.0)
    stderr = (var * n_episodes / max(n_episodes - 1, 1)) ** 0.5 / n_episodes**0.5
    p_fa = false_alarms / n_episodes
    mean_delay = float(np.mean(delays)) if delays else float("nan")
    print(f"simulate: {n_episodes} episodes -> {path}")
    print(f"simulate: mean cost {mean:.6g} +- {stderr:.3g}, "
          f"P(false alarm) {p_fa:.4g}, mean delay | detection {mean_delay:.4g}")
    return path, mean, stderr, p_fa, mean_delay


def cmd_sensitivity(config, out=None):
    config.require("change", "obs", "costs", "mixture")
    report = sensitivity_bound_check(
        config.frame, config.params, config.mixture, config.change,
        config.obs, config.costs, config.grid,
        tol=config.vi_tol, max_iter=config.max_iter,
    )
    rows = [
        (pi1, lhs, rhs, rhs - lhs)
        for pi1, lhs, rhs in zip(report.points, report.lhs, report.rhs)
    ]
    path = out or os.path.join(_cache_dir(config), "sensitivity.csv")
    serialize.write_csv(
        path, ("pi1", "lhs", "rhs", "slack"), rows, config.hash,
        meta={"K": report.K, "distance": report.distance},
    )
    print(f"sensitivity: K {report.K:.6g}, distance {report.distance:.6g}, "
          f"worst slack {report.worst_slack:.6g} -> {path}")
    return path, report


def _parse_box(text):
    try:
        parts = [seg.split(":") for seg in text.split(",")]
        if len(parts) != 3 or any(len(p) != 2 for p in parts):
            raise ValueError("expected lo:hi,lo:hi,lo:hi for alpha,lambda,phi")
        return tuple((float(lo), float(hi)) for lo, hi in parts)
    except ValueError as exc:
        raise ConfigError(f"bad box {text!r}: {exc}") from None


def cmd_region_scan(config, ref_box, test_box, points_per_axis=5,
                    pi_samples=11, out=None):
    config.require("change", "obs", "costs")
    ref_points = box_grid(*ref_box, points_per_axis=points_per_axis)
    test_points = box_grid(*test_box, points_per_axis=points_per_axis)
    regions, rows = region_scan(
        config.frame, ref_points, test_points, config.change, config.obs,
        config.costs, config.grid, pi_samples=pi_samples,
        tol=config.vi_tol, max_iter=config.max_iter,
    )
    csv_rows = [
        (r.ref.alpha, r.ref.lam, r.ref.phi,
         r.test.alpha, r.test.lam, r.test.phi,
         r.direction, r.certified, r.residual, r.worst_V_margin)
        for r in rows
    ]
    path = out or os.path.join(_cache_dir(config), "region_scan.csv")
    serialize.write_csv(
        path,
        ("alpha_ref", "lambda_ref", "phi_ref",
         "alpha_test", "lambda_test", "phi_test",
         "direction", "certified", "residual", "worst_V_margin"),
        csv_rows,
        config.hash,
    )
    ref_r, test_r = regions
    separated = (
        ref_r.classification == "dominating"
        and test_r.classification == "dominated"
        and ref_r.alpha[0] > test_r.alpha[1]
    )
    print(f"region-scan: {len(rows)} pair records -> {path}")
    print(f"region-scan: ref box {ref_r.classification}, "
          f"test box {test_r.classification}; "
          f"alpha-separated dominating/dominated pair certified: "
          f"{'yes' if separated else 'no'}")
    return path, regions, rows


def _parse_f_values(text):
    values = []
    try:
        for seg in text.split(","):
            if ":" in seg:
                lo, hi = seg.split(":")
                values.extend(range(int(lo), int(hi) + 1))
            else:
                values.append(float(seg))
    except ValueError as exc:
        raise ConfigError(f"bad f values {text!r}: {exc}") from None
    if not values:
        raise ConfigError("empty f value list")
    return [float(v) for v in values]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qdetect",
        description="Quantum-decision change detection experiments",
    )
    parser.add_argument("--config", required=True, help="INI config path")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--grid", type=int, help="belief grid cells override")
    parser.add_argument("--tol", type=float, help="value iteration tolerance override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stp-sweep", help="coupling sweep with violation flags")
    p.add_argument("--phi-points", type=int, default=101)

    sub.add_parser("solve", help="build kernel, solve stopping problem, cache")

    p = sub.add_parser("threshold-sweep", help="quantum vs classical thresholds")
    p.add_argument("--f-values", default="1:10", help="comma list and lo:hi ranges")

    p = sub.add_parser("simulate", help="episodes under the cached policy")
    p.add_argument("--episodes", type=int, default=1000)

    sub.add_parser("sensitivity", help="mismatch robustness bound report")

    p = sub.add_parser("region-scan", help="pairwise dominance over two boxes")
    p.add_argument("--ref-box", default="0.8:1.0,10:100,0.1:0.5",
                   help="alpha lo:hi, lambda lo:hi, phi lo:hi")
    p.add_argument("--test-box", default="0.1:0.5,10:100,0.1:0.5")
    p.add_argument("--points-per-axis", type=int, default=5)
    p.add_argument("--pi-samples", type=int, default=11)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["output.dir"] = args.out
    if args.seed is not None:
        overrides["solver.seed"] = args.seed
    if args.grid is not None:
        overrides["solver.grid_n"] = args.grid
    if args.tol is not None:
        overrides["solver.vi_tol"] = args.tol
    try:
        config = load_config_file(args.config, overrides)
        if args.command == "stp-sweep":
            cmd_stp_sweep(config, n_phi=args.phi_points)
        elif args.command == "solve":
            cmd_solve(config)
        elif args.command == "threshold-sweep":
            cmd_threshold_sweep(config, _parse_f_values(args.f_values))
        elif args.command == "simulate":
            cmd_simulate(config, args.episodes)
        elif args.command == "sensitivity":
            cmd_sensitivity(config)
        elif args.command == "region-scan":
            cmd_region_scan(
                config,
                _parse_box(args.ref_box),
                _parse_box(args.test_box),
                points_per_axis=args.points_per_axis,
                pi_samples=args.pi_samples,
            )
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, NonConvergence, RunawayEpisode) as exc:
        print(f"error [numerical]: {exc}", file=sys.stderr)
        return 3
    except CacheMiss as exc:
        print(f"error [cache-miss]: {exc}", file=sys.stderr)
        return 4
    except QDetectError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
