"""Command-line pipeline: split, compute Gramians, balance, reduce,
bound, simulate, and sweep.

Subcommands
-----------
``heat2d``          generate the heat-transfer benchmark as JSON
``reduce``          full reduction pipeline; writes Gramians, HSVs, the two
                    reduced models and the bound report
``simulate``        time-domain comparison of full vs reduced outputs
``sweep``           bound/error curves over reduced orders and gamma values
``hsv``             Hankel singular values of both pairs as CSV
``check-stability`` spectral certificate for a system at one gamma
``oracles``         run the independent oracle suite

Exit codes: 0 success, 2 usage/configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys as _sysmod
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .balancing import balance_pair, transform_and_partition, write_hsv_csv
from .benchmarks import Heat2dConfig, heat2d
from .bounds import bound_B, bound_total, bound_x0_apriori, bound_x0_posteriori
from .errors import BilredError
from .gramians import GramianSet, compute_gramian_set
from .model import BilinearSystem, InputSignal, split_system
from .matrixeq import check_generalized_stability
from .oracles import run_oracles
from .reduction import (
    check_reduced_stability,
    reduce_B_bt,
    reduce_B_spa,
    reduce_x0_bt,
    reduce_x0_spa,
)
from .sim import (
    l2_error,
    l2_norm,
    pointwise_abs_error,
    simulate_full,
    simulate_rom_homogeneous,
    simulate_rom_inhomogeneous,
    write_error_csv,
    write_trajectory_csv,
)

DEFAULT_FLOOR = 1e-12  # spectral floor for full-order balancing of the pipeline


def _fmt(x):
    return f"{x:.12e}"


def _parse_range(text, name):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"{name} must look like a:b:n")
    a, b, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or not b >= a or (count == 1 and b != a):
        raise ValueError(f"invalid {name} specification {text!r}")
    return np.linspace(a, b, count)


def _parse_int_range(text, name):
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"{name} must look like a:b")
    a, b = int(parts[0]), int(parts[1])
    if a < 1 or b < a:
        raise ValueError(f"invalid {name} specification {text!r}")
    return list(range(a, b + 1))


def _load_system(args):
    if args.system is not None:
        path = Path(args.system)
        if not path.exists():
            raise FileNotFoundError(f"system file not found: {path}")
        return BilinearSystem.load_json(path)
    return heat2d(Heat2dConfig(k=args.k))


def _make_input(args, sys):
    spec = args.input
    if spec == "expcos":
        return InputSignal.for_system(sys, "expcos", T=args.T)
    if spec == "zero":
        return InputSignal.for_system(sys, "zero", T=args.T)
    if spec.startswith("table:"):
        path = Path(spec.split(":", 1)[1])
        if not path.exists():
            raise FileNotFoundError(f"input table not found: {path}")
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return InputSignal.for_system(sys, "table", T=args.T,
                                      times=rows[:, 0], values=rows[:, 1:])
    raise ValueError(f"unknown input specification {spec!r}")


def _gramians_cached(sys, gamma, out_dir, use_cache=True, refine_steps=0):
    cache_dir = Path(out_dir) / "cache"
    key = f"gramians-{sys.content_hash()}-{repr(float(gamma))}.json"
    cache_file = cache_dir / key
    if use_cache and cache_file.exists():
        return GramianSet.from_dict(json.loads(cache_file.read_text()))
    gs = compute_gramian_set(sys, gamma, refine_steps=refine_steps)
    if use_cache:
        cache_dir.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(json.dumps(gs.to_dict()))
    return gs


def _write_manifest(out_dir, command, config, t0):
    manifest = {
        "command": command,
        "config": config,
        "versions": {
            "bilred": __version__,
            "numpy": np.__version__,
        },
        "wall_seconds": time.time() - t0,
    }
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _reduce_once(sys, gs, rx0, rb, method_x0, method_b, tie_policy="warn"):
    hom, inhom = split_system(sys)
    bal_x0 = balance_pair(gs.P0, gs.Q, floor=DEFAULT_FLOOR, pair="x0")
    bal_b = balance_pair(gs.PB, gs.Q, floor=DEFAULT_FLOOR, pair="B")
    part_x0 = transform_and_partition(hom, bal_x0, rx0, tie_policy=tie_policy)
    part_b = transform_and_partition(inhom, bal_b, rb, tie_policy=tie_policy)
    rom_x0 = (reduce_x0_bt(part_x0) if method_x0 == "bt"
              else reduce_x0_spa(part_x0))
    rom_b = reduce_B_bt(part_b) if method_b == "bt" else reduce_B_spa(part_b)
    return hom, inhom, bal_x0, bal_b, part_x0, part_b, rom_x0, rom_b


def cmd_heat2d(args):
    cfg = Heat2dConfig(k=args.k, initial_value=args.x0_value,
                       robin_scale=args.robin_scale)
    sys = heat2d(cfg)
    out = Path(args.out)
    sys.save_json(out)
    print(f"wrote {out} (n={sys.n}, m={sys.m}, p={sys.p})")
    return 0


def cmd_check_stability(args):
    sys = _load_system(args)
    stable, max_real = check_generalized_stability(sys.A, sys.N, args.gamma)
    print(json.dumps({"gamma": args.gamma, "stable": stable,
                      "max_real": max_real}))
    return 0


def cmd_hsv(args):
    t0 = time.time()
    sys = _load_system(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gs = _gramians_cached(sys, args.gamma, out_dir, use_cache=not args.no_cache)
    bal_x0 = balance_pair(gs.P0, gs.Q, floor=DEFAULT_FLOOR, pair="x0")
    bal_b = balance_pair(gs.PB, gs.Q, floor=DEFAULT_FLOOR, pair="B")
    write_hsv_csv(out_dir / "hsv_x0.csv", bal_x0.hsv)
    write_hsv_csv(out_dir / "hsv_B.csv", bal_b.hsv)
    _write_manifest(out_dir, "hsv", {"gamma": args.gamma}, t0)
    print(f"wrote {out_dir}/hsv_x0.csv and {out_dir}/hsv_B.csv")
    return 0


def _select_gamma(args, sys, out_dir, use_cache):
    """Fixed gamma, or the one minimizing the total bound over a range."""
    if args.gamma_range is None:
        return float(args.gamma), None
    gammas = _parse_range(args.gamma_range, "--gamma-range")
    u = _make_input(args, sys)
    rows = []
    best = (np.inf, gammas[0])
    for g in gammas:
        try:
            gs = _gramians_cached(sys, g, out_dir, use_cache=use_cache)
            hom, inhom, bal_x0, bal_b, part_x0, part_b, rom_x0, rom_b = \
                _reduce_once(sys, gs, args.rx0, args.rb, args.method_x0,
                             args.method_b)
            rep_x0 = bound_x0_apriori(part_x0, rom_x0, g, u, sys.v0,
                                      T=args.T, dt=args.dt)
            rep_b = bound_B(bal_b.hsv, rom_b.r, g, u, method=rom_b.method,
                            T=args.T, dt=args.dt)
            total = bound_total(rep_x0, rep_b).bound_value
            rows.append((g, total, "ok"))
            if total < best[0]:
                best = (total, g)
        except BilredError as exc:
            rows.append((g, np.nan, f"failed: {exc}"))
    return float(best[1]), rows


def cmd_reduce(args):
    t0 = time.time()
    sys = _load_system(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    use_cache = not args.no_cache
    gamma, gamma_curve = _select_gamma(args, sys, out_dir, use_cache)
    gs = _gramians_cached(sys, gamma, out_dir, use_cache=use_cache,
                          refine_steps=args.pb_refine_steps)
    hom, inhom, bal_x0, bal_b, part_x0, part_b, rom_x0, rom_b = _reduce_once(
        sys, gs, args.rx0, args.rb, args.method_x0, args.method_b)
    u = _make_input(args, sys)

    (out_dir / "gramians.json").write_text(json.dumps(gs.to_dict()) + "\n")
    write_hsv_csv(out_dir / "hsv_x0.csv", bal_x0.hsv)
    write_hsv_csv(out_dir / "hsv_B.csv", bal_b.hsv)
    (out_dir / "rom_x0.json").write_text(json.dumps(rom_x0.to_dict()) + "\n")
    (out_dir / "rom_B.json").write_text(json.dumps(rom_b.to_dict()) + "\n")

    rep_x0 = bound_x0_apriori(part_x0, rom_x0, gamma, u, sys.v0,
                              T=args.T, dt=args.dt)
    rep_post = bound_x0_posteriori(hom, rom_x0, gs.P0, gamma, u, sys.v0,
                                   T=args.T, dt=args.dt)
    rep_b = bound_B(bal_b.hsv, rom_b.r, gamma, u, method=rom_b.method,
                    T=args.T, dt=args.dt)
    rep_tot = bound_total(rep_x0, rep_b)
    stab_x0 = check_reduced_stability(rom_x0, gamma)
    stab_b = check_reduced_stability(rom_b, gamma)
    bounds_payload = {
        "gamma": gamma,
        "x0": rep_x0.to_dict(),
        "x0_posteriori": rep_post.to_dict(),
        "B": rep_b.to_dict(),
        "total": rep_tot.to_dict(),
        "reduced_stability": {
            "x0": {"stable": stab_x0[0], "max_real": stab_x0[1]},
            "B": {"stable": stab_b[0], "max_real": stab_b[1]},
        },
    }
    if gamma_curve is not None:
        bounds_payload["gamma_curve"] = [
            {"gamma": g, "total_bound": b, "status": s} for g, b, s in gamma_curve
        ]
    (out_dir / "bounds.json").write_text(json.dumps(bounds_payload, indent=2) + "\n")
    _write_manifest(out_dir, "reduce", _config_dict(args, gamma), t0)
    print(f"wrote pipeline artifacts to {out_dir} (gamma={gamma})")
    return 0


def cmd_simulate(args):
    t0 = time.time()
    sys = _load_system(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    use_cache = not args.no_cache
    gamma, _ = _select_gamma(args, sys, out_dir, use_cache)
    gs = _gramians_cached(sys, gamma, out_dir, use_cache=use_cache)
    hom, inhom, bal_x0, bal_b, part_x0, part_b, rom_x0, rom_b = _reduce_once(
        sys, gs, args.rx0, args.rb, args.method_x0, args.method_b)
    u = _make_input(args, sys)
    dt = args.dt / 2.0 if args.halve_dt else args.dt

    y_full = simulate_full(sys, u, T=args.T, dt=dt)
    y_hom = simulate_full(hom, u, T=args.T, dt=dt)
    y_inh = simulate_full(inhom, u, T=args.T, dt=dt)
    y_rx0 = simulate_rom_homogeneous(rom_x0, u, sys.v0, T=args.T, dt=dt)
    y_rb = simulate_rom_inhomogeneous(rom_b, u, T=args.T, dt=dt)
    y_rom_total = y_rx0.y + y_rb.y

    write_trajectory_csv(out_dir / "y_full.csv", y_full)
    write_trajectory_csv(
        out_dir / "y_rom.csv",
        type(y_full)(t=y_full.t, y=y_rom_total), label="y")
    write_error_csv(out_dir / "eps_x0.csv", y_hom.t,
                    pointwise_abs_error(y_hom, y_rx0))
    write_error_csv(out_dir / "eps_B.csv", y_inh.t,
                    pointwise_abs_error(y_inh, y_rb))

    rep_x0 = bound_x0_apriori(part_x0, rom_x0, gamma, u, sys.v0,
                              T=args.T, dt=dt)
    rep_b = bound_B(bal_b.hsv, rom_b.r, gamma, u, method=rom_b.method,
                    T=args.T, dt=dt)
    err_x0 = l2_error(y_hom, y_rx0)
    err_b = l2_error(y_inh, y_rb)
    err_tot = l2_error(y_full, type(y_full)(t=y_full.t, y=y_rom_total))
    summary = {
        "gamma": gamma,
        "l2_error_x0": err_x0,
        "l2_error_B": err_b,
        "l2_error_total": err_tot,
        "bound_x0": rep_x0.bound_value,
        "bound_B": rep_b.bound_value,
        "bound_total": rep_x0.bound_value + rep_b.bound_value,
        "ratio_x0": rep_x0.bound_value / err_x0 if err_x0 > 0 else np.inf,
        "ratio_B": rep_b.bound_value / err_b if err_b > 0 else np.inf,
        "y_full_l2": l2_norm(y_full),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest(out_dir, "simulate", _config_dict(args, gamma), t0)
    print(f"wrote simulation artifacts to {out_dir}")
    return 0


def _sweep_point(sys, gs, pair, method, r, gamma, u, T, dt, y_ref, y_norm,
                 bal_x0, bal_b, hom, inhom):
    try:
        if pair == "x0":
            part = transform_and_partition(hom, bal_x0, r, tie_policy="warn")
            rom = reduce_x0_bt(part) if method == "bt" else reduce_x0_spa(part)
            rep = bound_x0_apriori(part, rom, gamma, u, sys.v0, T=T, dt=dt)
            y_rom = simulate_rom_homogeneous(rom, u, sys.v0, T=T, dt=dt)
        else:
            part = transform_and_partition(inhom, bal_b, r, tie_policy="warn")
            rom = reduce_B_bt(part) if method == "bt" else reduce_B_spa(part)
            rep = bound_B(bal_b.hsv, rom.r, gamma, u, method=method, T=T, dt=dt)
            y_rom = simulate_rom_inhomogeneous(rom, u, T=T, dt=dt)
        err = l2_error(y_ref, y_rom)
        return {
            "pair": pair, "method": method, "r": r, "gamma": gamma,
            "bound": rep.bound_value, "measured_l2": err,
            "normalized_bound": rep.bound_value / y_norm if y_norm > 0 else np.inf,
            "normalized_l2": err / y_norm if y_norm > 0 else np.inf,
            "status": "ok",
        }
    except BilredError as exc:
        return {"pair": pair, "method": method, "r": r, "gamma": gamma,
                "bound": np.nan, "measured_l2": np.nan,
                "normalized_bound": np.nan, "normalized_l2": np.nan,
                "status": f"failed: {exc}"}


def cmd_sweep(args):
    t0 = time.time()
    sys = _load_system(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    use_cache = not args.no_cache
    gammas = (_parse_range(args.gamma_range, "--gamma-range")
              if args.gamma_range is not None else [float(args.gamma)])
    orders = _parse_int_range(args.r_range, "--r-range")
    if len(gammas) == 0 or len(orders) == 0:
        raise ValueError("empty sweep range")
    u = _make_input(args, sys)
    hom, inhom = split_system(sys)
    y_hom = simulate_full(hom, u, T=args.T, dt=args.dt)
    y_inh = simulate_full(inhom, u, T=args.T, dt=args.dt)
    norm_hom, norm_inh = l2_norm(y_hom), l2_norm(y_inh)

    tasks = []
    for gamma in gammas:
        gs = _gramians_cached(sys, gamma, out_dir, use_cache=use_cache)
        bal_x0 = balance_pair(gs.P0, gs.Q, floor=DEFAULT_FLOOR, pair="x0")
        bal_b = balance_pair(gs.PB, gs.Q, floor=DEFAULT_FLOOR, pair="B")
        for r in orders:
            for pair, method in (("x0", "bt"), ("x0", "spa"),
                                 ("B", "bt"), ("B", "spa")):
                y_ref = y_hom if pair == "x0" else y_inh
                y_nrm = norm_hom if pair == "x0" else norm_inh
                tasks.append((sys, gs, pair, method, r, gamma, u, args.T,
                              args.dt, y_ref, y_nrm, bal_x0, bal_b, hom, inhom))

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(lambda t: _sweep_point(*t), tasks))
    else:
        rows = [_sweep_point(*t) for t in tasks]
    rows.sort(key=lambda row: (row["gamma"], row["r"], row["pair"], row["method"]))

    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "method", "r", "gamma", "bound",
                         "measured_l2", "normalized_bound", "normalized_l2",
                         "status"])
        for row in rows:
            writer.writerow([
                row["pair"], row["method"], row["r"], _fmt(row["gamma"]),
                _fmt(row["bound"]), _fmt(row["measured_l2"]),
                _fmt(row["normalized_bound"]), _fmt(row["normalized_l2"]),
                row["status"],
            ])
    _write_manifest(out_dir, "sweep", _config_dict(args, None), t0)
    n_failed = sum(1 for row in rows if row["status"] != "ok")
    print(f"wrote {out_dir}/sweep.csv ({len(rows)} rows, {n_failed} failed)")
    return 0


def cmd_oracles(args):
    report = run_oracles(report_path=args.report)
    for r in report.results:
        state = "pass" if r.passed else "FAIL"
        print(f"[{state}] {r.fixture} / {r.oracle}: deviation {r.deviation:.3e} "
              f"(tol {r.tol:.1e}) {r.message}")
    for w in report.warnings:
        print(f"[warn] {w}")
    return 0 if report.passed else 3


def _config_dict(args, gamma):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    if gamma is not None:
        cfg["gamma_effective"] = gamma
    return cfg


def _add_common(parser, with_reduction=True):
    parser.add_argument("--system", help="system JSON file")
    parser.add_argument("--k", type=int, default=10,
                        help="heat benchmark grid size when no file is given")
    parser.add_argument("--gamma", type=float, default=2.0)
    parser.add_argument("--gamma-range", dest="gamma_range",
                        help="a:b:n sweep specification")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--no-cache", dest="no_cache", action="store_true")
    if with_reduction:
        parser.add_argument("--rx0", type=int, default=10)
        parser.add_argument("--rb", type=int, default=10)
        parser.add_argument("--method-x0", dest="method_x0",
                            choices=("bt", "spa"), default="bt")
        parser.add_argument("--method-b", dest="method_b",
                            choices=("bt", "spa"), default="bt")
        parser.add_argument("--input", default="expcos",
                            help="expcos | zero | table:FILE")
        parser.add_argument("--T", type=float, default=1.0)
        parser.add_argument("--dt", type=float, default=1e-4)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bilred",
        description="Model order reduction for bilinear systems with "
                    "non-zero initial conditions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heat2d", help="generate the heat benchmark")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--x0-value", dest="x0_value", type=float, default=0.1)
    p.add_argument("--robin-scale", dest="robin_scale", type=float, default=1.0)
    p.add_argument("--out", default="sys.json")
    p.set_defaults(func=cmd_heat2d)

    p = sub.add_parser("check-stability", help="spectral stability certificate")
    p.add_argument("--system")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gamma", type=float, default=2.0)
    p.set_defaults(func=cmd_check_stability)

    p = sub.add_parser("hsv", help="Hankel singular values of both pairs")
    _add_common(p, with_reduction=False)
    p.set_defaults(func=cmd_hsv)

    p = sub.add_parser("reduce", help="run the reduction pipeline")
    _add_common(p)
    p.add_argument("--pb-refine-steps", dest="pb_refine_steps", type=int,
                   default=0)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="simulate full vs reduced outputs")
    _add_common(p)
    p.add_argument("--halve-dt", dest="halve_dt", action="store_true",
                   help="run at half the step size (grid refinement check)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="bound/error curves over (r, gamma)")
    _add_common(p)
    p.add_argument("--r-range", dest="r_range", default="1:16")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracles", help="run the independent oracle suite")
    p.add_argument("action", nargs="?", default="run", choices=("run",))
    p.add_argument("--report", help="write a JSON report to this path")
    p.set_defaults(func=cmd_oracles)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}),
              file=_sysmod.stderr)
        return 2
    except BilredError as exc:
        print(json.dumps({"error": str(exc), "kind": "numerical"}),
              file=_sysmod.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
