"""Command line entry point: ``synth``, ``estimate``, ``sweep`` and ``probe``."""
import argparse
import sys
import warnings
from dataclasses import replace

import numpy as np

from .harness import (ExperimentSpec, complexity_probe, format_probe, load_config,
                      loglog_slope, run_experiment, spec_from_mapping, trial_seed,
                      write_records, write_summary)
from .io import read_tensor, write_tensor

DEFAULT_PROBE = "12,20,20,8,5;12,20,20,16,5;12,20,20,32,5"


def _spec(args):
    spec = spec_from_mapping(load_config(args.config)) if args.config else ExperimentSpec()
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, cfg=replace(spec.cfg, seed=args.seed))
    if getattr(args, "workers", None) is not None:
        spec = replace(spec, workers=args.workers)
    return spec


def _print_scene(scene, out):
    out.write("path  theta_deg   phi_deg    tau_ns  group\n")
    for i, p in enumerate(scene.paths):
        out.write(f"{i:4d} {np.degrees(p.elevation_rad):10.4f} {np.degrees(p.azimuth_rad):9.4f}"
                  f" {p.delay_s * 1e9:9.4f} {p.coherence_group:6d}\n")


def _print_result(res, out):
    out.write("path  theta_deg   phi_deg    tau_ns   |lam_v|   |lam_f|\n")
    for i in range(res.k):
        out.write(f"{i:4d} {np.degrees(res.elevations[i]):10.4f} {np.degrees(res.azimuths[i]):9.4f}"
                  f" {res.delays[i] * 1e9:9.4f} {abs(res.eig_v[i]):9.5f} {abs(res.eig_f[i]):9.5f}\n")
    if res.pairing != "shared":
        out.write(f"pairing: {res.pairing}\n")


def cmd_synth(args, out):
    spec = _spec(args)
    rng = np.random.default_rng(trial_seed(spec.seed, 0))
    scene = spec.draw_scene(rng)
    y, sigma2 = spec.receiver().observe(scene, rng)
    write_tensor(args.out, y)
    out.write(f"wrote {args.out} shape={y.shape} noise_var={sigma2:.6g}\n")
    _print_scene(scene, out)
    return 0


def cmd_estimate(args, out):
    spec = _spec(args)
    rx = spec.receiver()
    if args.input:
        y = read_tensor(args.input)
        k = args.k if args.k is not None else spec.k
        coherent = spec.n_coherent > 1
    else:
        rng = np.random.default_rng(trial_seed(spec.seed, 0))
        scene = spec.draw_scene(rng)
        y, _ = rx.observe(scene, rng)
        k = scene.k
        coherent = scene.has_coherent_paths()
        out.write("truth\n")
        _print_scene(scene, out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = rx.estimate(y, k, plan=spec.plan(coherent), n_grid=spec.n_grid,
                          method=spec.method, subspace=spec.subspace, refine=spec.refine,
                          peak_select=spec.peak_select)
    out.write("estimate\n")
    _print_result(res, out)
    for w in caught:
        out.write(f"warning: {w.message}\n")
    return 0


def cmd_sweep(args, out):
    spec = _spec(args)
    records, summary = run_experiment(spec)
    write_records(records, args.out)
    if args.summary:
        write_summary(summary, args.summary)
    out.write("sweep_value  rmse_theta_deg  rmse_phi_deg  rmse_tau_ns  failure_rate\n")
    for row in summary:
        out.write(f"{row['sweep_value']:11.4g} {row['rmse_theta_deg']:15.6g} {row['rmse_phi_deg']:13.6g}"
                  f" {row['rmse_tau_ns']:12.6g} {row['failure_rate']:13.4f}\n")
    return 0


def _parse_sizes(text):
    sizes = []
    for chunk in text.split(";"):
        vals = [int(v) for v in chunk.split(",")]
        if len(vals) != 5:
            raise argparse.ArgumentTypeError("each size needs P,M_v,M_f,M_t,K")
        sizes.append(tuple(vals))
    return sizes


def cmd_probe(args, out):
    rows = complexity_probe(args.sizes, repeats=args.repeats, n_grid=args.n_grid)
    out.write(format_probe(rows) + "\n")
    m_t = [r["m_t"] for r in rows]
    if len(set(m_t)) > 1 and len({(r["p_max"], r["m_v"], r["m_f"], r["k"]) for r in rows}) == 1:
        slope = loglog_slope(m_t, [r["decomposition_s"] for r in rows])
        out.write(f"decomposition log-log slope vs M_t: {slope:.3f}\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ucya", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic measurement tensor")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("estimate", help="estimate paths from a dump or a fresh synthesis")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--input", help="tensor dump written by 'synth'")
    s.add_argument("--k", type=int, help="number of paths (defaults to the config)")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", help="run a Monte-Carlo sweep and write CSV")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True, help="per-path record CSV")
    s.add_argument("--summary", help="per-point RMSE CSV")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("probe", help="time the decomposition and estimation stages")
    s.add_argument("--sizes", type=_parse_sizes, default=_parse_sizes(DEFAULT_PROBE),
                   help="';'-separated P,M_v,M_f,M_t,K tuples")
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--n-grid", type=int, default=50)
    s.set_defaults(func=cmd_probe)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
