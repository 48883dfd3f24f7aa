"""Command line front end.

Every subcommand writes delimited text (CSV, JSON) under --out; figure
rendering is on by default and writes PNGs next to the data (--no-figures
turns it off).  Stochastic subcommands require --seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import (
    initial_profile_values,
    kernel_from_dict,
    load_config,
    params_from_dict,
    params_to_dict,
    parse_colors,
)
from .control import DEFAULT_MARGIN, mollify_path, synthesize_potential, verify_roundtrip
from .cost import control_cost, path_cost
from .errors import ConfigError
from .experiments import (
    run_diagnostics,
    run_hydrodynamic_convergence,
    run_simulation_batch,
    run_tilted_estimate,
)
from .grids import PotentialGrid, constant_potential
from .io import (
    read_path_csv,
    read_potential_csv,
    write_json,
    write_path_csv,
    write_potential_csv,
)
from .meanfield import initial_profile, integrate
from .measures import TestBank, path_distance, rho
from .model import KernelSpec, ModelParams


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file with model/run settings")
    p.add_argument("--dim", type=int, dest="d")
    p.add_argument("--L", type=int, help="lattice side length")
    p.add_argument("--theta", type=float, help="random field strength")
    p.add_argument("--beta", type=float)
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--colors", help='field values and probabilities, e.g. "1:0.5,-1:0.5"')
    p.add_argument("--kernel-profile", choices=["gaussian", "raised_cosine", "bump", "zero"])
    p.add_argument("--kernel-width", type=float)
    p.add_argument("--kernel-amplitude", type=float)


def _build_params(args) -> ModelParams:
    cfg: dict = {}
    if args.config:
        cfg = dict(load_config(args.config))
    for key in ("d", "L", "theta", "beta", "T"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "colors", None):
        cfg["colors"] = [list(c) for c in parse_colors(args.colors)]
    kern = dict(cfg.get("kernel", {}))
    if getattr(args, "kernel_profile", None):
        kern["profile"] = args.kernel_profile
    if getattr(args, "kernel_width", None) is not None:
        kern["width"] = args.kernel_width
    if getattr(args, "kernel_amplitude", None) is not None:
        kern["amplitude"] = args.kernel_amplitude
    if kern:
        cfg["kernel"] = kern
    if "colors" not in cfg:
        cfg["colors"] = [[1.0, 0.5], [-1.0, 0.5]]
    for key, default in (("d", 1), ("L", 64), ("theta", 1.0), ("T", 1.0)):
        cfg.setdefault(key, default)
    return params_from_dict(cfg)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _num_list(spec, flag: str, cast=int) -> list:
    try:
        return [cast(tok) for tok in str(spec).split(",")]
    except ValueError:
        raise ConfigError(f"{flag} wants comma separated numbers, got {spec!r}") from None


def _load_tilt(spec: str, params: ModelParams, M: int) -> PotentialGrid:
    """--tilt accepts "const:v0,v1,..." or a potential CSV path."""
    if spec.startswith("const:"):
        vals = _num_list(spec[len("const:"):], "--tilt", float)
        if len(vals) != params.n_colors:
            raise ConfigError("tilt needs one value per color")
        return constant_potential(vals, params.d, M)
    return read_potential_csv(spec, params.d)


def _cmd_simulate(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    V = _load_tilt(args.tilt, params, params.L) if args.tilt else None
    records = run_simulation_batch(
        params, args.replicas, args.seed, m0_spec=args.m0, dt_rec=args.dt_rec,
        M=args.M, V=V,
    )
    summary = {
        "model": params_to_dict(params),
        "seed": args.seed,
        "replicas": args.replicas,
        "version": __version__,
        "per_replica": [
            {
                "events": r.n_events,
                "log_weight": r.log_weight,
                "final_space_mean": r.path.fields[-1].mean(
                    axis=tuple(range(1, 1 + params.d))
                ).tolist(),
            }
            for r in records
        ],
    }
    for i, rec in enumerate(records):
        write_path_csv(os.path.join(out, f"trajectory_{i:03d}.csv"), rec.path)
    write_json(os.path.join(out, "simulate.json"), summary)
    if not args.no_figures:
        from .figures import plot_path

        plot_path(records[0].path, os.path.join(out, "trajectory_000.png"),
                  title="empirical trajectory (replica 0)")
    print(f"simulate: {args.replicas} replicas, "
          f"{sum(r.n_events for r in records)} events -> {out}")
    return 0


def _cmd_solve_pde(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    m0 = initial_profile_values(args.m0, args.M, params.d)
    V = _load_tilt(args.tilt, params, args.M) if args.tilt else None
    path = integrate(initial_profile(params, m0, args.M), params, V=V,
                     dt=args.dt, dt_rec=args.dt_rec)
    write_path_csv(os.path.join(out, "pde.csv"), path)
    write_json(os.path.join(out, "pde.json"), {
        "model": params_to_dict(params),
        "M": args.M,
        "dt": args.dt,
        "box_margin": path.box_margin(),
        "final_space_mean": path.fields[-1].mean(
            axis=tuple(range(1, 1 + params.d))).tolist(),
        "version": __version__,
    })
    if not args.no_figures:
        from .figures import plot_path

        plot_path(path, os.path.join(out, "pde.png"), title="mesoscopic flow")
    print(f"solve-pde: {path.n_times} records, box margin {path.box_margin():.4f} -> {out}")
    return 0


def _cmd_rate(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    path = read_path_csv(args.path, params.colors, params.d)
    m0 = initial_profile_values(args.m0, path.M, params.d) if args.m0 else None
    report = path_cost(path, params, m0=m0)
    payload = {
        "model": params_to_dict(params),
        "value": None if report.infinite else report.value,
        "infinite": report.infinite,
        "reason": report.reason,
        "per_time": None if report.infinite else report.per_time().tolist(),
        "per_color": None if report.infinite else report.per_color().tolist(),
        "version": __version__,
    }
    write_json(os.path.join(out, "rate.json"), payload)
    if not args.no_figures and not report.infinite:
        from .figures import plot_rate

        plot_rate(report.times, report.node_costs, os.path.join(out, "rate.png"))
    if report.infinite:
        print(f"rate: infinite ({report.reason}) -> {out}")
    else:
        print(f"rate: {report.value:.6f} -> {out}")
    return 0


def _cmd_synthesize(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    path = read_path_csv(args.path, params.colors, params.d)
    if args.mollify:
        path = mollify_path(path, params, args.eps0, args.eps1, args.eta)
        write_path_csv(os.path.join(out, "mollified.csv"), path)
    V = synthesize_potential(path, params, margin=args.margin)
    write_potential_csv(os.path.join(out, "potential.csv"), V)
    payload = {
        "model": params_to_dict(params),
        "margin": args.margin,
        "sup_potential": V.sup_norm(),
        "control_cost": control_cost(path, V, params),
        "version": __version__,
    }
    if args.verify:
        rt = verify_roundtrip(path, params, margin=args.margin)
        payload["roundtrip_sup_error"] = rt.sup_error
        payload["path_cost"] = rt.path_cost_value
        payload["cost_gap"] = rt.cost_gap
    write_json(os.path.join(out, "synthesize.json"), payload)
    if not args.no_figures:
        from .figures import plot_potential

        plot_potential(V, os.path.join(out, "potential.png"))
    print(f"synthesize-control: sup|V| = {V.sup_norm():.4f} -> {out}")
    return 0


def _cmd_tilt_estimate(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    L_values = _num_list(args.L_values, "--L-values")
    V_values = _num_list(args.V, "--V", float)
    counts = _num_list(args.replicas, "--replicas")
    report = run_tilted_estimate(
        params, L_values, V_values, args.delta,
        counts[0] if len(counts) == 1 else counts, args.seed,
        m0_spec=args.m0, dt_rec=args.dt_rec, pde_M=args.M,
    )
    write_json(os.path.join(out, "tilt_estimate.json"), report)
    if not args.no_figures:
        from .figures import plot_tilt

        plot_tilt(report, os.path.join(out, "tilt_estimate.png"))
    lines = []
    for e in report["per_L"]:
        if e["inconclusive"]:
            lines.append(f"  L={e['L']}: no hits (inconclusive)")
        else:
            lines.append(f"  L={e['L']}: -gamma^d log Q = {e['minus_gamma_d_log_Q']:.5f}"
                         f" (hits {e['n_hits']}/{e['n_replicas']})")
    print("tilt-estimate: control cost "
          f"{report['control_cost']:.5f}, path cost {report['quenched_cost']:.5f}")
    print("\n".join(lines))
    return 0


def _cmd_metrics(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    a = read_path_csv(args.path, params.colors, params.d)
    b = read_path_csv(args.other, params.colors, params.d)
    bank = TestBank(params.d, args.bank)
    dist = path_distance(a, b, bank)
    per_time = [
        float(rho(a.fields[k], b.fields[k], params.d, bank)) for k in range(a.n_times)
    ]
    write_json(os.path.join(out, "metrics.json"), {
        "path_distance": dist,
        "per_time": per_time,
        "times": a.times.tolist(),
        "bank_depth": args.bank,
        "version": __version__,
    })
    print(f"metrics: path distance {dist:.6f} -> {out}")
    return 0


def _cmd_diagnostics(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    report = run_diagnostics(
        params, args.seed,
        l_values=_num_list(args.l_values, "--l-values"),
        delta=args.delta,
        martingale_replicas=args.replicas,
        dt_rec=args.dt_rec,
    )
    write_json(os.path.join(out, "diagnostics.json"), report)
    if not args.no_figures:
        from .figures import plot_diagnostics

        plot_diagnostics(report, os.path.join(out, "diagnostics.png"))
    mart = report["martingale"]
    print(f"diagnostics: martingale var/qv = {mart['ratio']:.4f}, "
          f"replacement error {report['replacement']['error']:.3e} -> {out}")
    return 0


def _cmd_hydro(args) -> int:
    params = _build_params(args)
    out = _outdir(args)
    L_values = _num_list(args.L_values, "--L-values")
    report = run_hydrodynamic_convergence(
        params, L_values, args.replicas, args.seed, m0_spec=args.m0,
        dt_rec=args.dt_rec, bank_K=args.bank, pde_M=args.M,
    )
    write_json(os.path.join(out, "hydro.json"), report)
    if not args.no_figures:
        from .figures import plot_hydro

        plot_hydro(report, os.path.join(out, "hydro.png"))
    for e in report["per_L"]:
        print(f"  L={e['L']}: median deviations {np.round(e['median'], 5).tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kacglauber",
        description="Spin-flip dynamics with long-range interaction and a "
                    "quenched random field: simulation, mesoscopic limits, "
                    "rate functionals, and controlled sampling.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="event-driven replica simulation")
    _add_model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--m0", default="constant:0.0")
    p.add_argument("--dt-rec", type=float, default=1e-2)
    p.add_argument("--M", type=int, default=None, help="snapshot resolution")
    p.add_argument("--tilt", help='potential CSV or "const:v0,v1"')
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve-pde", help="integrate the mesoscopic flow")
    _add_model_args(p)
    p.add_argument("--M", type=int, default=64, help="mesh points per dimension")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--dt-rec", type=float, default=1e-2)
    p.add_argument("--m0", default="constant:0.0")
    p.add_argument("--tilt", help='potential CSV or "const:v0,v1"')
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_solve_pde)

    p = sub.add_parser("rate", help="action of a trajectory CSV")
    _add_model_args(p)
    p.add_argument("--path", required=True, help="trajectory CSV")
    p.add_argument("--m0", default=None, help="check the quenched initial condition")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_rate)

    p = sub.add_parser("synthesize-control", help="potential that realizes a trajectory")
    _add_model_args(p)
    p.add_argument("--path", required=True, help="trajectory CSV")
    p.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    p.add_argument("--mollify", action="store_true")
    p.add_argument("--eps0", type=float, default=0.05, help="temporal mollifier width")
    p.add_argument("--eps1", type=float, default=0.1, help="spatial mollifier radius")
    p.add_argument("--eta", type=float, default=0.05, help="untouched initial layer")
    p.add_argument("--verify", action="store_true", help="re-integrate under the potential")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("tilt-estimate", help="importance-sampled neighborhood decay rate")
    _add_model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--L-values", default="32,64", help="comma separated lattice sizes")
    p.add_argument("--V", default="-0.5,0.5", help="constant tilt per color")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--replicas", default="50",
                   help="replica count, or one comma separated count per lattice size")
    p.add_argument("--m0", default="constant:0.0")
    p.add_argument("--dt-rec", type=float, default=5e-2)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_tilt_estimate)

    p = sub.add_parser("metrics", help="bounded-Lipschitz distance between trajectory CSVs")
    _add_model_args(p)
    p.add_argument("--path", required=True)
    p.add_argument("--other", required=True)
    p.add_argument("--bank", type=int, default=16, help="test function bank depth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("diagnostics", help="ergodic, replacement, and martingale checks")
    _add_model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--l-values", default="1,2,4,8")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--dt-rec", type=float, default=5e-2)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_diagnostics)

    p = sub.add_parser("hydro-convergence",
                       help="empirical-vs-mesoscopic deviation over lattice sizes")
    _add_model_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--L-values", default="16,32,64")
    p.add_argument("--replicas", type=int, default=8)
    p.add_argument("--m0", default="constant:0.0")
    p.add_argument("--dt-rec", type=float, default=5e-2)
    p.add_argument("--bank", type=int, default=2)
    p.add_argument("--M", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_hydro)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
