"""Command-line front end: scans, spectra, Stokes analysis, simulation, figures.

Every run writes its outputs (CSV or JSON) plus a JSON manifest recording
the command line, the resolved configuration, the library version, the seed
where applicable, timestamps, and the list of output files.  Analytic
commands are deterministic: re-running the manifest's command line
reproduces byte-identical CSV.

Exit codes: 0 ok, 2 configuration error, 3 unstable operating point,
4 simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import sys

import numpy as np

from . import __version__, linfluct, sdesim, squeeze, steady, stokes
from .errors import (
    InsufficientDataError,
    InvalidParameterError,
    NearSingularError,
    NoThresholdError,
    UnreliableRegimeError,
    VKerrError,
)
from .params import ModelParams, from_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_SIMULATION = 4


class _ConfigError(Exception):
    pass


class _UnstableError(Exception):
    pass


def _fmt(x):
    """Format one CSV cell; floats carry 17 significant digits."""
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, (np.floating,)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def _write_manifest(path, args, m, outputs, seed=None, extra=None):
    manifest = {
        "command_line": list(getattr(args, "_argv", [])),
        "command": args.command,
        "config": {
            "delta": m.delta,
            "eta": m.eta,
            "a_mt": m.a_mt,
            "b_mt": m.b_mt,
            "pump_E2": m.E2,
        },
        "library_version": __version__,
        "seed": seed,
        "started": args._started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _parse_range(text):
    """Parse 'lo:hi:n' into a linspace array."""
    parts = text.split(":")
    if len(parts) != 3:
        raise _ConfigError(f"range must be lo:hi:n, got {text!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1 or hi < lo:
        raise _ConfigError(f"bad range {text!r}")
    return np.linspace(lo, hi, n)


def _load_params(args) -> ModelParams:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise _ConfigError(f"cannot read config {args.config}: {exc}")
    for key, attr in (("delta", "delta"), ("eta", "eta"), ("a_mt", "a_mt"),
                      ("b_mt", "b_mt"), ("pump_E2", "pump")):
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    try:
        return from_config(cfg)
    except InvalidParameterError as exc:
        raise _ConfigError(str(exc))


def _operating_state(m, e2, index=0):
    """Pick a stable steady state at pump e2 (sorted by intensity)."""
    if e2 is None:
        raise _ConfigError("an operating pump (pump_E2) is required")
    states = steady.all_states(e2, m)
    stable = sorted(
        (s for s in states if s.stable is steady.Stability.STABLE),
        key=lambda s: (s.I1, s.I2, s.phase_partner),
    )
    if not stable:
        raise _UnstableError(f"no stable steady state at E^2={e2:g}")
    if index >= len(stable):
        raise _ConfigError(
            f"state index {index} out of range ({len(stable)} stable states)"
        )
    return stable[index]


# --- subcommands -------------------------------------------------------------


def cmd_steady(args):
    m = _load_params(args)
    if args.pump_range:
        pumps = _parse_range(args.pump_range)
    else:
        if m.E2 == 0 and args.pump is None and not args.config:
            raise _ConfigError("give --pump or --pump-range")
        pumps = np.array([m.E2])
    rows = []
    for e2 in pumps:
        states = sorted(
            steady.all_states(float(e2), m),
            key=lambda s: (s.I1, s.I2, s.branch.value, s.phase_partner),
        )
        for s in states:
            rows.append([float(e2), s.branch.value, s.I1, s.I2, s.phi1, s.phi2,
                         s.stable.value])
    out = _write_csv(args.output, ["E2", "branch", "I1", "I2", "phi1", "phi2", "stable"], rows)
    _write_manifest(args.manifest, args, m, [out])
    return EXIT_OK


def cmd_bifurcations(args):
    m = _load_params(args)
    outputs = []
    if args.scan_delta:
        deltas = _parse_range(args.scan_delta)
        rows = []
        for d in deltas:
            md = ModelParams(delta=float(d), eta=m.eta, a_mt=m.a_mt, b_mt=m.b_mt)
            rng = steady.bistability_range(md)
            try:
                pol = steady.polarization_threshold(md)
                e2_pol = pol.e2_pol
            except NoThresholdError:
                e2_pol = float("nan")
            rows.append([
                float(d),
                rng.e2_minus if rng else float("nan"),
                rng.e2_plus if rng else float("nan"),
                e2_pol,
            ])
        outputs.append(_write_csv(args.output, ["delta", "E2_down", "E2_up", "E2_pol"], rows))
    else:
        bset = steady.BifurcationSet(
            bistable=steady.bistability_range(m),
            polarization=steady.polarization_threshold(m),
        )
        doc = {
            "bistable": None if bset.bistable is None else {
                "E2_minus": bset.bistable.e2_minus,
                "E2_plus": bset.bistable.e2_plus,
                "I_minus": bset.bistable.i_minus,
                "I_plus": bset.bistable.i_plus,
            },
            "polarization": {
                "E2_pol": bset.polarization.e2_pol,
                "I_pol": bset.polarization.i_pol,
            },
        }
        with open(args.output, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        outputs.append(args.output)
    _write_manifest(args.manifest, args, m, outputs)
    return EXIT_OK


def _spectrum_state(args, m):
    if args.at_bifurcation:
        return steady.state_near_bifurcation(m, args.at_bifurcation, args.bif_offset)
    return _operating_state(m, m.E2 if m.E2 > 0 else args.pump, args.state_index)


def cmd_spectrum(args):
    m = _load_params(args)
    s = _spectrum_state(args, m)
    omegas = np.linspace(0.0, args.omega_max, args.omega_points)
    mode = args.mode

    marker = None
    if args.optimal:
        # Locate the joint (beta, omega) optimum: optimize the angle on a
        # coarse frequency subset, then refine the frequency at that angle.
        best = None
        for om in omegas[:: max(1, len(omegas) // 16)]:
            try:
                o = squeeze.optimal_quadrature(s, m, mode, float(om))
            except NearSingularError:
                continue
            if best is None or o.q_min < best[1].q_min:
                best = (float(om), o)
        if best is None:
            raise _UnstableError("spectrum singular over the whole grid")
        beta = best[1].beta_opt
        fopt = squeeze.optimal_frequency(s, m, mode, beta, omega_max=args.omega_max)
        marker = (fopt.omega_opt, fopt.q_min, beta)
    elif args.psi is not None:
        beta = s.phi1 + args.psi / 2.0
    elif args.beta is not None:
        beta = args.beta
    else:
        raise _ConfigError("give one of --beta, --psi, or --optimal")

    rows = []
    for om in omegas:
        try:
            rec = squeeze.quad_spectrum(s, m, mode, beta, float(om))
        except NearSingularError:
            continue
        psi = squeeze.reduce_angle(2.0 * (rec.spec.beta - s.phi1))
        rows.append([rec.omega, rec.normal_ordered, rec.symmetric, rec.spec.beta,
                     psi, "spectrum"])
    if marker is not None:
        om_opt, q_min, beta_opt = marker
        psi = squeeze.reduce_angle(2.0 * (beta_opt - s.phi1))
        rows.append([om_opt, q_min, 1.0 + q_min, beta_opt, psi, "optimal"])
    out = _write_csv(
        args.output,
        ["omega", "q_normal", "q_symmetric", "beta", "psi", "kind"],
        rows,
    )
    _write_manifest(args.manifest, args, m, [out], extra={
        "operating_point": {"E2": s.pump_E2, "branch": s.branch.value, "I1": s.I1,
                            "I2": s.I2, "stability": s.stable.value},
    })
    return EXIT_OK


def _witness_text(verdict, omega):
    if verdict is None or not verdict:
        return ""
    l, mm, k, vl, bound, vk = verdict.witness[0]
    return (f"l={l};m={mm};k={k};vl={vl:.6g};bound={bound:.6g};vk={vk:.6g};"
            f"omega={omega:.6g}")


def cmd_stokes(args):
    m = _load_params(args)
    pumps = _parse_range(args.pump_range) if args.pump_range else np.array([m.E2])
    grid = linfluct.log_grid(args.omega_max, n=args.omega_points)
    rows = []
    for r in stokes.pump_scan(m, pumps, grid):
        if r.flagged or r.state is None:
            rows.append([r.e2, "", "", "", "", "", "", "", "", "", "no-stable-state"])
            continue
        sq = r.verdict.squeezed_param if r.verdict else None
        rows.append([
            r.e2, r.means.s0, r.means.s1, r.means.s2, r.means.s3,
            r.min_v_norm[0], r.min_v_norm[1], r.min_v_norm[2], r.min_v_norm[3],
            "" if sq is None else sq,
            _witness_text(r.verdict, r.verdict_omega if r.verdict_omega else 0.0),
        ])
    out = _write_csv(
        args.output,
        ["E2", "S0", "S1", "S2", "S3", "minV0", "minV1", "minV2", "minV3",
         "squeezed_param", "witness"],
        rows,
    )
    _write_manifest(args.manifest, args, m, [out])
    return EXIT_OK


def cmd_simulate(args):
    m = _load_params(args)
    s = _operating_state(m, m.E2 if m.E2 > 0 else args.pump, args.state_index)
    cfg = sdesim.SimConfig(
        duration=args.duration, dt=args.dt, n_traj=args.n_traj,
        seed=args.seed, burn_in=args.burn_in,
    )
    ens = sdesim.integrate_linearized(s, m, cfg)
    omegas = np.array([float(x) for x in args.omega_list.split(",")])
    est = sdesim.estimate_spectral_matrix(ens, omegas)
    q_mc, q_se = est.quad_estimate(args.mode, args.beta)
    rows = []
    for i, om in enumerate(est.omegas):
        q_an = squeeze.quad_spectrum(s, m, args.mode, args.beta, float(om)).normal_ordered
        rows.append([float(om), q_an, q_mc[i], q_se[i]])
    out = _write_csv(args.output, ["omega", "q_analytic", "q_mc", "q_mc_stderr"], rows)
    _write_manifest(args.manifest, args, m, [out], seed=args.seed, extra={
        "sim": {"duration": cfg.duration, "dt": cfg.dt, "n_traj": cfg.n_traj,
                "burn_in": cfg.burn_in, "n_segments": est.n_segments},
    })
    return EXIT_OK


# --- figure datasets ----------------------------------------------------------


def _liquid(delta, m):
    return ModelParams(delta=float(delta), eta=m.eta, a_mt=m.a_mt, b_mt=m.b_mt)


def _fig_bif_curves(m, outdir, points):
    rows = []
    for d in np.linspace(0.0, 5.0, points):
        md = _liquid(d, m)
        rng = steady.bistability_range(md)
        pol = steady.polarization_threshold(md)
        rows.append([
            d,
            rng.e2_minus if rng else float("nan"),
            rng.e2_plus if rng else float("nan"),
            pol.e2_pol,
        ])
    f_a = _write_csv(f"{outdir}/figure1a.csv", ["delta", "E2_down", "E2_up", "E2_pol"], rows)
    m2 = _liquid(2.0, m)
    rows_b = []
    for e2 in np.linspace(1.5, 2.5, points):
        for s in sorted(steady.all_states(float(e2), m2), key=lambda s: (s.I1, s.I2)):
            rows_b.append([float(e2), s.branch.value, s.I1, s.I2, s.stable.value])
    f_b = _write_csv(f"{outdir}/figure1b.csv", ["E2", "branch", "I1", "I2", "stable"], rows_b)
    return [f_a, f_b]


def _fig_pol_angle(m, outdir, points):
    rows = []
    for d in np.linspace(-5.0, 5.0, points):
        psi = squeeze.polarization_squeezed_psi(float(d))
        rows.append([d, psi, psi / 2.0])
    f_main = _write_csv(f"{outdir}/figure2.csv", ["delta", "psi_opt", "beta_offset_opt"], rows)
    md = _liquid(0.0, m)
    s = steady.state_near_bifurcation(md, "pol", 1e-8)
    beta = s.phi1 + squeeze.polarization_squeezed_psi(0.0) / 2.0
    rows_i = []
    for om in np.linspace(0.0, 3.0, points):
        rec = squeeze.quad_spectrum(s, md, 2, beta, float(om))
        rows_i.append([rec.omega, rec.normal_ordered])
    f_ins = _write_csv(f"{outdir}/figure2_inset.csv", ["omega", "q_normal"], rows_i)
    return [f_main, f_ins]


def _fig_spectrum_pair(m, outdir, name, which, mode, deltas, beta_of, points, omega_max):
    rows = []
    for d in deltas:
        md = _liquid(d, m)
        s = steady.state_at_bifurcation(md, which)
        beta = beta_of(s)
        for om in np.linspace(0.0, omega_max, points):
            try:
                rec = squeeze.quad_spectrum(s, md, mode, beta, float(om))
            except NearSingularError:
                continue
            rows.append([d, rec.omega, rec.normal_ordered])
    return [_write_csv(f"{outdir}/{name}.csv", ["delta", "omega", "q_normal"], rows)]


def _fig_optimum_curve(m, outdir, name, which, mode, deltas, beta_of, omega_max=None):
    rows = []
    for d in deltas:
        md = _liquid(d, m)
        s = steady.state_at_bifurcation(md, which)
        opt = squeeze.optimal_frequency(s, md, mode, beta_of(s), omega_max=omega_max)
        rows.append([d, opt.q_min, opt.omega_opt])
    return [_write_csv(f"{outdir}/{name}.csv", ["delta", "q_opt", "omega_opt"], rows)]


def _fig_tangent_v3(m, outdir, points):
    rows = []
    for d in np.linspace(math.sqrt(3.0) + 0.01, 10.0, points):
        md = _liquid(d, m)
        vals = []
        for which in ("up", "down"):
            s = steady.state_at_bifurcation(md, which)
            opt = squeeze.optimal_frequency(s, md, 2, s.phi1 + math.pi / 2, omega_max=10.0)
            vals.append(1.0 + opt.q_min)
        rows.append([d, vals[0], vals[1]])
    return [_write_csv(f"{outdir}/figure9.csv", ["delta", "V3_up", "V3_down"], rows)]


def _fig_pump_dependence(m, outdir, points, with_variances):
    md = _liquid(1.0, m)
    if not with_variances:
        rows_a, rows_b = [], []
        for e2 in np.linspace(0.5, 8.0, points):
            states = [s for s in steady.all_states(float(e2), md)
                      if s.stable is steady.Stability.STABLE]
            bimode = [s for s in states if s.branch is not steady.Branch.SINGLEMODE]
            chosen = bimode if bimode else states[:1]
            for s in chosen:
                rows_a.append([float(e2), s.I1, s.I2, int(s.phase_partner)])
                mn = stokes.stokes_means(s)
                rows_b.append([float(e2), mn.s0, mn.s1, mn.s2, mn.s3, int(s.phase_partner)])
        f_a = _write_csv(f"{outdir}/figure10a.csv", ["E2", "I1", "I2", "twin"], rows_a)
        f_b = _write_csv(f"{outdir}/figure10b.csv", ["E2", "S0", "S1", "S2", "S3", "twin"], rows_b)
        return [f_a, f_b]
    grid = linfluct.log_grid(10.0, n=40)
    rows = []
    for r in stokes.pump_scan(md, np.linspace(2.1, 8.0, points), grid):
        if r.flagged or r.state is None:
            continue
        sq = r.verdict.squeezed_param if r.verdict else ""
        rows.append([
            r.e2, r.means.s0, r.means.s1, r.means.s2, r.means.s3,
            r.min_v_norm[0], r.min_v_norm[1], r.min_v_norm[2], r.min_v_norm[3],
            sq, int(r.state.phase_partner),
        ])
    return [_write_csv(
        f"{outdir}/figure11.csv",
        ["E2", "S0", "S1", "S2", "S3", "minV0", "minV1", "minV2", "minV3",
         "squeezed_param", "twin"],
        rows,
    )]


def cmd_figure(args):
    if args.delta is None and not args.config:
        args.delta = 0.0  # figures scan their own detuning ranges
    m = _load_params(args)
    n = args.points
    fid = args.id
    outdir = args.outdir
    half_pi = math.pi / 2.0
    if fid == 1:
        outputs = _fig_bif_curves(m, outdir, n)
    elif fid == 2:
        outputs = _fig_pol_angle(m, outdir, n)
    elif fid == 3:
        outputs = _fig_spectrum_pair(
            m, outdir, "figure3", "pol", 1, (0.0, 2.0), lambda s: s.phi1, n, 5.0)
    elif fid == 4:
        outputs = _fig_optimum_curve(
            m, outdir, "figure4", "pol", 1, np.linspace(-3.0, 5.0, n),
            lambda s: s.phi1)
    elif fid == 5:
        outputs = _fig_spectrum_pair(
            m, outdir, "figure5", "up", 2, (1.8, 2.5), lambda s: s.phi1 + half_pi, n, 4.0)
    elif fid == 6:
        deltas = np.geomspace(math.sqrt(3.0), 100.0, n)
        outputs = _fig_optimum_curve(
            m, outdir, "figure6", "up", 2, deltas, lambda s: s.phi1 + half_pi,
            omega_max=4.0)
    elif fid == 7:
        outputs = _fig_spectrum_pair(
            m, outdir, "figure7", "down", 2, (2.0, 4.0), lambda s: s.phi1 + half_pi, n, 6.0)
    elif fid == 8:
        outputs = _fig_optimum_curve(
            m, outdir, "figure8", "down", 2, np.linspace(math.sqrt(3.0), 10.0, n),
            lambda s: s.phi1 + half_pi, omega_max=12.0)
    elif fid == 9:
        outputs = _fig_tangent_v3(m, outdir, n)
    elif fid == 10:
        outputs = _fig_pump_dependence(m, outdir, n, with_variances=False)
    elif fid == 11:
        outputs = _fig_pump_dependence(m, outdir, n, with_variances=True)
    else:
        raise _ConfigError(f"unknown figure id {fid}; expected 1..11")
    _write_manifest(args.manifest, args, m, outputs)
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _add_model_args(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--delta", type=float, help="normalized detuning")
    p.add_argument("--eta", type=int, choices=(+1, -1), help="self-focusing sign")
    p.add_argument("--a-mt", dest="a_mt", type=float, help="Maker-Terhune A")
    p.add_argument("--b-mt", dest="b_mt", type=float, help="Maker-Terhune B")
    p.add_argument("--pump", type=float, help="pump intensity E^2")


def _add_output_args(p, default):
    p.add_argument("-o", "--output", default=default, help="output file")
    p.add_argument("--manifest", help="manifest path (default <output>.manifest.json)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vkerr",
        description="Vectorial Kerr cavity: steady states, bifurcations, and "
                    "squeezing spectra.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="steady states vs pump")
    _add_model_args(p)
    p.add_argument("--pump-range", help="pump scan lo:hi:n")
    _add_output_args(p, "steady.csv")
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("bifurcations", help="bifurcation loci")
    _add_model_args(p)
    p.add_argument("--scan-delta", help="detuning scan lo:hi:n (CSV output)")
    _add_output_args(p, "bifurcations.json")
    p.set_defaults(func=cmd_bifurcations)

    p = sub.add_parser("spectrum", help="quadrature squeezing spectrum")
    _add_model_args(p)
    p.add_argument("--mode", type=int, choices=(1, 2), required=True)
    p.add_argument("--beta", type=float, help="quadrature angle (radians)")
    p.add_argument("--psi", type=float, help="angle as psi = 2(beta - phi1)")
    p.add_argument("--optimal", action="store_true", help="use the optimal quadrature")
    p.add_argument("--at-bifurcation", choices=("pol", "up", "down"),
                   help="operate at a bifurcation (epsilon pump offset)")
    p.add_argument("--bif-offset", type=float, default=1e-6,
                   help="relative pump offset for --at-bifurcation")
    p.add_argument("--state-index", type=int, default=0,
                   help="index among stable states (intensity-sorted)")
    p.add_argument("--omega-max", type=float, default=5.0)
    p.add_argument("--omega-points", type=int, default=201)
    _add_output_args(p, "spectrum.csv")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("stokes", help="Stokes means and variance minima vs pump")
    _add_model_args(p)
    p.add_argument("--pump-range", help="pump scan lo:hi:n")
    p.add_argument("--omega-max", type=float, default=10.0)
    p.add_argument("--omega-points", type=int, default=40)
    _add_output_args(p, "stokes.csv")
    p.set_defaults(func=cmd_stokes)

    p = sub.add_parser("simulate", help="Monte Carlo spectra vs analytic")
    _add_model_args(p)
    p.add_argument("--mode", type=int, choices=(1, 2), default=1)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--omega-list", default="0,0.5,1,2",
                   help="comma-separated frequencies")
    p.add_argument("--n-traj", type=int, default=400)
    p.add_argument("--duration", type=float, default=200.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--burn-in", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--state-index", type=int, default=0)
    _add_output_args(p, "simulate.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure", help="write the dataset behind a numbered figure")
    _add_model_args(p)
    p.add_argument("--id", type=int, required=True, help="figure number 1..11")
    p.add_argument("--outdir", default=".", help="output directory")
    p.add_argument("--points", type=int, default=61, help="samples per curve")
    _add_output_args(p, None)
    p.set_defaults(func=cmd_figure)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    args._started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    if args.manifest is None:
        base = args.output if args.output else f"{args.outdir}/figure{args.id}"
        args.manifest = f"{base}.manifest.json"
    try:
        return args.func(args)
    except _ConfigError as exc:
        print(f"vkerr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _UnstableError as exc:
        print(f"vkerr: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (UnreliableRegimeError, InsufficientDataError) as exc:
        print(f"vkerr: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (InvalidParameterError, NoThresholdError) as exc:
        print(f"vkerr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VKerrError as exc:
        print(f"vkerr: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
