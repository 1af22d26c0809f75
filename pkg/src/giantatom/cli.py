"""Command-line front end: every scan writes a CSV table plus a JSON sidecar.

Exit codes: 0 success, 2 invalid input, 3 numerical convergence failure,
64 usage error (unknown subcommand or flag).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .core import (
    AtomSpec,
    ConvergenceError,
    Layout,
    StrengthScaling,
    Topology,
    ValidationError,
    WaveguideModel,
    equidistant_layout,
    topology_layouts,
)
from .io import (
    dump_yaml,
    layout_to_data,
    load_layout,
    parse_number,
    parse_range,
    read_yaml,
    write_csv,
    write_sidecar,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3
EXIT_USAGE = 64

TOPOLOGIES = [t.value for t in Topology if t is not Topology.UNCLASSIFIED]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def thread_count() -> int:
    """Worker threads for parameter sweeps, capped by ``GIANTATOM_THREADS``."""
    raw = os.environ.get("GIANTATOM_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"GIANTATOM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("GIANTATOM_THREADS must be at least 1")
    return n


def ordered_map(fn, items):
    """``map`` over a thread pool; results keep the input order."""
    items = list(items)
    n = min(thread_count(), max(1, len(items)))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- helpers


def _range(text: str, name: str) -> np.ndarray:
    grid = parse_range(text)
    if grid.size == 0:
        raise ValidationError(f"{name} grid is empty")
    return grid


def _emit(args, header, rows, extra: dict | None = None):
    write_csv(args.out, header, rows)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["version"] = __version__
    config["columns"] = list(header)
    if extra:
        config["results"] = extra
    write_sidecar(args.out, config)


def _single_layout(args) -> tuple[Layout, AtomSpec | None, WaveguideModel]:
    if args.layout:
        f = load_layout(args.layout)
        if len(f.layouts) != 1:
            raise ValidationError("expected a single-atom layout file")
        return f.layouts[0], f.atom, f.waveguide
    return equidistant_layout(args.N, 1.0), None, WaveguideModel.for_rate(args.gamma)


# ---------------------------------------------------------------- subcommands


def cmd_spectrum(args):
    from .spectral import lamb_shift_equidistant, phase_response, relaxation_rate_equidistant

    phi = _range(args.phi, "phi")
    if args.layout:
        layout, _, wg = _single_layout(args)
        gamma, delta = phase_response(layout, phi, wg)
        gmax = wg.unit_rate * float(np.sum(np.abs(layout.strengths(0)))) ** 2
    else:
        gamma = np.atleast_1d(relaxation_rate_equidistant(args.N, phi, args.gamma))
        delta = np.atleast_1d(lamb_shift_equidistant(args.N, phi, args.gamma))
        gmax = args.N**2 * args.gamma
    rows = zip(phi, gamma / gmax, delta / gmax)
    _emit(args, ["phi", "gamma_rel", "lamb_shift"], rows, {"gamma_max": gmax})


def cmd_lamb(args):
    from .spectral import lamb_from_kramers_kronig, lamb_shift, lamb_shift_integral, relaxation_rate_equidistant

    phi = _range(args.phi, "phi")
    if np.any(phi <= 0):
        raise ValidationError("phi must be positive (it sets the transition frequency)")
    layout = equidistant_layout(args.N, 1.0)
    wg = WaveguideModel.for_rate(args.gamma)
    # the rate is 2 pi periodic in phi, so one period sampled uniformly is exact for the FFT
    grid = np.linspace(0.0, 2 * math.pi, args.hilbert_samples, endpoint=False)
    kk = lamb_from_kramers_kronig((grid, relaxation_rate_equidistant(args.N, grid, args.gamma)))
    period = np.concatenate([grid, [2 * math.pi]])
    dvals = np.concatenate([kk.delta, kk.delta[:1]])

    def row(p):
        atom = AtomSpec.two_level(float(p))
        closed = float(lamb_shift(layout, atom, 1, waveguide=wg))
        integral = lamb_shift_integral(layout, atom, 1, waveguide=wg, tol=args.tol)
        hil = float(np.interp(p % (2 * math.pi), period, dvals))
        return p, closed, integral, hil

    rows = ordered_map(row, phi)
    _emit(args, ["phi", "lamb_closed", "lamb_integral", "lamb_hilbert"], rows)


def _topologies(name: str):
    return TOPOLOGIES if name == "all" else [Topology(name).value]


def cmd_two_atom(args):
    from .multiatom import coefficients_vs_phase

    phi = _range(args.phi, "phi")
    rows = []
    if args.layout:
        f = load_layout(args.layout)
        if len(f.layouts) != 2:
            raise ValidationError("two-atom layouts need exactly two atoms")
        pairs = [("file", f.layouts)]
    else:
        pairs = [(t, topology_layouts(t)) for t in _topologies(args.topology)]
    for name, (a, b) in pairs:
        c = coefficients_vs_phase(a, b, phi, args.gamma)
        for i in range(phi.size):
            rows.append((phi[i], name, c["g"][i], c["Gamma_a"][i], c["Gamma_b"][i], c["Gamma_coll"][i]))
    _emit(args, ["phi", "topology", "g", "Gamma_a", "Gamma_b", "Gamma_coll"], rows)


def cmd_dfi(args):
    from .multiatom import decoherence_free_points

    phi = _range(args.phi, "phi")
    rows = []
    for name in _topologies(args.topology):
        a, b = topology_layouts(name)
        for p in decoherence_free_points(a, b, phi, args.gamma, threshold=args.threshold):
            rows.append((name, p.phi, p.g, p.gamma_a, p.gamma_b, p.gamma_coll))
    _emit(args, ["topology", "phi", "g", "Gamma_a", "Gamma_b", "Gamma_coll"], rows)


def _driven_system(args):
    from .lindblad import Drive, build_giant_atom_system, three_level_atom

    scaling = StrengthScaling(args.scaling)
    if args.layout:
        layout, atom, wg = _single_layout(args)
        if atom is None:
            raise ValidationError("layout file needs an 'atom' entry for master-equation runs")
    else:
        layout = equidistant_layout(args.N, 1.0)
        wg = WaveguideModel.for_rate(args.gamma)
        if args.levels == 2:
            atom = AtomSpec.two_level(args.phi_value)
        else:
            alpha = 2 * math.pi * args.anharmonicity
            atom = three_level_atom(args.phi_value, alpha) if args.levels == 3 else \
                AtomSpec.anharmonic(args.phi_value, alpha, args.levels)
    drive = None
    if args.rabi:
        drive = Drive(args.rabi, args.drive_lower, args.drive_upper, args.detuning)
    return build_giant_atom_system(layout, atom, drive, wg, scaling)


def cmd_evolve(args):
    from .lindblad import evolve

    system = _driven_system(args)
    rho0 = np.zeros((system.dim, system.dim), dtype=complex)
    if not 0 <= args.initial < system.dim:
        raise ValidationError("initial level outside the atom")
    rho0[args.initial, args.initial] = 1.0
    traj = evolve(system, rho0, args.t_end, args.dt, store_every=args.store_every)
    pops = traj.populations
    header = ["t"] + [f"pop_{m}" for m in range(system.dim)] + ["trace_err"]
    rows = [(t, *pops[i], traj.trace_error[i]) for i, t in enumerate(traj.times)]
    _emit(args, header, rows, {"rates": list(system.rates)})


def cmd_steady(args):
    from .lindblad import steady_state

    system = _driven_system(args)
    rho = steady_state(system)
    pops = np.real(np.diag(rho))
    header = [f"pop_{m}" for m in range(system.dim)]
    _emit(args, header, [tuple(pops)], {"rates": list(system.rates)})


def cmd_inversion_scan(args):
    from .lindblad import equidistant_rate_ratio, inversion_scan

    scaling = StrengthScaling(args.scaling)
    rabi = _range(args.rabi, "rabi")
    if args.phi == "auto":
        # phase of largest Gamma_21 / Gamma_10 on a fine grid
        fine = np.linspace(0.01, 4 * math.pi, 4000)
        ratio = equidistant_rate_ratio(args.N, fine, args.anharmonicity, args.gamma, scaling)
        ratio = np.where(np.isfinite(ratio), ratio, -np.inf)
        phis = np.array([fine[int(np.argmax(ratio))]])
    else:
        phis = _range(args.phi, "phi")
    chunks = ordered_map(lambda p: inversion_scan(args.N, args.anharmonicity, rabi, [p], args.gamma, scaling), phis)
    rows = [(r.phi, r.omega_d, r.gamma_10, r.gamma_21, *r.populations, r.inverted) for chunk in chunks for r in chunk]
    _emit(args, ["phi", "Omega_d", "Gamma_10", "Gamma_21", "pop0_ss", "pop1_ss", "pop2_ss", "inverted"], rows,
          {"phi": phis})


def _delay_setup(args):
    bare = args.gamma * args.N
    tau = args.gamma_tau / bare
    layout = equidistant_layout(args.N, tau)
    omega_a = (args.phase_value % (2 * math.pi) + 2 * math.pi) / tau
    return layout, tau, omega_a


def cmd_dde(args):
    from .delay import dde_evolve, total_energy

    layout, tau, omega_a = _delay_setup(args)
    dt = tau / args.steps_per_delay
    t_end = args.t_end * tau
    traj = dde_evolve(layout, args.gamma, omega_a, t_end, dt)
    energy = total_energy(traj)
    stride = max(1, args.store_every)
    rows = [(traj.t[i], traj.c[i].real, traj.c[i].imag, abs(traj.c[i]) ** 2, energy[i])
            for i in range(0, traj.t.size, stride)]
    _emit(args, ["t", "re_c", "im_c", "pop", "energy_total"], rows, {"tau": tau, "omega_a": omega_a})


def cmd_probe(args):
    from .delay import default_probe_grid, probe_response

    layout, tau, omega_a = _delay_setup(args)
    grid = default_probe_grid(args.gamma * args.N, tau) if args.delta == "auto" else _range(args.delta, "delta")
    spec = probe_response(layout, args.gamma, omega_a, grid)
    rows = [(d, c, spec.n_peaks) for d, c in zip(spec.delta, spec.chi2)]
    _emit(args, ["delta", "chi2", "n_peaks"], rows, {"peak_detunings": spec.peak_detunings})


def cmd_threshold(args):
    from .delay import threshold_scan

    grid = _range(args.gamma_tau_grid, "gamma-tau")
    res = threshold_scan(grid, args.N, args.phase_value, args.gamma)
    _emit(args, ["gamma_tau", "n_peaks"], zip(res.gamma_tau, res.n_peaks),
          {"transition": res.transition, "monotone": res.monotone})


def cmd_design(args):
    from .design import DesignMode, DesignProblem, fit_layout

    data = read_yaml(args.problem)
    target = data.get("target")
    if not isinstance(target, list) or not target:
        raise ValidationError("problem file needs a non-empty 'target' list")
    try:
        omega = [float(t["omega"]) for t in target]
        gam = [float(t["gamma"]) for t in target]
    except (KeyError, TypeError, ValueError):
        raise ValidationError("each target entry needs numeric 'omega' and 'gamma'") from None
    design = data.get("design") or {}
    wg = data.get("waveguide") or {}
    v = float(wg.get("v", 1.0))
    unit = 4 * math.pi * float(wg["J0"]) if "J0" in wg else args.gamma
    positions = None
    if "points" in data:
        positions = [float(p["x"]) for p in data["points"]]
    n_points = int(design.get("n_points", args.N if positions is None else len(positions)))
    mode = DesignMode(args.mode or design.get("mode", "strengths"))
    problem = DesignProblem(omega, gam, n_points, mode, float(design.get("regularization", 0.0)),
                            positions, unit, v)
    res = fit_layout(problem, n_starts=args.starts, seed=args.seed, max_iter=args.max_iter)
    model = problem.model(res.params)
    rows = zip(problem.omega, problem.target, model)
    extra = {"residual": res.residual, "converged": res.converged, "start": res.start,
             "strengths": res.layout.strengths(0), "positions": res.layout.positions}
    _emit(args, ["omega", "target", "fitted"], rows, extra)
    if args.solution:
        sol = layout_to_data(res.layout, waveguide=WaveguideModel(v=v, J0=unit / (4 * math.pi)))
        sol["target"] = [{"omega": float(w), "gamma": float(g)} for w, g in zip(omega, gam)]
        sol["fit"] = {"residual": float(res.residual), "converged": bool(res.converged)}
        dump_yaml(sol, args.solution)


def cmd_oracle(args):
    from .oracle import convergence_table

    layout = equidistant_layout(args.N, 1.0)
    omega = args.phi_value + 2 * math.pi * args.carrier_cycles
    counts = [int(m) for m in _range(args.modes, "modes")]
    rows = convergence_table(layout, omega, args.gamma, args.window, counts)
    _emit(args, ["n_modes", "gamma_fit", "rel_change"],
          [(r["n_modes"], r["gamma_fit"], "" if r["rel_change"] is None else r["rel_change"]) for r in rows])


# ---------------------------------------------------------------- parser


def _phase(text: str) -> float:
    try:
        return parse_number(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="giantatom", description="Giant-atom waveguide QED scans (CSV output).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, n_default=10, layout=True):
        sp.add_argument("--out", "-o", default="-", help="CSV path ('-' for stdout; sidecar is <out>.json)")
        sp.add_argument("--gamma", type=float, default=1.0, help="rate of a unit-strength point")
        sp.add_argument("--N", type=int, default=n_default, help="number of equidistant coupling points")
        if layout:
            sp.add_argument("--layout", help="YAML layout file (overrides --N)")
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("spectrum", help="relaxation rate and Lamb shift vs phase")
    common(s)
    s.add_argument("--phi", default="0:4pi:2000")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("lamb", help="Lamb shift by three independent routes")
    common(s, 3, layout=False)
    s.add_argument("--phi", default="0.3:6:12")
    s.add_argument("--hilbert-samples", type=int, default=8192)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_lamb)

    s = sub.add_parser("two-atom", help="exchange and relaxation coefficients of two giant atoms")
    common(s, 2)
    s.add_argument("--topology", choices=TOPOLOGIES + ["all"], default="all")
    s.add_argument("--phi", default="0:2pi:1000")
    s.set_defaults(func=cmd_two_atom)

    s = sub.add_parser("dfi", help="decoherence-free interaction points")
    common(s, 2, layout=False)
    s.add_argument("--topology", choices=TOPOLOGIES + ["all"], default="all")
    s.add_argument("--phi", default="0.01:2pi:2000")
    s.add_argument("--threshold", type=float, default=1e-8)
    s.set_defaults(func=cmd_dfi)

    for name, func, hlp in (("evolve", cmd_evolve, "master-equation time evolution"),
                            ("steady", cmd_steady, "master-equation steady state")):
        s = sub.add_parser(name, help=hlp)
        common(s)
        s.add_argument("--phi", dest="phi_value", type=_phase, default=_phase("2.2pi"),
                       help="phase of the 0-1 transition across one spacing")
        s.add_argument("--levels", type=int, default=3)
        s.add_argument("--anharmonicity", type=float, default=-0.1, help="in units of 2 pi v / d")
        s.add_argument("--scaling", choices=[x.value for x in StrengthScaling], default="bosonic")
        s.add_argument("--rabi", type=float, default=0.0)
        s.add_argument("--drive-lower", type=int, default=0)
        s.add_argument("--drive-upper", type=int, default=2)
        s.add_argument("--detuning", type=float, default=0.0)
        if name == "evolve":
            s.add_argument("--t-end", type=float, default=10.0)
            s.add_argument("--dt", type=float, default=0.001)
            s.add_argument("--store-every", type=int, default=10)
            s.add_argument("--initial", type=int, default=1)
        s.set_defaults(func=func)

    s = sub.add_parser("inversion-scan", help="steady-state population inversion of a driven three-level atom")
    common(s, 10, layout=False)
    s.add_argument("--anharmonicity", type=float, default=-0.1, help="in units of 2 pi v / d")
    s.add_argument("--rabi", default="0.01:10:13:log")
    s.add_argument("--phi", default="auto", help="range, or 'auto' for the largest Gamma_21/Gamma_10")
    s.add_argument("--scaling", choices=[x.value for x in StrengthScaling], default="bosonic")
    s.set_defaults(func=cmd_inversion_scan)

    def delay_common(sp):
        common(sp, 2, layout=False)
        sp.add_argument("--phase", dest="phase_value", type=_phase, default=0.0,
                        help="w_a * tau modulo 2 pi")

    s = sub.add_parser("dde", help="non-Markovian single-atom dynamics")
    delay_common(s)
    s.add_argument("--gamma-tau", type=float, default=14.0, help="bare rate N*gamma times neighbour delay")
    s.add_argument("--t-end", type=float, default=100.0, help="in units of the neighbour delay")
    s.add_argument("--steps-per-delay", type=int, default=40)
    s.add_argument("--store-every", type=int, default=1)
    s.set_defaults(func=cmd_dde)

    s = sub.add_parser("probe", help="weak-probe spectrum with delay")
    delay_common(s)
    s.add_argument("--gamma-tau", type=float, default=2.0)
    s.add_argument("--delta", default="auto")
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("threshold", help="probe peak count vs Gamma*tau")
    delay_common(s)
    s.add_argument("--gamma-tau", dest="gamma_tau_grid", default="0.25,0.5,1.5,2,4")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("design", help="fit coupling strengths to a target rate profile")
    common(s, 3, layout=False)
    s.add_argument("--problem", required=True, help="YAML problem file with a 'target' list")
    s.add_argument("--mode", choices=["strengths", "strengths-and-positions"])
    s.add_argument("--starts", type=int, default=16)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--solution", help="write the fitted layout as YAML here")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("oracle", help="mode-summation convergence table")
    common(s, 1, layout=False)
    s.add_argument("--phi", dest="phi_value", type=_phase, default=0.0)
    s.add_argument("--carrier-cycles", type=int, default=20)
    s.add_argument("--window", type=float, default=None)
    s.add_argument("--modes", default="1024,2048,4096")
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"giantatom: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"giantatom: did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
