"""``jacobivar`` command line.

Exit codes: 0 success, 1 usage error, 2 runtime failure (singular mass,
divergence, failed checks), 3 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence, TextIO

import numpy as np

from .config import ORBIT, SYSTEM, SystemConfig, load_config
from .dynamics import (combined_rhs, drift_report, integrate, jacobian_rhs,
                       linearization_error)
from .errors import ConfigError, DivergenceError, JacobivarError
from .expr import render
from .lyapunov import LyapunovSettings, closest_to_zero, lyapunov_spectrum, pairing_defect
from .stability import (ReferenceOrbit, integrate_normal_deviation,
                        oscillation_period, verdict)
from .variational import assemble_CK, derive, mass_matrix, solve_accelerations

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2, 3

LINEARIZATION_TOL = 1e-3
DRIFT_TOL = 1e-6
RHS_TOL = 1e-5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jacobivar", description="Jacobi deviation equations for Lagrangian systems")
    sub = p.add_subparsers(dest="command", metavar="<subcommand>", parser_class=_Parser)
    sub.required = True
    helps = {
        "derive": "print the derived matrices, H and h",
        "simulate": "integrate trajectory and deviation, emit CSV",
        "lyapunov": "Lyapunov spectrum from the tangent flow",
        "stability2d": "coefficient of stability for a circular orbit",
        "check": "linearization oracle and conservation drift report",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", help="system file")
        sp.add_argument("-o", "--output", help="write CSV here instead of standard output")
        sp.add_argument("--symbolic", action="store_true", help="print expressions (derive)")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--method", choices=("rk4", "rkf45"))
        sp.add_argument("--tau", type=float)
        sp.add_argument("--total-time", type=float, dest="total_time")
    return p


def _apply_overrides(cfg: SystemConfig, args) -> SystemConfig:
    changes = {k: getattr(args, k) for k in ("dt", "t_end", "method", "tau", "total_time")
               if getattr(args, k) is not None}
    return replace(cfg, **changes)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _matrix_text(name: str, rows) -> list[str]:
    return [f"{name}[{a + 1}][{b + 1}] = {render(e)}"
            for a, row in enumerate(rows) for b, e in enumerate(row)]


def csv_header(cfg: SystemConfig, with_h: bool) -> str:
    names = cfg.coordinates
    cols = (["t"] + [f"q_{c}" for c in names] + [f"qd_{c}" for c in names]
            + [f"e_{c}" for c in names] + [f"ed_{c}" for c in names] + ["H"])
    if with_h:
        cols.append("h")
    return ",".join(cols)


def write_csv(out: TextIO, header: str, columns: Sequence[np.ndarray]) -> None:
    out.write(header + "\n")
    table = np.column_stack(columns)
    for row in table:
        out.write(",".join(_fmt(v) for v in row) + "\n")


def _emit(args, header, columns, stdout: TextIO) -> None:
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_csv(fh, header, columns)
    else:
        write_csv(stdout, header, columns)


# ------------------------------------------------------------- subcommands

def _derive(cfg, args, out) -> int:
    ds = derive(cfg.system())
    n = ds.n
    out.write(f"N = {n}\n")
    out.write(f"autonomous = {'yes' if ds.autonomous else 'no'}\n")
    if args.symbolic:
        for a in range(n):
            out.write(f"dL/d{cfg.coordinates[a]} = {render(ds.dL_dq[a])}\n")
        for a in range(n):
            out.write(f"dL/d{ds.table.velocities[a]} = {render(ds.dL_dv[a])}\n")
        for line in (_matrix_text("M", ds.M) + _matrix_text("Mvq", ds.Mvq)
                     + _matrix_text("Mqq", ds.Mqq)):
            out.write(line + "\n")
        for a in range(n):
            out.write(f"Mvt[{a + 1}] = {render(ds.Mvt[a])}\n")
        out.write(f"H = {render(ds.H)}\n")
        out.write(f"h = {render(ds.h) if ds.h is not None else 'non-autonomous'}\n")
        return EXIT_OK
    state = cfg.initial_state()
    accel = solve_accelerations(ds, state)
    C, K = assemble_CK(ds, state, accel)
    np.set_printoptions(precision=10)
    out.write(f"at t = {_fmt(state.t)}\n")
    out.write(f"qddot = {accel}\n")
    for name, mat in (("M", mass_matrix(ds, state)), ("C", C), ("K", K)):
        out.write(f"{name} =\n{mat}\n")
    out.write("h = non-autonomous\n" if ds.h is None else "")
    return EXIT_OK


def _simulate(cfg, args, out, err) -> int:
    ds = derive(cfg.system())
    res = integrate(ds, cfg.initial_state(), cfg.integration())
    columns = [res.t, res.y, res.H] + ([res.h] if res.h is not None else [])
    _emit(args, csv_header(cfg, res.h is not None), columns, out)
    if not res.completed:
        kind = "SingularMass" if res.reason == "singular-mass" else "Diverged"
        err.write(f"{kind}: {res.message}\n")
        return EXIT_RUNTIME
    if args.output:
        H_d, h_d = drift_report(res)
        out.write(f"wrote {len(res)} samples to {args.output}\n")
        out.write(f"max |H - H0| = {H_d:.3e}\n")
        out.write(f"max |h - h0| = {h_d:.3e}\n" if h_d is not None else "h: non-autonomous\n")
    return EXIT_OK


def _lyapunov(cfg, args, out) -> int:
    ds = derive(cfg.system())
    settings = LyapunovSettings(cfg.total_time, cfg.tau, cfg.integration())
    rep = lyapunov_spectrum(ds, cfg.initial_state(), settings)
    if args.output:
        header = ",".join(["t"] + [f"lambda_{k + 1}" for k in range(rep.running.shape[1])])
        with open(args.output, "w", newline="") as fh:
            write_csv(fh, header, [rep.times, rep.running])
    out.write(f"T = {_fmt(rep.total_time)}, tau = {_fmt(rep.tau)}, "
              f"renormalisations = {rep.n_events}\n")
    for k, lam in enumerate(rep.exponents, 1):
        out.write(f"lambda_{k} = {lam:.10g}\n")
    out.write(f"sum = {np.sum(rep.exponents):.3e}\n")
    out.write(f"pairing defect = {pairing_defect(rep.exponents):.3e}\n")
    out.write(f"closest to zero = {closest_to_zero(rep.exponents):.3e}\n")
    return EXIT_OK


def _stability2d(cfg, args, out, err) -> int:
    orbit = ReferenceOrbit.circular(cfg.potential, cfg.radius, cfg.parameters)
    v = verdict(orbit, max(2, cfg.samples), cfg.h)
    period = orbit.orbital_period()
    out.write(f"radius = {_fmt(cfg.radius)}\n")
    out.write(f"orbit speed = {_fmt(orbit.speed_at(0.0))}\n")
    out.write(f"orbital period = {_fmt(period)}\n")
    out.write(f"coefficient of stability: min = {_fmt(v.coefficients.min())}, "
              f"max = {_fmt(v.coefficients.max())}\n")
    out.write(f"verdict = {v.verdict}\n")
    t_end = cfg.periods * period
    nd = integrate_normal_deviation(orbit, cfg.h, cfg.eps_z0, cfg.epsdot_z0, t_end, cfg.dt)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_csv(fh, "t,s,eps_z,epsdot_z", [nd.t, nd.s, nd.eps_z, nd.epsdot_z])
    if nd.reason != "completed":
        err.write(f"Diverged: normal deviation left the finite range after t={nd.t[-1]:.6g}\n")
        return EXIT_RUNTIME
    try:
        p = oscillation_period(nd.t, nd.eps_z - np.mean(nd.eps_z))
        out.write(f"eps_z period = {_fmt(p)} ({p / period:.6f} orbital periods)\n")
    except JacobivarError:
        out.write("eps_z period = none (no oscillation)\n")
    out.write(f"max |eps_z| = {_fmt(np.max(np.abs(nd.eps_z)))}\n")
    return EXIT_OK


def _check(cfg, args, out) -> int:
    ds = derive(cfg.system())
    state = cfg.initial_state()
    settings = cfg.integration()
    results = []

    if not np.any(np.concatenate([state.eps, state.epsdot])):
        state = replace(state, eps=np.ones(ds.n), epsdot=np.zeros(ds.n))
    direct = combined_rhs(ds, state)
    fd_e, fd_ed = jacobian_rhs(ds, state)
    scale = max(1.0, float(np.linalg.norm(direct.epsddot)))
    rhs_err = float(np.linalg.norm(direct.epsddot - fd_ed)) / scale
    results.append(("deviation rhs: M/C/K vs finite-difference Jacobian", rhs_err, RHS_TOL))

    lin, _, _ = linearization_error(ds, state, settings, cfg.delta)
    results.append(("linearization: integrated eps vs trajectory difference", lin,
                    LINEARIZATION_TOL))

    res = integrate(ds, state, settings)
    if not res.completed:
        raise JacobivarError(res.message)
    H_d, h_d = drift_report(res)
    if ds.autonomous:
        results.append(("conservation: max |H - H0|", H_d, DRIFT_TOL * max(1.0, abs(res.H[0]))))
        results.append(("conservation: max |h - h0|", h_d, DRIFT_TOL * max(1.0, abs(res.h[0]))))

    ok = True
    for label, value, tol in results:
        passed = value <= tol
        ok &= passed
        out.write(f"{'PASS' if passed else 'FAIL'}  {label} = {value:.3e} (tolerance {tol:.1e})\n")
    if not ds.autonomous:
        out.write(f"SKIP  conservation: H and h are not constants of a non-autonomous system "
                  f"(max |H - H0| = {H_d:.3e})\n")
    return EXIT_OK if ok else EXIT_RUNTIME


# ------------------------------------------------------------------- entry

def run(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None,
        stderr: Optional[TextIO] = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = _parser().parse_args(argv)
    except _UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:        # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    kind = ORBIT if args.command == "stability2d" else SYSTEM
    try:
        cfg = _apply_overrides(load_config(args.config, kind), args)
    except ConfigError as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG

    try:
        if args.command == "derive":
            return _derive(cfg, args, out)
        if args.command == "simulate":
            return _simulate(cfg, args, out, err)
        if args.command == "lyapunov":
            return _lyapunov(cfg, args, out)
        if args.command == "stability2d":
            return _stability2d(cfg, args, out, err)
        return _check(cfg, args, out)
    except ConfigError as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (JacobivarError, ValueError, ArithmeticError) as exc:
        name = _LABELS.get(type(exc), type(exc).__name__.removesuffix("Error"))
        err.write(f"{name}: {exc}\n")
        return EXIT_RUNTIME


_LABELS = {DivergenceError: "Diverged"}


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
