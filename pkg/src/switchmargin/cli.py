"""``switchmargin <command> <problem-file> [flags]``.

Commands
--------
margin-lower   certified lower bound on the stability margin
worst-switch   worst-case switching sequence for a cached certificate
margin-upper   upper bound from a periodic worst-case trajectory
impulse        worst-case versus unswitched impulse response
simulate       replay a stored switching signal

Exit codes: 0 success, 1 usage or parse error, 2 nominal ``A`` not Hurwitz,
3 solver or dimension-cap failure, 4 upper-bound sweep exhausted.
"""

import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from . import __version__
from .exceptions import (
    DimensionCapError,
    IntegrationError,
    NotHurwitzError,
    SweepExhaustedError,
    SwitchMarginError,
)
from .io import (
    CertificateCache,
    ProblemFileError,
    certificate_to_dict,
    dump_report,
    load_problem,
    load_signal,
    save_signal,
    write_trajectory_csv,
)
from .lyapunov import (
    AlgorithmConfig,
    certificate_level,
    certify_level,
    under_approximate_margin,
)
from .periodic import upper_bound_margin
from .switching import (
    Indicator,
    IntegratorConfig,
    find_switching_sequence,
    nominal_impulse,
    simulate_fixed_signal,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_HURWITZ = 2
EXIT_SOLVER = 3
EXIT_SWEEP = 4

log = logging.getLogger("switchmargin")


class UsageError(SwitchMarginError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vector_arg(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _order_arg(text):
    order = int(text)
    if order < 2 or order % 2:
        raise argparse.ArgumentTypeError(f"order must be a positive even integer, got {order}")
    return order


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def build_parser():
    p = _Parser(prog="switchmargin", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, csv=True):
        sp.add_argument("problem", help="TOML problem file")
        sp.add_argument("--out", help="JSON report path")
        if csv:
            sp.add_argument("--out-csv", help="trajectory CSV path")

    def level_flags(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--order", type=_order_arg, help="polynomial order 2i of the certificate")
        g.add_argument("--level", type=int, help="hierarchy level i of the certificate")

    sp = sub.add_parser("margin-lower", help="certified lower bound")
    common(sp, csv=False)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--i-max", type=int)
    g.add_argument("--order", type=_order_arg, help="highest polynomial order 2*i_max")
    sp.add_argument("--epsilon", type=_positive)
    sp.add_argument("--no-cache", action="store_true", help="do not store the certificate")

    sp = sub.add_parser("worst-switch", help="worst-case switching sequence")
    common(sp)
    level_flags(sp)
    sp.add_argument("--delta", type=_nonneg)
    sp.add_argument("--x0", type=_vector_arg)
    sp.add_argument("--tf", type=_positive)
    sp.add_argument("--dt", type=_positive, help="sample spacing of the CSV")
    sp.add_argument("--signal-out", help="write the switching signal (JSON)")
    sp.add_argument("--compute", action="store_true",
                    help="compute a certificate if none is cached")

    sp = sub.add_parser("margin-upper", help="upper bound from a periodic trajectory")
    common(sp, csv=False)
    level_flags(sp)
    sp.add_argument("--increment", type=_positive)
    sp.add_argument("--x0", type=_vector_arg)
    sp.add_argument("--tf", type=_positive)
    sp.add_argument("--tol-unit", type=_positive)
    sp.add_argument("--max-steps", type=int, default=1000)
    sp.add_argument("--signal-out", help="write the periodic signal (JSON)")

    sp = sub.add_parser("impulse", help="worst-case impulse response")
    common(sp)
    level_flags(sp)
    sp.add_argument("--delta", type=_nonneg)
    sp.add_argument("--tf", type=_positive)
    sp.add_argument("--dt", type=_positive, help="sample spacing (default t_f/2000)")

    sp = sub.add_parser("simulate", help="replay a switching signal")
    common(sp)
    level_flags(sp)
    sp.add_argument("--signal", required=True, help="JSON file with times and values")
    sp.add_argument("--x0", type=_vector_arg)
    sp.add_argument("--cycles", type=int, default=1, help="repeat the signal this many times")
    sp.add_argument("--samples-per-segment", type=int, default=64)
    return p


# ---------------------------------------------------------------------------


def _versions():
    out = {"switchmargin": __version__, "python": sys.version.split()[0]}
    for pkg in ("numpy", "scipy", "cvxpy", "clarabel"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


# output destinations do not change the result, so reports stay comparable
_NOT_ECHOED = ("problem", "command", "verbose", "out", "out_csv", "signal_out")


def _inputs(problem, args):
    flags = {
        k: v for k, v in sorted(vars(args).items())
        if k not in _NOT_ECHOED and v is not None
    }
    inp = {
        "problem": str(problem.path),
        "n": problem.n,
        "A": problem.system.a,
        "A0": problem.system.a0,
        "defaults": problem.defaults,
        "flags": flags,
    }
    if problem.impulse is not None:
        inp["B"], inp["C"] = problem.impulse.b, problem.impulse.c
    return inp


def _report(command, problem, args, result, started):
    return {
        "command": command,
        "inputs": _inputs(problem, args),
        "result": result,
        "versions": _versions(),
        "determinism": "no random numbers are used; reruns reproduce this report except 'timing'",
        "timing": {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "elapsed_s": round(time.perf_counter() - started, 3),
        },
    }


def _finish(report, args):
    if args.out:
        dump_report(report, args.out)
    return report


def _default(args, problem, name, key=None, fallback=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return problem.defaults.get(key or name, fallback)


def _algorithm_config(problem, args, i_max=None):
    d = problem.defaults
    kw = {k: d[k] for k in ("sdp_tol", "definiteness_tol", "margin_rel", "delta_max") if k in d}
    if i_max is None:
        i_max = d.get("i_max", d["order"] // 2 if "order" in d else 3)
    return AlgorithmConfig(epsilon=_default(args, problem, "epsilon"), i_max=i_max, **kw)


def _requested_level(args, problem):
    if getattr(args, "order", None) is not None:
        return args.order // 2
    if getattr(args, "level", None) is not None:
        if args.level < 1:
            raise UsageError("--level must be >= 1")
        return args.level
    return None


def _x0(args, problem):
    x0 = args.x0 if args.x0 is not None else problem.x0_list()[0]
    if len(x0) != problem.n:
        raise UsageError(f"--x0 has {len(x0)} entries, the problem has n = {problem.n}")
    return x0


def _certificate(problem, args, *, compute):
    """Cached certificate at the requested level (or the best one); computed
    and cached when `compute` is set and none is stored."""
    level = _requested_level(args, problem)
    cache = CertificateCache.for_problem(problem.path)
    cert = cache.best(problem.system, level)
    if cert is not None:
        log.info("using cached level-%d certificate (δ = %.6g)", cert.level, cert.delta_certified)
        return cert
    if not compute:
        where = f" at level {level}" if level is not None else ""
        raise UsageError(
            f"no cached certificate{where} for {problem.path}; "
            f"run 'switchmargin margin-lower {problem.path}"
            + (f" --order {2 * level}" if level is not None else "")
            + "' first (or pass --compute)"
        )
    cfg = _algorithm_config(problem, args)
    res = under_approximate_margin(problem.system, cfg) if level is None else certify_level(
        problem.system, level, cfg
    )
    if res.certificate is None:
        raise _NoCertificate("no certificate found; cannot build the switching indicator")
    cache.store(problem.system, res.certificate)
    return res.certificate


class _NoCertificate(SwitchMarginError):
    pass


def _signal_table(signal):
    return {"times": signal.times, "values": signal.values}


# ---------------------------------------------------------------------------


def cmd_margin_lower(args):
    started = time.perf_counter()
    problem = load_problem(args.problem)
    i_max = args.i_max if args.i_max is not None else (args.order // 2 if args.order else None)
    if i_max is not None and i_max < 1:
        raise UsageError("--i-max must be >= 1")
    cfg = _algorithm_config(problem, args, i_max)
    res = under_approximate_margin(problem.system, cfg)
    result = {
        "delta_lower": res.delta_lower,
        "epsilon": res.epsilon,
        "i_max": cfg.i_max,
        "certificate": None if res.certificate is None else certificate_to_dict(res.certificate),
        "trace": [e._asdict() for e in res.trace],
    }
    report = _finish(_report("margin-lower", problem, args, result, started), args)
    if res.certificate is None:
        raise _NoCertificate(f"no level up to {cfg.i_max} certifies δ = {res.epsilon:.6g}")
    if not args.no_cache:
        CertificateCache.for_problem(problem.path).store(problem.system, res.certificate)
    c = res.certificate
    print(f"delta_lower = {res.delta_lower:.6g}  (level {c.level}, order {c.order})")
    return report


def cmd_worst_switch(args):
    started = time.perf_counter()
    problem = load_problem(args.problem)
    delta = _default(args, problem, "delta")
    if delta is None:
        raise UsageError("--delta is required (or set defaults.delta)")
    t_f = _default(args, problem, "tf", "t_f", 20.0)
    x0 = _x0(args, problem)
    cert = _certificate(problem, args, compute=args.compute)
    level = certificate_level(problem.system, cert)
    integ = IntegratorConfig(sample_dt=args.dt)
    signal, traj = find_switching_sequence(
        problem.system, level, cert.p, delta, x0, t_f, integ, cert.transform
    )
    if args.out_csv:
        write_trajectory_csv(args.out_csv, traj)
    if args.signal_out:
        save_signal(args.signal_out, signal)
    result = {
        "delta": delta,
        "x0": x0,
        "t_f": t_f,
        "certificate": {"level": cert.level, "order": cert.order,
                        "delta_certified": cert.delta_certified},
        "signal": _signal_table(signal),
        "truncated": traj.truncated,
    }
    print("T     = " + ", ".join(f"{t:.4f}" for t in signal.times))
    print("Sigma = " + ", ".join(f"{v:.4g}" for v in signal.values))
    return _finish(_report("worst-switch", problem, args, result, started), args)


def cmd_margin_upper(args):
    started = time.perf_counter()
    problem = load_problem(args.problem)
    t_f = _default(args, problem, "tf", "t_f", 20.0)
    increment = _default(args, problem, "increment", fallback=0.01)
    tol_unit = _default(args, problem, "tol_unit", fallback=1e-3)
    x0 = _x0(args, problem)
    cert = _certificate(problem, args, compute=True)
    try:
        mr = upper_bound_margin(
            problem.system, cert, x0, t_f, increment, tol_unit, max_steps=args.max_steps
        )
    except SweepExhaustedError as exc:
        result = {"status": "exhausted", "last_delta": exc.last_delta,
                  "delta_lower": cert.delta_certified}
        _finish(_report("margin-upper", problem, args, result, started), args)
        raise
    w = mr.witness
    result = {
        "status": "found",
        "delta_lower": mr.delta_lower,
        "delta_upper": mr.delta_upper,
        "certificate": {"level": cert.level, "order": cert.order,
                        "delta_certified": cert.delta_certified},
        "witness": {
            "kind": w.kind,
            "j": w.j,
            "k": w.k,
            "a_d": w.a_d,
            "spectrum": {"re": w.spectrum.real, "im": w.spectrum.imag},
            "unit_eig_residual": w.unit_eig_residual,
            "spectral_radius": w.spectral_radius,
            "orbit_state": w.orbit_state(),
        },
        "periodic_signal": _signal_table(mr.periodic_signal),
        "x0": x0,
        "t_f": t_f,
        "increment": increment,
        "tol_unit": tol_unit,
        "sweep": [s._asdict() for s in mr.sweep],
    }
    if args.signal_out:
        save_signal(args.signal_out, mr.periodic_signal)
    print(f"delta_upper = {mr.delta_upper:.6g}  (delta_lower = {mr.delta_lower:.6g}, "
          f"{w.kind} witness, residual {w.unit_eig_residual:.2e})")
    print("T     = " + ", ".join(f"{t:.4f}" for t in mr.periodic_signal.times))
    print("Sigma = " + ", ".join(f"{v:.4g}" for v in mr.periodic_signal.values))
    return _finish(_report("margin-upper", problem, args, result, started), args)


def _upper_envelope(h):
    """``max_{s >= t} |h(s)|`` at every sample."""
    return np.maximum.accumulate(np.abs(h)[::-1])[::-1]


def cmd_impulse(args):
    started = time.perf_counter()
    problem = load_problem(args.problem)
    if problem.impulse is None:
        raise ProblemFileError(f"{problem.path}: fields 'B' and 'C' are required for impulse")
    delta = _default(args, problem, "delta")
    if delta is None:
        raise UsageError("--delta is required (or set defaults.delta)")
    t_f = _default(args, problem, "tf", "t_f", 20.0)
    dt = args.dt or t_f / 2000
    cert = _certificate(problem, args, compute=True)
    level = certificate_level(problem.system, cert)
    imp = problem.impulse
    signal, _ = find_switching_sequence(
        problem.system, level, cert.p, delta, imp.b, t_f, IntegratorConfig(), cert.transform
    )
    # resample the worst-case signal exactly on a uniform grid
    ind = Indicator(level, cert.p, cert.transform)
    traj = simulate_fixed_signal(
        problem.system, signal, imp.b, IntegratorConfig(sample_dt=dt), indicator=ind
    )
    h_worst = traj.x @ imp.c
    h_nom = nominal_impulse(problem.system, imp, traj.t)
    if args.out_csv:
        write_trajectory_csv(args.out_csv, traj, {"h_worst": h_worst, "h_nominal": h_nom})
    env_w, env_n = _upper_envelope(h_worst), _upper_envelope(h_nom)
    result = {
        "delta": delta,
        "t_f": t_f,
        "certificate": {"level": cert.level, "order": cert.order,
                        "delta_certified": cert.delta_certified},
        "signal": _signal_table(signal),
        "peak_abs_h_worst": float(np.max(np.abs(h_worst))),
        "peak_abs_h_nominal": float(np.max(np.abs(h_nom))),
        "envelope_exceeds_fraction": float(np.mean(env_w > env_n)),
        "max_abs_difference": float(np.max(np.abs(h_worst - h_nom))),
    }
    print(f"peak |h| worst-case {result['peak_abs_h_worst']:.4g}, "
          f"unswitched {result['peak_abs_h_nominal']:.4g}")
    return _finish(_report("impulse", problem, args, result, started), args)


def cmd_simulate(args):
    started = time.perf_counter()
    problem = load_problem(args.problem)
    signal = load_signal(args.signal)
    if args.cycles < 1:
        raise UsageError("--cycles must be >= 1")
    if args.cycles > 1:
        signal = signal.repeated(args.cycles)
    x0 = _x0(args, problem)
    cache = CertificateCache.for_problem(problem.path)
    cert = cache.best(problem.system, _requested_level(args, problem))
    ind = None
    if cert is None:
        log.warning("no cached certificate; indicator column left as NaN")
    else:
        ind = Indicator(certificate_level(problem.system, cert), cert.p, cert.transform)
    traj = simulate_fixed_signal(
        problem.system, signal, x0, samples_per_segment=args.samples_per_segment, indicator=ind
    )
    if args.out_csv:
        write_trajectory_csv(args.out_csv, traj)
    norms = traj.norms()
    result = {
        "x0": x0,
        "signal": _signal_table(signal),
        "final_state": traj.x[-1],
        "final_norm": norms[-1],
        "max_norm": norms.max(),
        "indicator_level": None if cert is None else cert.level,
    }
    print(f"final |x| = {norms[-1]:.6g}  (max {norms.max():.6g})")
    return _finish(_report("simulate", problem, args, result, started), args)


COMMANDS = {
    "margin-lower": cmd_margin_lower,
    "worst-switch": cmd_worst_switch,
    "margin-upper": cmd_margin_upper,
    "impulse": cmd_impulse,
    "simulate": cmd_simulate,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (UsageError, ProblemFileError, ValueError) as exc:
        print(f"switchmargin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotHurwitzError as exc:
        print(f"switchmargin: {exc}", file=sys.stderr)
        return EXIT_NOT_HURWITZ
    except (DimensionCapError, IntegrationError, _NoCertificate) as exc:
        print(f"switchmargin: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SweepExhaustedError as exc:
        print(f"switchmargin: {exc} (last δ = {exc.last_delta:.6g})", file=sys.stderr)
        return EXIT_SWEEP
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
