"""``dynent`` command line: measures, conversions and checks as JSON reports.

JSON goes to stdout, one-line human summaries to stderr.  Exit codes:
0 success, 1 usage error, 2 solver failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import channels as ch
from . import combs as cb
from . import measures as ms
from . import superchannels as sc
from .errors import DynentError, PreconditionError, SolverError

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3


class UsageError(DynentError):
    pass


# -- reference parsing -------------------------------------------------------------


def _kv(parts):
    out = {}
    for p in parts:
        if "=" not in p:
            raise UsageError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = v
    return out


def _dims(text, n=4):
    dims = tuple(int(x) for x in text.split(","))
    if len(dims) != n:
        raise UsageError(f"expected {n} comma-separated dimensions, got {text!r}")
    return dims


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"no such file or named object: {path!r}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def parse_channel(ref) -> ch.Channel:
    """Resolve a channel reference (named constructor, JSON object or file path)."""
    if isinstance(ref, dict):
        return ch.Channel.from_json(ref)
    name, *args = ref.split(":")
    try:
        if name == "swap":
            return ch.swap(int(args[0]) if args else 2)
        if name == "maxent":
            return ch.max_entangled_prep(int(args[0]) if args else 2)
        if name == "idchan":
            return ch.ab_identity(int(args[0]) if args else 2)
        if name == "identity":
            return ch.identity(*(int(a) for a in args)) if args else ch.identity()
        if name == "depol":
            return ch.depolarizing(int(args[0]), float(args[1]))
        if name == "tiles-povm":
            return ch.tiles_povm()
        if name == "tiles-state":
            return ch.prep(ch.tiles_bound_entangled_state())
        if name == "sep-prep":
            rho = np.zeros((4, 4))
            rho[0, 0] = 1.0
            return ch.prep(rho, 2, 2)
        if name in ("random", "random-ppt"):
            kv = _kv(args)
            dims = _dims(kv.get("dims", "2,2,2,2"))
            seed = int(kv.get("seed", 0))
            return ch.random_channel(dims, seed) if name == "random" else ch.random_ppt_channel(dims, seed)
    except (IndexError, ValueError) as exc:
        raise UsageError(f"bad channel reference {ref!r}: {exc}") from None
    data = _load_json(ref)
    if data.get("kind", "channel") != "channel":
        raise UsageError(f"{ref}: not a channel file")
    return ch.Channel.from_json(data)


def parse_superchannel(ref) -> sc.Superchannel:
    if isinstance(ref, dict):
        return sc.Superchannel.from_json(ref)
    name, *args = ref.split(":")
    if name == "identity":
        return sc.identity_superchannel(_dims(args[0]) if args else (2, 2, 2, 2))
    if name == "teleport":
        return sc.teleportation_superchannel(int(args[0]) if args else 2)
    if name == "swap-injector":
        return sc.swap_injector(_dims(args[0]) if args else (1, 2, 1, 2))
    if name in ("random", "random-ppt"):
        kv = _kv(args)
        dims = _dims(kv.get("dims", "1,2,1,2"))
        seed = int(kv.get("seed", 0))
        fn = sc.random_superchannel if name == "random" else sc.random_ppt_superchannel
        return fn(dims, None, seed)
    data = _load_json(ref)
    if data.get("kind") != "superchannel":
        raise UsageError(f"{ref}: not a superchannel file")
    return sc.Superchannel.from_json(data)


def parse_comb(ref) -> cb.Comb:
    if isinstance(ref, dict):
        return cb.Comb.from_json(ref)
    name, *args = ref.split(":")
    if name == "teleport-distiller":
        return cb.teleportation_distiller()
    if name == "memory-swap":
        return cb.memory_swap_comb()
    if name == "random-ppt":
        kv = _kv(args)
        return cb.random_ppt_comb(int(kv.get("slots", 2)), int(kv.get("seed", 0)))[0]
    data = _load_json(ref)
    if data.get("kind") != "comb":
        raise UsageError(f"{ref}: not a comb file")
    return cb.Comb.from_json(data)


def tiles_scenario(seed: int = 0):
    """Two-slot restricted PPT comb around two copies of the tiles POVM channel."""
    comb, _ = cb.random_ppt_comb(2, seed, slot_dims=ch.tiles_povm().standard_dims())
    return comb, [ch.tiles_povm(), ch.tiles_povm()]


def parse_scenario(ref):
    """Comb plus slot channels from a scenario file or a named scenario."""
    name, *args = ref.split(":")
    if name == "tiles-2slot":
        return tiles_scenario(int(_kv(args).get("seed", 0)))
    if name == "random-ppt":
        kv = _kv(args)
        return cb.random_ppt_comb(int(kv.get("slots", 2)), int(kv.get("seed", 0)))
    data = _load_json(ref)
    if "comb" not in data or "channels" not in data:
        raise UsageError(f"{ref}: scenario needs 'comb' and 'channels'")
    comb = parse_comb(data["comb"])
    return comb, [parse_channel(c) for c in data["channels"]]


# -- output ------------------------------------------------------------------------------


def rounded(obj):
    """Floats to 10 significant digits, non-finite values to null."""
    if isinstance(obj, dict):
        return {k: rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.10g}") + 0.0
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def emit(report) -> None:
    sys.stdout.write(json.dumps(rounded(report), sort_keys=True) + "\n")


def note(text: str) -> None:
    sys.stderr.write(text + "\n")


def _write_certificate(path, cert):
    if path is None or cert is None:
        return None
    Path(path).write_text(json.dumps(cert.to_json()))
    return str(path)


# -- commands ---------------------------------------------------------------------------

MEASURES = ("negativity", "ln", "lnmax", "ep", "distill1", "cost1", "egen")


def run_measure(name, ref, opts) -> dict:
    n = parse_channel(ref)
    if name == "negativity":
        r = ms.negativity(n)
    elif name == "ln":
        r = ms.log_negativity(n)
    elif name == "lnmax":
        r = ms.max_log_negativity(n)
    elif name == "ep":
        r = ms.e_measure_ppt(parse_channel(opts.get("probe") or "maxent:2"), n)
    elif name == "distill1":
        r = ms.exact_distill_single_shot(n, opts.get("mmax"))
    elif name == "cost1":
        r = ms.exact_cost_single_shot(n, opts.get("mmax"))
    elif name == "egen":
        r = ms.egen_ppt_lower_bound(n, rounds=opts.get("rounds") or 10, seed=opts.get("seed") or 0)
    else:
        raise UsageError(f"unknown measure {name!r}; choose from {', '.join(MEASURES)}")
    cert = r.certificate
    if isinstance(cert, np.ndarray):
        cert = None
    report = {"measure": name, "channel": ref, "value": r.value, "bits": r.bits,
              "ppt_monotone": r.ppt_monotone, "residuals": r.residuals,
              "certificate": _write_certificate(opts.get("certificate"), cert)}
    for key in ("m", "copies", "trace_norm", "references", "diamond", "t"):
        if key in r.details:
            report[key] = r.details[key]
    return report


def _measure_job(args):
    name, ref, opts = args
    try:
        return EXIT_OK, run_measure(name, ref, opts)
    except SolverError as exc:
        return EXIT_SOLVER, {"measure": name, "channel": ref, "error": str(exc)}
    except (UsageError, DynentError, ValueError) as exc:
        return EXIT_USAGE, {"measure": name, "channel": ref, "error": str(exc)}


def cmd_measure(a) -> int:
    opts = {"probe": a.probe, "mmax": a.mmax, "rounds": a.rounds, "seed": a.seed,
            "certificate": a.certificate if len(a.refs) == 1 else None}
    jobs = [(a.name, ref, opts) for ref in a.refs]
    if a.name not in MEASURES:
        raise UsageError(f"unknown measure {a.name!r}; choose from {', '.join(MEASURES)}")
    if a.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=a.jobs) as pool:
            results = list(pool.map(_measure_job, jobs))
    else:
        results = [_measure_job(j) for j in jobs]
    codes = [c for c, _ in results]
    reports = [r for _, r in results]
    for r in reports:
        if "error" in r:
            note(f"{r['measure']}({r['channel']}): error: {r['error']}")
        else:
            note(f"{r['measure']}({r['channel']}) = {r['value']:.10g}")
    emit(reports[0] if len(reports) == 1 else reports)
    return max(codes)


def cmd_convert(a) -> int:
    r = ms.conversion_distance_ppt(parse_channel(a.source), parse_channel(a.target))
    report = {"source": a.source, "target": a.target, "distance": r.value, "residuals": r.residuals,
              "optimizer": r.certificate is not None,
              "certificate": _write_certificate(a.certificate, r.certificate)}
    note(f"PPT conversion distance {a.source} -> {a.target} = {r.value:.10g}")
    emit(report)
    return EXIT_OK


def cmd_check(a) -> int:
    kind, tol = a.kind, a.tol
    if kind == "ppt-channel":
        n = parse_channel(_need(a.ref, kind))
        valid = ch.validate_channel(n)
        v = ch.ppt_violation(n)
        passed = ch.is_ppt_channel(n, tol)
        report = {"check": kind, "ref": a.ref, "passed": passed, "pt_min_eigenvalue": v,
                  "channel": valid.to_json()}
    elif kind == "ppt-superchannel":
        s = parse_superchannel(_need(a.ref, kind))
        valid = sc.validate_superchannel(s, tol=max(tol, sc.SUPER_TOL))
        gamma = sc.validate_superchannel(sc.gamma_transpose(s), tol=tol)
        passed = sc.is_ppt_superchannel(s, tol)
        report = {"check": kind, "ref": a.ref, "passed": passed, "pt_min_eigenvalue": sc.ppt_violation(s),
                  "superchannel": valid.to_json(), "gamma_transpose_valid": gamma.passed}
        if a.trials:
            report["complete_ppt_preservation"] = sc.completely_ppt_preserving_check(s, a.trials, a.seed or 0).to_json()
    elif kind == "comb":
        c = parse_comb(_need(a.ref, kind))
        rep = cb.validate_comb(c)
        report = {"check": kind, "ref": a.ref, "passed": rep.passed, "comb": rep.to_json(),
                  "ppt": cb.is_ppt_comb(c, tol).to_json()}
        passed = rep.passed
    elif kind == "no-distill":
        ref = a.comb or a.ref
        comb, chans = parse_scenario(_need(ref, kind))
        try:
            rep = cb.verify_no_distillation(comb, chans, tol)
            report = {"check": kind, "ref": ref, **rep.to_json()}
            passed = rep.passed
        except PreconditionError as exc:
            report = {"check": kind, "ref": ref, "passed": False, "precondition": str(exc)}
            passed = False
    elif kind == "chain":
        rep = ms.check_cost_distill_inequality(parse_channel(_need(a.ref, kind)), m_max=a.mmax,
                                               rounds=a.rounds or 10, seed=a.seed or 0)
        report = {"check": kind, "ref": a.ref, **rep.to_json()}
        passed = rep.passed
    else:
        raise UsageError(f"unknown check {kind!r}")
    note(f"check {kind} {report.get('ref')}: {'pass' if passed else 'FAIL'}")
    emit(report)
    return EXIT_OK if passed else EXIT_CHECK


def _need(ref, kind):
    if not ref:
        raise UsageError(f"check {kind} needs a reference")
    return ref


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynent", description="Dynamical entanglement measures for bipartite channels.")
    common = _Parser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-7, help="PSD tolerance for checks")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for channel lists")
    common.add_argument("--certificate", default=None, metavar="PATH", help="write the optimiser as JSON")
    common.add_argument("--mmax", type=int, default=None, help="largest Schmidt rank searched")
    common.add_argument("--rounds", type=int, default=None, help="see-saw rounds")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("measure", parents=[common], help="evaluate a measure on channels")
    m.add_argument("name", help=", ".join(MEASURES))
    m.add_argument("refs", nargs="+", help="channel references")
    m.add_argument("--probe", default=None, help="probe channel for ep (default maxent:2)")
    m.set_defaults(func=cmd_measure)

    c = sub.add_parser("convert", parents=[common], help="PPT conversion distance")
    c.add_argument("source")
    c.add_argument("target")
    c.set_defaults(func=cmd_convert)

    k = sub.add_parser("check", parents=[common], help="pass/fail checks")
    k.add_argument("kind", choices=["ppt-channel", "ppt-superchannel", "comb", "no-distill", "chain"])
    k.add_argument("ref", nargs="?")
    k.add_argument("--comb", default=None, help="scenario file or name for no-distill")
    k.add_argument("--trials", type=int, default=0, help="complete PPT preservation trials")
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        note(f"dynent: error: {exc}")
        return EXIT_USAGE
    except SolverError as exc:
        note(f"dynent: solver failure: {exc}")
        emit({"error": str(exc), "status": getattr(exc.solution, "status", None) if hasattr(exc, "solution") else None})
        return EXIT_SOLVER
    except (DynentError, ValueError) as exc:
        note(f"dynent: error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
