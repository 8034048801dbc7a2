"""Command-line front end.

Every subcommand writes one JSON report (``--out`` or stdout).  Reports hold a
``certified`` section (radii with a proof behind them) and an ``estimated`` section (sampled
quantities with their bias direction).  The payload is a pure function of the
configuration and seed; the run timestamp and thread count go to a sidecar
``<out>.meta.json`` so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import DEFAULT_SEED
from .certificates import DEFAULT_ETA, certify_map
from .errors import BudgetError, ContractViolation, DomainError, HypothesisViolation
from .extremal import PRUNING_POLICIES, VARIANTS, SequenceReport, build_extremal_lp, solve_extremal
from .maps import from_ref
from .norms import (DEFAULT_T_GRID, SectionBudget, euclidean, modulus_convexity_estimate, norm_from_json,
                    power_type_constant)
from .oracle import hull_compare_2d, midpoint_convexity_check
from .regions import region_from_json
from .smoothness import (DEFAULT_BETA, LineDesign, derivative_lipschitz_estimate, inverse_lipschitz_estimate,
                         lipschitz_estimate, modulus_smoothness, sigma_min, verify_second_order_bound)

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INTERNAL, EXIT_HYPOTHESIS = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers


def _vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _json_arg(text: str, what: str):
    path = Path(text)
    try:
        return json.loads(path.read_text() if path.is_file() else text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: not valid JSON ({exc.msg})") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _default_seed() -> int:
    env = os.environ.get("CONVEXLAB_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CONVEXLAB_SEED must be an integer, got {env!r}") from None


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return None
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _config(args: argparse.Namespace) -> dict:
    skip = {"func", "threads", "out", "csv", "violations_csv"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args: argparse.Namespace, certified: dict, estimated: dict, extra: dict | None = None) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": _config(args),
               "certified": certified, "estimated": estimated}
    if extra:
        payload.update(extra)
    text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "threads": args.threads,
                "version": __version__, "argv": sys.argv[1:]}
        Path(args.out + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)


# ---------------------------------------------------------------- subcommands


def _norm(args):
    if args.norm:
        return norm_from_json(_json_arg(args.norm, "--norm"))
    return None


def cmd_modulus(args) -> None:
    norm = _norm(args) or euclidean(args.dim)
    t = DEFAULT_T_GRID if args.t_grid is None else _vector(args.t_grid, "--t-grid")
    budget = SectionBudget(n_random_planes=args.planes, n_angles=args.angles, seed=args.seed,
                           threads=args.threads)
    est = modulus_convexity_estimate(norm, t, budget)
    fits = {}
    for p in args.power:
        fit = power_type_constant(est, p)
        fits[f"{p:g}"] = {"C": fit.constant, "is_power_type": fit.is_power_type, "t_at_min": fit.t_at_min}
    _write(args.csv, est.to_csv())
    _emit(args, {}, {"modulus": est.to_json(), "power_type": fits})


def cmd_smoothness(args) -> None:
    m = from_ref(args.map)
    region = region_from_json(_json_arg(args.region, "--region")) if args.region else m.domain
    t = None if args.t_grid is None else _vector(args.t_grid, "--t-grid")
    design = LineDesign(seed=args.seed, threads=args.threads)
    est = {}
    for order in args.order:
        prof = modulus_smoothness(m, order, t, region, design)
        est[f"omega{order}"] = prof.to_json()
        if args.csv:
            _write(args.csv if len(args.order) == 1 else f"{args.csv}.n{order}.csv", prof.to_csv())
    kw = dict(budget=args.budget, seed=args.seed, beta=args.beta)
    est["lipschitz"] = lipschitz_estimate(m, region, **kw).to_json()
    est["derivative_lipschitz"] = derivative_lipschitz_estimate(m, region, **kw).to_json()
    if m.dim_in == m.dim_out:
        est["inverse_lipschitz"] = inverse_lipschitz_estimate(m, region, **kw).to_json()
    if args.center is not None:
        est["sigma_min"] = sigma_min(m, _vector(args.center, "--center"))
    est["second_order_check"] = verify_second_order_bound(m, region, args.beta, args.seed).to_json()
    _emit(args, {}, est, {"bias_direction": "lower"})


def cmd_certify(args) -> None:
    m = from_ref(args.map)
    a = np.zeros(m.dim_in) if args.center is None else _vector(args.center, "--center")
    cert = certify_map(m, a, args.r, args.mode, _norm(args), eta=args.eta, beta=args.beta,
                       use_closed_forms=not args.no_closed_forms, seed=args.seed, budget=args.budget,
                       threads=args.threads)
    body = cert.to_json()
    estimated = {k: v for k, v in body["constants"].items()
                 if isinstance(v, dict) and v.get("provenance") == "estimated"}
    _emit(args, body, {"constants": estimated})


def cmd_check(args) -> None:
    m = from_ref(args.map)
    a = np.zeros(m.dim_in) if args.center is None else _vector(args.center, "--center")
    rep = midpoint_convexity_check(m, a, args.eps, args.pairs, args.seed, defect_tolerance=args.defect_tol,
                                   threads=args.threads)
    est = {"midpoint": rep.to_json()}
    if args.hull:
        est["hull"] = hull_compare_2d(m, a, args.eps, args.grid_density).to_json()
    _write(args.violations_csv, rep.violations_csv())
    _emit(args, {}, est)


def cmd_extremal(args) -> None:
    ns = range(1, args.n + 1) if args.sequence else [args.n]
    rows = []
    for n in ns:
        inst = build_extremal_lp(n, args.m, args.prune, args.budget)
        rows.append(solve_extremal(inst, variant=args.variant, sweep=args.sweep))
    rep = SequenceReport(rows)
    text = rep.to_csv()
    if args.csv:
        _write(args.csv, text)
    if args.out or args.json:
        _emit(args, {}, {"extremal": rep.to_json()})
    else:
        sys.stdout.write(text)


def cmd_report(args) -> None:
    """End-to-end case study on the shear map: certificate, oracles below and above it, norm and LP data."""
    m = from_ref(args.map)
    a = np.zeros(m.dim_in)
    cert = certify_map(m, a, mode="hilbert", eta=args.eta, seed=args.seed)
    eps_star = cert.epsilon_star
    checks = {}
    for label, eps in (("half", 0.5 * eps_star), ("at", eps_star), ("four_times", 4 * eps_star),
                       ("probe", args.probe)):
        rep = midpoint_convexity_check(m, a, eps, args.pairs, args.seed, threads=args.threads)
        entry = {"eps": eps, "midpoint": {k: v for k, v in rep.to_json().items() if k != "violations"}}
        if m.dim_in == 2 and m.dim_out == 2:
            entry["hull"] = hull_compare_2d(m, a, eps).to_json()
        checks[label] = entry
    est = modulus_convexity_estimate(euclidean(2), budget=SectionBudget(seed=args.seed, threads=args.threads))
    norm_part = {"euclidean2_C_p2": power_type_constant(est, 2).constant,
                 "max_abs_error_vs_closed_form": float(np.max(np.abs(
                     est.delta_hat - (1 - np.sqrt(1 - est.t_grid**2 / 4)))))}
    lp = [solve_extremal(build_extremal_lp(1, 10)).to_json(), solve_extremal(build_extremal_lp(2, 4)).to_json()]
    _emit(args, {"certificate": cert.to_json()},
          {"checks": checks, "norm": norm_part, "extremal": lp})


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convexlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="default: $CONVEXLAB_SEED or a fixed constant")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", help="write the JSON report here (plus a .meta.json sidecar)")

    sp = sub.add_parser("modulus", help="modulus of convexity of a norm")
    common(sp)
    sp.add_argument("--norm", help="NormSpec JSON or a path to it")
    sp.add_argument("--dim", type=int, default=2, help="dimension of the Euclidean default norm")
    sp.add_argument("--t-grid", help="comma-separated t values in (0, 2]")
    sp.add_argument("--planes", type=int, default=64)
    sp.add_argument("--angles", type=int, default=1024)
    sp.add_argument("--power", type=float, nargs="+", default=[2.0])
    sp.add_argument("--csv", help="write t, delta_hat, witnesses as CSV")
    sp.set_defaults(func=cmd_modulus)

    sp = sub.add_parser("smoothness", help="moduli of smoothness and Lipschitz-type constants")
    common(sp)
    sp.add_argument("--map", required=True)
    sp.add_argument("--order", type=int, nargs="+", choices=(1, 2), default=[1, 2])
    sp.add_argument("--region", help="region JSON ({'ball': ...} or {'box': ...}); default: map domain")
    sp.add_argument("--t-grid")
    sp.add_argument("--center", help="point for sigma_min")
    sp.add_argument("--budget", type=int, default=20000)
    sp.add_argument("--beta", type=float, default=DEFAULT_BETA)
    sp.add_argument("--csv", help="write the profile CSV (t, omega_hat, n)")
    sp.set_defaults(func=cmd_smoothness)

    sp = sub.add_parser("certify", help="certified radius of local convexity")
    common(sp)
    sp.add_argument("--map", required=True)
    sp.add_argument("--center")
    sp.add_argument("--r", type=_positive, default=math.inf)
    sp.add_argument("--mode", choices=("hilbert", "banach"), default="hilbert")
    sp.add_argument("--norm", help="target NormSpec JSON (banach mode)")
    sp.add_argument("--eta", type=float, default=DEFAULT_ETA)
    sp.add_argument("--beta", type=float, default=DEFAULT_BETA)
    sp.add_argument("--budget", type=int, default=20000)
    sp.add_argument("--no-closed-forms", action="store_true")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("check", help="midpoint convexity oracle (and hull comparison in 2-D)")
    common(sp)
    sp.add_argument("--map", required=True)
    sp.add_argument("--center")
    sp.add_argument("--eps", type=_positive, required=True)
    sp.add_argument("--pairs", type=int, default=10000)
    sp.add_argument("--defect-tol", type=_positive, default=1e-6)
    sp.add_argument("--hull", action="store_true")
    sp.add_argument("--grid-density", type=int, default=1024)
    sp.add_argument("--violations-csv")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("extremal", help="grid LP for the extremal bump problem")
    common(sp)
    sp.add_argument("--n", type=int, choices=(1, 2, 3), required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--variant", choices=VARIANTS, default="full")
    sp.add_argument("--sweep", action="store_true", help="maximise over every interior node")
    sp.add_argument("--prune", choices=PRUNING_POLICIES, default="auto")
    sp.add_argument("--budget", type=int, default=400_000)
    sp.add_argument("--sequence", action="store_true", help="solve every dimension 1..n")
    sp.add_argument("--csv")
    sp.add_argument("--json", action="store_true", help="print the JSON report instead of CSV")
    sp.set_defaults(func=cmd_extremal)

    sp = sub.add_parser("report", help="bundled end-to-end case study")
    common(sp)
    sp.add_argument("--map", default="shear:k=1")
    sp.add_argument("--pairs", type=int, default=2000)
    sp.add_argument("--probe", type=_positive, default=0.6)
    sp.add_argument("--eta", type=float, default=DEFAULT_ETA)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        args.func(args)
    except HypothesisViolation as exc:
        print(f"convexlab: hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (UsageError, ContractViolation, DomainError, BudgetError) as exc:
        parser.error(str(exc))
    except Exception as exc:  # noqa: BLE001
        print(f"convexlab: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
