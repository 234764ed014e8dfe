"""Command-line front end: ``socmps point | scan | gaps | detect``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from pathlib import Path

from .mpo import ModelParams
from .phase import (
    CSV_COLUMNS,
    EXIT_FAILED,
    EXIT_NONCONVERGED,
    EXIT_OK,
    DetectionRules,
    ScanAxis,
    ScanSpec,
    detect_transitions,
    finite_size_gap_study,
    read_csv,
    run_point,
    run_scan,
    write_csv,
    write_json,
)
from .sweep import SweepConfig

log = logging.getLogger("socmps")

_PI_RE = re.compile(r"^\s*([-+]?[0-9.eE+-]*)\s*\*?\s*pi\s*$")


def parse_number(text: str) -> float:
    """A float, optionally as a multiple of pi: ``0.8pi``, ``0.8*pi``, ``pi``."""
    m = _PI_RE.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def parse_range(text: str) -> tuple[float, ...]:
    """``value`` or ``start:stop:step``."""
    parts = text.split(":")
    if len(parts) not in (1, 3):
        raise argparse.ArgumentTypeError(f"expected VALUE or START:STOP:STEP, got {text!r}")
    return tuple(parse_number(p) for p in parts)


def _add_model_args(p: argparse.ArgumentParser, ranges: bool = False):
    kind = parse_range if ranges else parse_number
    p.add_argument("--phi", type=kind, required=True, help="DM angle in radians; '0.8pi' accepted")
    p.add_argument("--lambda", dest="lam", type=kind, required=True, help="interaction ratio lambda")
    p.add_argument("--omega", type=kind, required=True, help="scaled transverse field omega'")


def _add_solver_args(p: argparse.ArgumentParser, chi: int = 16):
    p.add_argument("--chi", type=int, default=chi, help="maximal bond dimension")
    p.add_argument("--tol", type=float, default=1e-7, help="variance tolerance")
    p.add_argument("--sweeps", type=int, default=40, help="maximal number of sweeps")
    p.add_argument("--restarts", type=int, default=1, help="random initial states per solve")
    p.add_argument("--seed", type=int, default=0)


def _config(args) -> SweepConfig:
    return SweepConfig(chi_max=args.chi, tol_variance=args.tol, max_sweeps=args.sweeps,
                       restarts=args.restarts, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socmps", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("point", help="solve one parameter point")
    _add_model_args(pt)
    pt.add_argument("--length", type=int, default=48)
    _add_solver_args(pt)
    pt.add_argument("--excited", type=int, default=0, choices=(0, 1, 2))
    pt.add_argument("--out", type=Path, help="write the record (.csv or .json)")

    sc = sub.add_parser("scan", help="scan one or two parameters (START:STOP:STEP)")
    _add_model_args(sc, ranges=True)
    sc.add_argument("--length", type=int, default=48)
    _add_solver_args(sc)
    sc.add_argument("--excited", type=int, default=0, choices=(0, 1, 2))
    sc.add_argument("--out", type=Path, required=True, help="CSV path; the JSON document goes next to it")
    sc.add_argument("--resume", action="store_true", help="continue from the checkpoint next to --out")
    sc.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=True,
                    help="start each point from the previous ground state")
    sc.add_argument("--no-structure", action="store_true", help="skip the structure factors")

    gp = sub.add_parser("gaps", help="finite-size study of the two lowest gaps")
    _add_model_args(gp)
    gp.add_argument("--length", type=int, nargs="+", required=True, help="ascending chain lengths")
    _add_solver_args(gp, chi=24)
    gp.add_argument("--out", type=Path, help="write the study as JSON")

    dt = sub.add_parser("detect", help="locate transitions in a 1-D scan CSV")
    dt.add_argument("csv", type=Path)
    dt.add_argument("--columns", default="Mz,Ny,Cz", help="comma-separated order parameters")
    dt.add_argument("--jump", type=float, default=0.5, help="first-order jump threshold (fraction of max)")
    dt.add_argument("--floor", type=float, default=0.02, help="continuous onset floor (fraction of max)")
    dt.add_argument("--out", type=Path, help="write detections as JSON")
    return parser


def _cmd_point(args) -> int:
    p = ModelParams(args.phi, args.lam, args.omega, args.length)
    rec = run_point(p, _config(args), args.excited)
    if args.out is None:
        for col, val in zip(CSV_COLUMNS, rec.row()):
            print(f"{col:>22} {val}")
    elif args.out.suffix == ".json":
        args.out.write_text(json.dumps(rec.to_json(), indent=2) + "\n")
    else:
        write_csv([rec], args.out)
    return EXIT_OK if rec.converged else EXIT_NONCONVERGED


def _cmd_scan(args) -> int:
    values = {"phi": args.phi, "lambda": args.lam, "omega_prime": args.omega}
    axes, fixed = [], {}
    for name, v in values.items():
        if len(v) == 3:
            axes.append(ScanAxis(name, *v))
        else:
            fixed[name] = v[0]
    observables = {"order"} if args.no_structure else {"order", "structure"}
    spec = ScanSpec(tuple(axes), fixed, args.length, _config(args), args.excited,
                    frozenset(observables), args.warm_start)
    ckpt = args.out.with_name(args.out.name + ".ckpt")
    result = run_scan(spec, checkpoint_dir=ckpt, resume=args.resume)
    write_csv(result.records, args.out, result.spec_hash)
    write_json(result, args.out.with_suffix(".json"))
    print(f"{len(result.records)} points written to {args.out}")
    return result.exit_code


def _cmd_gaps(args) -> int:
    p = ModelParams(args.phi, args.lam, args.omega, args.length[0])
    study = finite_size_gap_study(p, args.length, _config(args))
    for n, d1, d2, ok in zip(study.gaps.lengths, study.gaps.delta1, study.gaps.delta2, study.converged):
        print(f"L={n:4d}  1/L={1 / n:.5f}  delta1={d1:.6e}  delta2={d2:.6e}  converged={ok}")
    if study.fit1 is not None:
        print(f"delta1(1/L -> 0) = {study.fit1[1]:.6e}  slope {study.fit1[0]:.6e}")
        print(f"delta2(1/L -> 0) = {study.fit2[1]:.6e}  slope {study.fit2[0]:.6e}")
    else:
        print("fewer than three converged lengths; no extrapolation")
    if args.out is not None:
        doc = {
            "lengths": list(study.gaps.lengths),
            "delta1": list(study.gaps.delta1),
            "delta2": list(study.gaps.delta2),
            "converged": list(study.converged),
            "fit_delta1": study.fit1,
            "fit_delta2": study.fit2,
        }
        args.out.write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK if all(study.converged) else EXIT_NONCONVERGED


def _cmd_detect(args) -> int:
    records = read_csv(args.csv)
    rules = DetectionRules(tuple(c.strip() for c in args.columns.split(",") if c.strip()),
                           jump_fraction=args.jump, floor=args.floor)
    found = detect_transitions(records, rules)
    for tr in found:
        print(f"{tr.value:.4f}  {tr.kind:<11}  {tr.order_parameter}")
    if not found:
        print("no transitions detected")
    if args.out is not None:
        args.out.write_text(json.dumps([tr.__dict__ for tr in found], indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"point": _cmd_point, "scan": _cmd_scan, "gaps": _cmd_gaps, "detect": _cmd_detect}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
