"""Command-line entry point: ``drstaff {solve,design,simulate,generate,check,frontier}``.

Exit codes: 0 success, 2 infeasible input or validation failure,
1 internal error. Logs go to standard error; data goes to the ``--out``
file or standard output.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import drns, evaluate, model, pool_design
from .adversary import StructureMismatch
from .ambiguity import check_all_levels, check_feasibility
from .backend import BackendError, SolveParams

log = logging.getLogger("drstaff")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


class InputError(Exception):
    """Input that fails validation or cannot be satisfied (exit code 2)."""


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if out:
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _load(path: str) -> model.Instance:
    try:
        inst = model.read_instance(path)
    except FileNotFoundError as exc:
        raise InputError(f"instance file not found: {path}") from exc
    problems = model.validate(inst)
    if problems:
        raise InputError("instance failed validation:\n  " + "\n  ".join(problems))
    return inst


def _params(args) -> SolveParams:
    return SolveParams(time_limit=args.time_limit, mip_gap=args.mip_gap,
                       feasibility_tol=args.feasibility_tol, threads=args.threads, seed=args.seed)


def _tolerances(args) -> dict:
    return {"mip_gap": args.mip_gap, "feasibility_tol": args.feasibility_tol,
            "time_limit": args.time_limit, "seed": args.seed}


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    if args.structure != "auto":
        actual = model.classify_structure(inst).value
        if actual != args.structure:
            raise InputError(f"instance has structure {actual}, not {args.structure}")
    kw = dict(encoding=args.encoding)
    if args.method == "separation":
        kw.update(max_iter=args.max_iter, on_iteration=lambda rec: log.debug("%s", rec.line()))
    sol, slog = drns.solve_drns(inst, args.method, _params(args), eps=args.eps, **kw)
    doc = model.solution_to_dict(sol)
    doc["tolerances"] = dict(_tolerances(args), eps=args.eps)
    _emit(doc, args.out)
    if args.log and slog is not None:
        Path(args.log).write_text("\n".join(slog.lines()) + "\n")
    log.info("dr_cost %.6f via %s (%s)", sol.dr_cost, sol.method, sol.status)
    return EXIT_OK


def _target(value: str, inst: model.Instance, params: SolveParams) -> float:
    if value in ("z0", "z1"):
        flex = drns.flexibility_value(inst.replace(pools=(pool_design.pool_template_of(inst),)), params)
        return flex[value]
    try:
        return float(value)
    except ValueError as exc:
        raise InputError(f"--target must be a number, z0 or z1, got {value!r}") from exc


def cmd_design(args) -> int:
    inst = _load(args.instance)
    params = _params(args)
    target = _target(args.target, inst, params)
    design = pool_design.solve_opd(inst, target, K=args.big_m, n_pools=args.pools,
                                   symmetry=not args.no_symmetry, params=params)
    doc = pool_design.design_to_dict(design)
    doc["tolerances"] = _tolerances(args)
    _emit(doc, args.out)
    log.info("%d cross-training pairs, pools %s, cost %.6f (target %.6f)",
             design.cross_training_pairs, design.pools, design.achieved_dr_cost, target)
    return EXIT_OK


def cmd_frontier(args) -> int:
    inst = _load(args.instance)
    points = pool_design.frontier(inst, args.points, jobs=args.jobs, params=_params(args),
                                  n_pools=args.pools)
    doc = {"points": [{"target": t, "pairs": k, "pools": [list(p) for p in d.pools],
                       "achieved_dr_cost": d.achieved_dr_cost} for t, k, d in points],
           "tolerances": _tolerances(args)}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst = _load(args.instance)
    params = _params(args)
    if args.solution:
        sol = model.read_solution(args.solution)
        staffing = (sol.w, sol.y)
    else:
        sol, _ = drns.solve_drns(inst, params=params)
        staffing = (sol.w, sol.y)
    batch = evaluate.sample_scenarios(inst, staffing, args.samples, args.seed)
    rep = evaluate.out_of_sample(inst, staffing, batch, jobs=args.jobs)
    doc = {"staffing": {"w": list(staffing[0]), "y": list(staffing[1])},
           "report": rep.to_dict(args.per_scenario), "samples": args.samples, "seed": args.seed,
           "batch_metadata": batch.metadata, "tolerances": _tolerances(args)}
    if args.blind:
        blind, _ = drns.solve_drns(drns.attendance_blind(inst), params=params)
        bstaff = (blind.w, blind.y)
        brep = evaluate.out_of_sample(inst, bstaff, batch.for_staffing(bstaff), jobs=args.jobs)
        doc["blind"] = {"staffing": {"w": list(blind.w), "y": list(blind.y)},
                        "report": brep.to_dict(args.per_scenario)}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.case is not None:
        inst, subset = model.case_instance(args.seed, args.case, args.units,
                                           (args.s_low, args.s_high))
        log.info("high-variability subset: %s", list(subset))
    else:
        inst = model.generate_instance(args.seed, args.units, args.pools, args.structure,
                                       (args.s_low, args.s_high), w_upper=args.w_upper,
                                       y_upper=args.y_upper)
    doc = model.instance_to_dict(inst)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    inst = _load(args.instance)
    problems = check_all_levels(inst)
    if args.solution:
        sol = model.read_solution(args.solution)
        problems += check_feasibility(inst, (sol.w, sol.y)).failures()
    if problems:
        raise InputError("ambiguity set is empty:\n  " + "\n  ".join(problems))
    sys.stdout.write(f"ok: {inst.J} units, {inst.I} pools, structure "
                     f"{model.classify_structure(inst).value}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drstaff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--mip-gap", type=float, default=1e-9)
        sp.add_argument("--feasibility-tol", type=float, default=1e-7)
        sp.add_argument("--time-limit", type=float, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", "-o", default=None, help="output file (default: stdout)")

    sp = sub.add_parser("solve", help="optimal DR staffing for an instance")
    sp.add_argument("instance")
    sp.add_argument("--method", choices=["auto", "separation", "milp"], default="auto")
    sp.add_argument("--structure", default="auto",
                    choices=["auto"] + [k.value for k in model.PoolStructureKind])
    sp.add_argument("--eps", type=float, default=drns.DEFAULT_EPS)
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--encoding", choices=["auto", "unary", "binary", "rate"], default="auto")
    sp.add_argument("--log", default=None, help="iteration log file (separation)")
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("design", help="sparsest disjoint pool design meeting a cost target")
    sp.add_argument("instance")
    sp.add_argument("--target", required=True, help="number, or z0 / z1 for the flexibility endpoints")
    sp.add_argument("--pools", type=int, default=None, help="candidate pools (default J // 2)")
    sp.add_argument("--big-m", type=float, default=None)
    sp.add_argument("--no-symmetry", action="store_true")
    solver_flags(sp)
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("frontier", help="cross-training pairs against the cost target")
    sp.add_argument("instance")
    sp.add_argument("--points", type=int, default=10)
    sp.add_argument("--pools", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=1)
    solver_flags(sp)
    sp.set_defaults(func=cmd_frontier)

    sp = sub.add_parser("simulate", help="out-of-sample cost of a staffing")
    sp.add_argument("instance")
    sp.add_argument("--solution", default=None, help="staffing to evaluate (default: solve first)")
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--blind", action="store_true",
                    help="also evaluate the staffing that ignores absenteeism")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--per-scenario", action="store_true")
    solver_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("generate", help="random test instance")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--units", type=int, default=7)
    sp.add_argument("--pools", type=int, default=1)
    sp.add_argument("--structure", default="OnePool",
                    choices=[k.value for k in model.PoolStructureKind if k.value != "Arbitrary"])
    sp.add_argument("--case", type=int, choices=[1, 2, 3], default=None,
                    help="pool-pattern instance with low/high variability subsets")
    sp.add_argument("--s-low", type=float, default=0.1)
    sp.add_argument("--s-high", type=float, default=1.5)
    sp.add_argument("--w-upper", type=int, default=200)
    sp.add_argument("--y-upper", type=int, default=200)
    sp.add_argument("--out", "-o", default=None)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("check", help="validate an instance and its ambiguity set")
    sp.add_argument("instance")
    sp.add_argument("--solution", default=None)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, model.InstanceFormatError, drns.AmbiguitySetEmpty,
            pool_design.TargetInfeasible, StructureMismatch) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (BackendError, drns.SolveFailure) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
