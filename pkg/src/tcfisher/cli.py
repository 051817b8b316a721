"""Command-line front end: ``tcfisher {solve,verify,oracle,gen,bench}``.

Exit status is 0 on success, 1 when a verifier (or solver) reports a
failure and 2 for usage and input errors. ``--format structured`` prints
JSON with sorted keys and no timings, so it is byte-stable for fixed
inputs, seed and numeric mode.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .bench import FAMILIES, BenchConfig, GeneratorError, GeneratorSpec, generate, run_benchmark
from .engine import SolverConfig, SolverError, solve, trace_writer
from .model import InstanceError, dump_instance, format_number, parse_instance
from .numeric import ENV_VAR, get_backend
from .oracle import OracleError, solve_oracle
from .verify import check_approx_equilibrium, check_exact_equilibrium

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_fraction(text: str) -> Fraction:
    try:
        v = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcfisher",
                                     description="Fisher market equilibria with transaction costs.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--numeric", choices=("exact", "float64"), default=None,
                        help=f"arithmetic backend (default: ${ENV_VAR} or exact)")
    common.add_argument("--tol", type=_positive_float, default=1e-9,
                        help="float64 comparison tolerance")
    common.add_argument("--format", choices=("human", "structured"), default="human")

    p = sub.add_parser("solve", parents=[common], help="run the auction algorithm")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=_positive_fraction, help="overrides the file's epsilon")
    p.add_argument("--trace", metavar="PATH", help="write one JSON record per walk event")
    p.add_argument("--max-rounds", type=_positive_int)
    p.add_argument("--debug", action="store_true", help="check invariants after every event")

    p = sub.add_parser("verify", parents=[common], help="check prices and an allocation")
    p.add_argument("instance")
    p.add_argument("--prices", required=True, help="JSON array or a file holding one")
    p.add_argument("--alloc", required=True, help="JSON matrix or a file holding one")
    p.add_argument("--epsilon", type=_positive_fraction)
    p.add_argument("--exact", action="store_true", help="exact conditions instead of eps-approximate")

    p = sub.add_parser("oracle", parents=[common], help="solve the convex program numerically")
    p.add_argument("instance")

    p = sub.add_parser("gen", parents=[common], help="write a generated instance")
    _generator_args(p)
    p.add_argument("--epsilon", type=_positive_fraction)
    p.add_argument("-o", "--output", metavar="PATH")

    p = sub.add_parser("bench", parents=[common], help="solve and bound-check a batch")
    p.add_argument("instances", nargs="*", help="instance files (default: generated)")
    _generator_args(p)
    p.add_argument("--count", type=_positive_int, default=10, help="generated instances, seeds seed..")
    p.add_argument("--epsilon", type=_positive_fraction, default=Fraction(1, 20))
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--csv", metavar="PATH", help="also write one row per instance")
    p.add_argument("--debug", action="store_true")
    return parser


def _generator_args(p):
    p.add_argument("--family", choices=FAMILIES, default="uniform-random")
    p.add_argument("--buyers", "-n", type=_positive_int, default=3)
    p.add_argument("--goods", "-m", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blocked-probability", type=float, default=0.3)


def _read_instance(path: str):
    try:
        with open(path) as fh:
            return parse_instance(fh.read())
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}")
    except InstanceError as exc:
        raise UsageError(f"{path}: {exc}")


def _read_json_arg(value: str, what: str):
    text = value
    if not value.lstrip().startswith("["):
        try:
            with open(value) as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"--{what}: {exc.strerror}: {value}")
    try:
        data = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--{what}: {exc}")

    def conv(v):
        if isinstance(v, list):
            return [conv(e) for e in v]
        if isinstance(v, str):
            try:
                return Fraction(v)
            except (ValueError, ZeroDivisionError):
                raise UsageError(f"--{what}: not a number: {v!r}")
        if isinstance(v, Fraction):
            return v
        raise UsageError(f"--{what}: not a number: {v!r}")

    return conv(data)


def _epsilon(args, inst):
    eps = args.epsilon if args.epsilon is not None else inst.epsilon
    if eps is None:
        raise UsageError("no epsilon: pass --epsilon or put one in the instance file")
    if eps <= 0:
        raise UsageError("epsilon must be positive")
    return eps


def _num(v, structured):
    if structured:
        return format_number(v)
    return f"{float(v):.6g}"


def _emit(out, args, doc: dict, human: str):
    if args.format == "structured":
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        out.write(human + "\n")


def _matrix_lines(inst, x, label):
    lines = [f"{label}:"]
    for i, row in enumerate(x):
        cells = " ".join(f"{float(v):10.6g}" for v in row)
        lines.append(f"  {inst.buyer_ids[i]:>6} {cells}")
    return lines


def cmd_solve(args, out) -> int:
    inst = _read_instance(args.instance)
    eps = _epsilon(args, inst)
    fh = open(args.trace, "w") if args.trace else None
    try:
        config = SolverConfig(numeric=args.numeric or get_backend().name, tol=args.tol,
                              max_rounds=args.max_rounds, debug=args.debug,
                              trace=trace_writer(fh) if fh else None)
        try:
            res = solve(inst, eps, config)
        except SolverError as exc:
            sys.stderr.write(f"solver error: {exc}\n")
            return EXIT_FAIL
    finally:
        if fh:
            fh.close()
    rep = check_approx_equilibrium(inst, res.prices, res.allocation, res.eps, res.numeric)
    prices, alloc = inst.denormalize(res.prices, res.allocation)
    structured = args.format == "structured"
    doc = {
        "epsilon": format_number(eps),
        "numeric": res.numeric.name,
        "prices": {g: _num(v, True) for g, v in zip(inst.good_ids, prices)},
        "allocation": {b: {g: _num(v, True) for g, v in zip(inst.good_ids, row) if v != 0}
                       for b, row in zip(inst.buyer_ids, alloc)},
        "counters": res.counters.as_dict(),
        "termination": res.termination_reason,
        "verification": rep.as_dict(),
    }
    human = [f"epsilon {float(eps):g}, {res.numeric.name} arithmetic, terminated: {res.termination_reason}",
             "prices:"]
    human += [f"  {g:>6} {_num(v, structured)}" for g, v in zip(inst.good_ids, prices)]
    human += _matrix_lines(inst, alloc, "allocation")
    c = res.counters
    human.append(f"rounds {c.rounds}, walks {c.walks} (raised {c.price_raised}, fed {c.sink_fed}, "
                 f"cycles {c.cycle_resolved}, edge drops {c.edge_dropped})")
    human.append(rep.format_table())
    _emit(out, args, doc, "\n".join(human))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args, out) -> int:
    inst = _read_instance(args.instance)
    p = _read_json_arg(args.prices, "prices")
    x = _read_json_arg(args.alloc, "alloc")
    if not isinstance(p, list) or len(p) != inst.m:
        raise UsageError(f"--prices: expected {inst.m} numbers")
    if not isinstance(x, list) or len(x) != inst.n or any(
            not isinstance(r, list) or len(r) != inst.m for r in x):
        raise UsageError(f"--alloc: expected a {inst.n} x {inst.m} matrix")
    # the files hold per-unit prices and amounts at the stated supplies
    p = [v * s for v, s in zip(p, inst.supply)]
    x = [[v / s for v, s in zip(row, inst.supply)] for row in x]
    nb = get_backend(args.numeric, args.tol)
    if args.exact:
        rep = check_exact_equilibrium(inst, p, x, nb)
        table = "exact"
    else:
        rep = check_approx_equilibrium(inst, p, x, _epsilon(args, inst), nb)
        table = "approximate"
    doc = {"conditions": table, "numeric": nb.name, **rep.as_dict()}
    _emit(out, args, doc, f"{table} equilibrium conditions, {nb.name} arithmetic\n" + rep.format_table())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_oracle(args, out) -> int:
    inst = _read_instance(args.instance)
    try:
        dual, x, res = solve_oracle(inst)
    except OracleError as exc:
        sys.stderr.write(f"oracle error: {exc}\n")
        return EXIT_FAIL
    prices, alloc = inst.denormalize([float(v) for v in dual.p], x.tolist())
    rep = check_exact_equilibrium(inst, dual.p.tolist(), x.tolist(), get_backend("float64", 1e-6))
    doc = {
        "prices": {g: repr(float(v)) for g, v in zip(inst.good_ids, prices)},
        "beta": {b: repr(float(v)) for b, v in zip(inst.buyer_ids, dual.beta)},
        "allocation": {b: {g: repr(float(v)) for g, v in zip(inst.good_ids, row) if v != 0}
                       for b, row in zip(inst.buyer_ids, alloc)},
        "kkt_residuals": {"complementary_slackness": res.complementary_slackness,
                          "budget": res.budget, "clearing": res.clearing},
        "objective": dual.objective,
        "verification": rep.as_dict(),
    }
    human = ["prices:"] + [f"  {g:>6} {v:.10g}" for g, v in zip(inst.good_ids, prices)]
    human += _matrix_lines(inst, alloc, "allocation")
    human.append(f"KKT residuals: slackness {res.complementary_slackness:.2e}, "
                 f"budget {res.budget:.2e}, clearing {res.clearing:.2e}")
    human.append(rep.format_table())
    _emit(out, args, doc, "\n".join(human))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _spec(args, seed) -> GeneratorSpec:
    return GeneratorSpec(family=args.family, n=args.buyers, m=args.goods, seed=seed,
                         blocked_probability=args.blocked_probability)


def cmd_gen(args, out) -> int:
    try:
        inst = generate(_spec(args, args.seed))
    except GeneratorError as exc:
        raise UsageError(str(exc))
    if args.epsilon is not None:
        from dataclasses import replace
        inst = replace(inst, epsilon=args.epsilon)
    text = dump_instance(inst) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    if args.instances:
        items = [(path, _read_instance(path)) for path in args.instances]
    else:
        items = [_spec(args, args.seed + k) for k in range(args.count)]
    config = BenchConfig(numeric=args.numeric or get_backend().name, tol=args.tol,
                         workers=args.workers, debug=args.debug)
    try:
        report = run_benchmark(items, args.epsilon, config)
    except GeneratorError as exc:
        raise UsageError(str(exc))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
    if args.format == "structured":
        out.write(report.to_json(timing=False) + "\n")
    else:
        lines = [f"{'instance':<32} {'rounds':>7} {'R':>7} {'walks':>7} {'ok':>4}"]
        for r in report.rows:
            lines.append(f"{r.label:<32} {r.counters.get('rounds', '-'):>7} {r.bounds['R']:>7} "
                         f"{r.counters.get('walks', '-'):>7} {'yes' if r.ok else 'NO':>4}")
            if r.error:
                lines.append(f"  error: {r.error}")
            for v in r.violations:
                lines.append(f"  bound exceeded: {v}")
        agg = report.aggregate()
        lines.append("worst ratios: " + ", ".join(
            f"{k} {'-' if v is None else f'{v:.3f}'}" for k, v in agg.items()))
        lines.append(f"overall: {'PASS' if report.passed else 'FAIL'}")
        out.write("\n".join(lines) + "\n")
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "oracle": cmd_oracle, "gen": cmd_gen,
            "bench": cmd_bench}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        sys.stderr.write(f"tcfisher {args.command}: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"tcfisher {args.command}: {exc}\n")
        return EXIT_USAGE


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
