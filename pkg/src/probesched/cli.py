"""Command line front end: ``probesched gen|solve|schedule|eval|cdf|compare``.

Exit codes: 1 invalid input, 2 solver did not converge, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import cover, instance as inst_mod, kt, memoryless, tree
from .errors import ConvergenceError, InstanceError
from .evaluator import (
    OBJECTIVES,
    cycle_percentile,
    evaluate,
    evaluate_probabilistic,
    export_cdf,
    geometric_quantile,
    load_schedule,
    memoryless_report,
    objective_family,
    objective_name,
    save_schedule,
    simulate_memoryless,
    write_report_csv,
    _fmt,
)
from .instance import WeightMode

log = logging.getLogger("probesched")

EXIT_INVALID = 1
EXIT_CONVERGENCE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _weights(text: str, n: int):
    if text == "uniform":
        return None
    if text.startswith("zipf:"):
        s = float(text.split(":", 1)[1])
        return 1.0 / np.arange(1, n + 1) ** s
    values = [float(v) for v in text.split(",")]
    if len(values) != n:
        raise InstanceError(f"--weights lists {len(values)} values for n = {n}")
    return values


def _load_instance(path):
    instance = inst_mod.load_instance(path)
    report = inst_mod.validate(instance)
    if not report.ok:
        raise InstanceError(f"{path}: {report}")
    return instance


def _read_subset(path) -> list[str]:
    """Test ids from a JSON list, a frequencies file (positive entries), a schedule file, or lines."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return [line.strip() for line in text.splitlines() if line.strip()]
    if isinstance(doc, list):
        return [str(t) for t in doc]
    if isinstance(doc, dict) and "cycle" in doc:
        return sorted({str(t) for t in doc["cycle"] if t is not None})
    if isinstance(doc, dict) and "test_ids" in doc:
        q = doc.get("q")
        if q is None:
            return [str(t) for t in doc["test_ids"]]
        return [str(t) for t, v in zip(doc["test_ids"], q) if v > 0]
    raise InstanceError(f"{path}: cannot read a test subset from this document")


def cmd_gen(args):
    kind = args.kind
    if kind == "singletons":
        instance = inst_mod.gen_singletons(args.n, _weights(args.weights, args.n))
    elif kind == "clos":
        instance = inst_mod.gen_clos(args.levels, args.radix)
    elif kind == "lowerbound":
        instance = inst_mod.gen_lowerbound(args.m, args.ell)
    else:
        instance = inst_mod.gen_random(args.n, args.m, args.density, args.seed)
    instance = inst_mod.normalize(instance, args.mode)
    inst_mod.save_instance(instance, args.output)
    print(f"{kind}: {instance.n} elements, {instance.m} tests -> {args.output}")


def _solve(instance, family, tol, subset=None):
    config = memoryless.SolveConfig(tolerance=tol)
    if WeightMode(family) is WeightMode.SUM:
        return memoryless.solve_sum(instance, config, subset)
    return memoryless.solve_max(instance, config, subset)


def cmd_solve(args):
    instance = _load_instance(args.input)
    subset = _read_subset(args.subset) if args.subset else None
    freqs = _solve(instance, args.family, args.tol, subset)
    memoryless.save_frequencies(freqs, args.output)
    print(f"{args.family} optimum {freqs.value:.10g} ({freqs.iterations} iterations) -> {args.output}")


def _frequencies_for(instance, path):
    return memoryless.load_frequencies(path).aligned(instance)


def cmd_schedule(args):
    instance = _load_instance(args.input)
    if args.algorithm == "kt":
        sched = kt.kt_schedule(instance, args.max_steps)
    elif args.algorithm == "setcover":
        sched = cover.set_cover_schedule(instance)
    else:
        objective = objective_name(args.objective)
        if args.freqs:
            q = _frequencies_for(instance, args.freqs)
        else:
            q = _solve(instance, objective_family(objective), 1e-6).q
        sched = tree.r_tree(instance, q, objective, args.trials, args.seed, args.fill, args.level_cap)
    if sched.warning:
        print(f"warning: {sched.warning}", file=sys.stderr)
    save_schedule(instance, sched, args.output)
    print(f"{args.algorithm}: cycle of {len(sched)} probes -> {args.output}")


def _memoryless_or_cycle(instance, args):
    if args.sched:
        sched = load_schedule(instance, args.sched)
        evaluate_fn = evaluate_probabilistic if instance.probabilistic else evaluate
        return None, sched, evaluate_fn(instance, sched, normalized=True)
    q = _frequencies_for(instance, args.freqs)
    return q, None, memoryless_report(instance, q, normalized=True)


def cmd_eval(args):
    instance = _load_instance(args.input)
    q, sched, report = _memoryless_or_cycle(instance, args)
    extra = []
    if args.mc:
        if q is None:
            raise InstanceError("--mc needs --freqs")
        stats = simulate_memoryless(instance, q, args.mc, args.seed)
        for eid, mean, p99 in zip(instance.element_ids, stats.mean, stats.percentiles[99]):
            extra.append(("sim_mean", eid, mean))
            extra.append(("sim_p99", eid, p99))
    write_report_csv(instance, report, args.output, extra)
    for name, value in report.values().items():
        print(f"{name:>5} {_fmt(value)}")
    if not report.finite:
        print(f"warning: {len(report.infinite_elements)} element(s) never detected", file=sys.stderr)


def cmd_cdf(args):
    instance = _load_instance(args.input)
    q, sched, report = _memoryless_or_cycle(instance, args)
    if args.stat == "mean":
        values = report.et
    elif args.stat == "max":
        values = report.mt
    elif q is not None:
        values = geometric_quantile(memoryless.coverage_rates(instance, q), 0.99)
    else:
        values = cycle_percentile(instance, sched, 99)
    export_cdf(values, args.output)
    print(f"reverse CDF of {args.stat} over {instance.n} elements -> {args.output}")


def compare_rows(instance, trials=32, seed=0, subset=None, tol=1e-6):
    """Rows of the scheduler comparison table: (name, kind, report)."""
    rows = []
    convex = _solve(instance, "sum", tol)
    lp = _solve(instance, "max", tol)
    sc = cover.set_cover_schedule(instance)
    kts = kt.kt_schedule(instance)
    samp_sc = memoryless.uniform_frequencies(instance, sc.cycle)
    samp_kt = kts.test_frequencies(instance.m)
    for name, q in [
        ("convex", convex.q),
        ("lp", lp.q),
        ("uniform", memoryless.uniform_frequencies(instance).q),
        ("samp_sc", samp_sc.q),
        ("samp_kt", samp_kt),
    ]:
        rows.append((name, "memoryless", memoryless_report(instance, q, normalized=True)))
    if subset is None:
        subset = [instance.test_ids[i] for i in sorted(set(sc.cycle))]
    seeded_con = _solve(instance, "sum", tol, subset)
    seeded_lp = _solve(instance, "max", tol, subset)
    evaluate_fn = evaluate_probabilistic if instance.probabilistic else evaluate
    for name, sched in [
        ("sc", sc),
        ("kt", kts),
        ("rt_con", tree.r_tree(instance, convex.q, "EeEt", trials, seed)),
        ("rt_lp", tree.r_tree(instance, lp.q, "MeMt", trials, seed)),
        ("rt_s_con", tree.r_tree(instance, seeded_con.q, "EeEt", trials, seed)),
        ("rt_s_lp", tree.r_tree(instance, seeded_lp.q, "MeMt", trials, seed)),
    ]:
        rows.append((name, "deterministic", evaluate_fn(instance, sched, normalized=True)))
    return rows


def cmd_compare(args):
    instance = _load_instance(args.input)
    subset = _read_subset(args.subset) if args.subset else None
    rows = compare_rows(instance, args.trials, args.seed, subset, args.tol)
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheduler", "kind", *OBJECTIVES])
        for name, kind, report in rows:
            writer.writerow([name, kind, *(_fmt(report[o]) for o in OBJECTIVES)])
    header = f"{'scheduler':<10}" + "".join(f"{o:>10}" for o in OBJECTIVES)
    print(header)
    for name, _, report in rows:
        print(f"{name:<10}" + "".join(f"{report[o]:>10.4g}" for o in OBJECTIVES))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probesched", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate an instance file")
    gen.add_argument("kind", choices=["singletons", "clos", "lowerbound", "random"])
    gen.add_argument("--n", type=int, default=8, help="elements (singletons, random)")
    gen.add_argument("--m", type=int, default=6, help="tests (lowerbound, random)")
    gen.add_argument("--ell", type=int, default=3, help="tests per element (lowerbound)")
    gen.add_argument("--levels", type=int, default=3, help="switch tiers (clos)")
    gen.add_argument("--radix", type=int, default=2, help="ports up and down per switch (clos)")
    gen.add_argument("--density", type=float, default=0.3, help="pair density (random)")
    gen.add_argument("--weights", default="uniform", help="uniform | zipf:S | comma list (singletons)")
    gen.add_argument("--mode", choices=["sum", "max"], default="sum")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="optimal memoryless frequencies")
    solve.add_argument("family", choices=["sum", "max"])
    solve.add_argument("-i", "--input", required=True)
    solve.add_argument("--tol", type=float, default=1e-6)
    solve.add_argument("--subset", help="restrict to these tests (R-Tree seeding)")
    solve.add_argument("-o", "--output", required=True)
    solve.set_defaults(func=cmd_solve)

    sched = sub.add_parser("schedule", help="build a deterministic cyclic schedule")
    sched.add_argument("algorithm", choices=["rtree", "kt", "setcover"])
    sched.add_argument("-i", "--input", required=True)
    sched.add_argument("--freqs", help="frequencies for rtree (solved on the fly if absent)")
    sched.add_argument("--objective", default="eeet", type=str.lower,
                       choices=[o.lower() for o in OBJECTIVES])
    sched.add_argument("--trials", type=int, default=32)
    sched.add_argument("--seed", type=int, default=0)
    sched.add_argument("--fill", choices=list(tree.FILL_POLICIES), default="kt")
    sched.add_argument("--level-cap", type=int, default=tree.LEVEL_CAP)
    sched.add_argument("--max-steps", type=int, default=1_000_000)
    sched.add_argument("-o", "--output", required=True)
    sched.set_defaults(func=cmd_schedule)

    for name, helptext in [("eval", "evaluate all six objectives"), ("cdf", "reverse CDF over elements")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("-i", "--input", required=True)
        which = p.add_mutually_exclusive_group(required=True)
        which.add_argument("--sched")
        which.add_argument("--freqs")
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--seed", type=int, default=0)
        if name == "eval":
            p.add_argument("--mc", type=int, default=0, metavar="SAMPLES",
                           help="also simulate the memoryless schedule")
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--stat", choices=["mean", "max", "p99"], default="mean")
            p.set_defaults(func=cmd_cdf)

    comp = sub.add_parser("compare", help="table of all schedulers by objective")
    comp.add_argument("-i", "--input", required=True)
    comp.add_argument("--all", action="store_true", default=True)
    comp.add_argument("--trials", type=int, default=32)
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--tol", type=float, default=1e-6)
    comp.add_argument("--subset", help="tests seeding the RT-S rows (default: greedy cover)")
    comp.add_argument("-o", "--output", required=True)
    comp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
