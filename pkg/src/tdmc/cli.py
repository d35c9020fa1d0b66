"""Command-line driver: parse -> preprocess -> decompose -> count.

Single-stream output: progress lines are comment-prefixed ("c o ..."), the
machine-readable result block is

    c s type mc|wmc
    s SATISFIABLE|UNSATISFIABLE
    c s log10-estimate <decimal>
    c s exact arb int <N>        (mc)  /  c s exact arb float <D>  (wmc)

On timeout the block degrades to the type line plus "s UNKNOWN".  Exit codes:
0 success, 1 input error, 2 timeout.
"""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction
from typing import List, Optional

import mpmath

from .counter import (
    BranchConfig,
    CounterConfig,
    CountTimeout,
    WeightedSemiring,
    count,
)
from .formula import CnfFormula, ParseError, parse_input, write_cnf
from .oracle import MAX_ORACLE_VARS, brute_force_count
from .preprocess import (
    PreprocessConfig,
    format_preproc_comments,
    run_pipeline,
)
from .td import TdError, build_primal_graph, compute_td, parse_pace, select_root

LOG10_2 = 0.30102999566398120


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="tdmc", description="Exact #SAT / weighted model counter")
    p.add_argument("input", nargs="?", default="-",
                   help="DIMACS CNF path, or '-' for stdin")
    p.add_argument("--mode", choices=("auto", "mc", "wmc"), default="auto")
    p.add_argument("--td-time", type=float, default=120.0, metavar="SECONDS",
                   help="tree decomposition budget (default 120)")
    p.add_argument("--td-import", metavar="FILE",
                   help="load a PACE-format .td instead of computing one")
    p.add_argument("--cache-mb", type=int, default=2000, metavar="MB")
    p.add_argument("--prec", type=int, default=256, metavar="BITS",
                   help="mantissa bits for weighted counting (default 256)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-preproc", action="store_true",
                   help="disable the whole preprocessing pipeline")
    p.add_argument("--no-vivify-prop", action="store_true")
    p.add_argument("--no-vivify-complete", action="store_true")
    p.add_argument("--no-sparsify", action="store_true")
    p.add_argument("--no-merge-equiv", action="store_true")
    p.add_argument("--no-elim-def", action="store_true")
    p.add_argument("--branching", choices=("td", "base"), default="td")
    p.add_argument("--timeout", type=float, default=None, metavar="SECONDS")
    p.add_argument("--preproc-out", metavar="FILE",
                   help="dump the preprocessed formula with accounting comments")
    return p


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _float_digits(prec_bits: int) -> int:
    return max(1, int(prec_bits * LOG10_2) - 2)


def _format_log10(value, prec_bits: int) -> str:
    if value == 0:
        return "-inf"
    with mpmath.workprec(max(64, prec_bits)):
        return f"{float(mpmath.log10(mpmath.mpf(value))):.7f}"


def _emit_block(out, mode: str, value, prec_bits: int) -> None:
    out.write(f"c s type {mode}\n")
    out.write("s SATISFIABLE\n" if value != 0 else "s UNSATISFIABLE\n")
    out.write(f"c s log10-estimate {_format_log10(value, prec_bits)}\n")
    if mode == "mc":
        out.write(f"c s exact arb int {value}\n")
    else:
        if value == 0:
            text = "0"
        else:
            with mpmath.workprec(prec_bits):
                text = mpmath.nstr(value, _float_digits(prec_bits))
        out.write(f"c s exact arb float {text}\n")


def _run_oracle(argv: List[str]) -> int:
    parser = _Parser(prog="tdmc oracle")
    parser.add_argument("input", nargs="?", default="-")
    parser.add_argument("--mode", choices=("auto", "mc", "wmc"), default="auto")
    args = parser.parse_args(argv)
    formula = parse_input(_read_input(args.input), args.mode)
    if formula.num_vars > MAX_ORACLE_VARS:
        print(f"c o error: oracle limited to {MAX_ORACLE_VARS} variables",
              file=sys.stderr)
        return 1
    res = brute_force_count(formula)
    print(f"c o oracle exact {res.exact_count}")
    w = res.weighted_value
    print(f"c o oracle weighted {w.numerator}/{w.denominator}")
    return 0


def run(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "oracle":  # hidden debugging subcommand
        try:
            return _run_oracle(argv[1:])
        except (ParseError, OSError, _UsageError) as exc:
            print(f"c o error: {exc}", file=sys.stderr)
            return 1

    out = sys.stdout
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"c o error: {exc}", file=sys.stderr)
        return 1

    start = time.monotonic()
    deadline = start + args.timeout if args.timeout is not None else None

    def remaining() -> Optional[float]:
        return None if deadline is None else deadline - time.monotonic()

    try:
        text = _read_input(args.input)
    except OSError as exc:
        print(f"c o error: {exc}", file=sys.stderr)
        return 1

    try:
        formula = parse_input(text, args.mode)
    except ParseError as exc:
        print(f"c o error: {exc}", file=sys.stderr)
        return 1
    if args.mode == "wmc" and (formula.weights is None or not formula.weights):
        print("c o error: wmc mode requires weight lines in the input",
              file=sys.stderr)
        return 1
    weighted = formula.is_weighted
    mode = "wmc" if weighted else "mc"
    out.write(
        f"c o parse vars={formula.num_vars} clauses={len(formula.clauses)} "
        f"free={formula.free_var_count} weighted={int(weighted)}\n"
    )

    multiplier = Fraction(1) if weighted else 1
    work = formula
    unsat = False

    if not args.no_preproc:
        budget = PreprocessConfig().time_budget
        rem = remaining()
        if rem is not None:
            budget = max(0.1, min(budget, 0.5 * rem))
        pcfg = PreprocessConfig(
            vivify_prop=not args.no_vivify_prop,
            vivify_complete=not args.no_vivify_complete,
            sparsify=not args.no_sparsify,
            merge_equiv=not args.no_merge_equiv,
            elim_def=not args.no_elim_def,
            time_budget=budget,
        )
        pres = run_pipeline(formula, pcfg)
        work = pres.formula
        multiplier = pres.multiplier
        unsat = pres.unsat
        for stage, s in pres.stats.items():
            out.write(
                f"c o preproc {stage} lits_removed={s['literals_removed']} "
                f"clauses_removed={s['clauses_removed']} merges={s['merges']} "
                f"elims={s['eliminations']} backbone={s['backbone']}\n"
            )
        out.write(
            f"c o preproc result vars={work.num_vars} "
            f"clauses={len(work.clauses)} removed={len(pres.eliminated_vars)}\n"
        )
        if args.preproc_out:
            try:
                with open(args.preproc_out, "w") as fh:
                    fh.write(format_preproc_comments(pres))
                    fh.write(write_cnf(work))
            except OSError as exc:
                print(f"c o error: {exc}", file=sys.stderr)
                return 1

    rem = remaining()
    if rem is not None and rem <= 0:
        out.write(f"c s type {mode}\n")
        out.write("s UNKNOWN\n")
        return 2

    td = None
    use_td = args.branching == "td"
    if use_td and not unsat and work.num_vars > 0:
        graph = build_primal_graph(work)
        td_budget = args.td_time
        rem = remaining()
        if rem is not None:
            td_budget = min(td_budget, max(1.0, 0.2 * rem))
        if args.td_import:
            try:
                td = parse_pace(_read_input(args.td_import), graph)
            except (TdError, OSError) as exc:
                print(f"c o error: {exc}", file=sys.stderr)
                return 1
        else:
            t0 = time.monotonic()
            td = compute_td(graph, td_budget, seed=args.seed)
            out.write(f"c o time td {time.monotonic() - t0:.3f}\n")
        td.root = select_root(td, graph)
        out.write(f"c o td width={td.width} bags={len(td.bags)} root={td.root}\n")

    if unsat:
        zero = 0 if mode == "mc" else mpmath.mpf(0)
        _emit_block(out, mode, zero, args.prec)
        return 0

    ccfg = CounterConfig(
        branching=BranchConfig(use_td=use_td),
        cache_bytes=args.cache_mb * 1024 * 1024,
        precision_bits=args.prec,
        seed=args.seed,
        deadline=deadline,
    )
    try:
        t0 = time.monotonic()
        result = count(work, td, ccfg)
        out.write(f"c o time count {time.monotonic() - t0:.3f}\n")
    except CountTimeout:
        out.write(f"c s type {mode}\n")
        out.write("s UNKNOWN\n")
        return 2
    st = result.stats
    out.write(
        f"c o stats decisions={st.decisions} conflicts={st.conflicts} "
        f"cache_hits={st.cache_hits} cache_stores={st.cache_stores} "
        f"components={st.components} max_depth={st.max_depth}\n"
    )

    if weighted:
        with mpmath.workprec(args.prec):
            semiring = WeightedSemiring(work, args.prec)
            total = semiring.from_fraction(Fraction(multiplier)) * result.value
    else:
        total = int(multiplier) * result.value
    _emit_block(out, mode, total, args.prec)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
