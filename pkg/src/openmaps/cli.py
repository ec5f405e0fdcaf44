"""Command-line driver.

Exit codes: 0 success, 2 invalid model, 3 bad structural set,
4 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import kernel
from .escape import (BoundMatrixPair, EscapeSeries, build_matrices, classify, eigen_escape,
                     escape_series)
from .fixtures import BUNDLED, bundled_model
from .graph import StructuralSet, build_graph, enumerate_structural_sets, is_structural
from .model import ModelError, OpenMapModel, load_model, validate
from .oracle import (MAX_EXACT_DEPTH, exact_escape_measure, lemma1_check,
                     monte_carlo_escape)
from .reduction import build_reduced, compare, format_matrix, improved_series

EXIT_OK, EXIT_INVALID, EXIT_NOT_STRUCTURAL, EXIT_VERIFY = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def read_model(spec: str) -> OpenMapModel:
    """Load a model file, or a bundled model by name (``tent``, ``cubic``, ``shift``)."""
    path = Path(spec)
    try:
        if path.exists():
            model = load_model(path, validate_model=False)
        elif spec in BUNDLED:
            model = bundled_model(spec)
        else:
            raise CLIError(EXIT_INVALID, f"no such model file: {spec}")
        validate(model).raise_if_rejected()
    except ModelError as exc:
        raise CLIError(EXIT_INVALID, f"invalid model: {exc}") from None
    return model


def parse_set(text: str) -> frozenset[int]:
    try:
        return frozenset(int(tok.strip().lstrip("vV")) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise CLIError(EXIT_NOT_STRUCTURAL, f"cannot parse vertex list {text!r}") from None


def select_sets(model: OpenMapModel, args) -> list[StructuralSet]:
    graph = build_graph(model)
    if getattr(args, "set", None):
        verts = parse_set(args.set)
        if not is_structural(graph, verts):
            raise CLIError(EXIT_NOT_STRUCTURAL,
                           f"{{{','.join(f'v{v}' for v in sorted(verts))}}} is not an open "
                           "structural set (must contain the hole and leave an acyclic complement)")
        return [StructuralSet(verts, model.m)]
    if getattr(args, "auto", False):
        return enumerate_structural_sets(graph, limit=1)
    if getattr(args, "all", False):
        return enumerate_structural_sets(graph)
    return []


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------

def cmd_analyze(args) -> int:
    model = read_model(args.model)
    report = validate(model)
    p = args.precision
    lines = [f"model: {model.name or args.model}", *report.lines()]
    graph = build_graph(model)
    lines.append("transition graph (DOT):")
    lines.append(graph.to_dot().rstrip("\n"))
    pair = build_matrices(model)
    names = [str(i) for i in range(1, model.m + 1)]
    if pair.exact:
        lines.append("weighted transition matrix A_H:")
        lines.append(format_matrix(pair.lower, names, p).rstrip("\n"))
    else:
        lines.append("lower matrix:")
        lines.append(format_matrix(pair.lower, names, p).rstrip("\n"))
        lines.append("upper matrix:")
        lines.append(format_matrix(pair.upper, names, p).rstrip("\n"))
    sides = ("lower",) if pair.exact else ("lower", "upper")
    for side in sides:
        sd = kernel.spectral(getattr(pair, side))
        eig = ", ".join(_fmt_complex(z, p) for z in sd.eigenvalues)
        label = "spectrum" if pair.exact else f"{side} spectrum"
        lines.append(f"{label}: {{{eig}}}; "
                     f"{'nondefective' if sd.nondefective else 'defective'}")
    for side, cls in classify(pair).items():
        if pair.exact and side == "upper":
            continue
        lines.append(f"{'survival' if pair.exact else side + ' survival'}: {cls.describe()}")
    try:
        _, expansion = eigen_escape(pair, 0)
        for side in sides:
            pairs = expansion.terms(side)
            terms = [f"({_fmt_complex(cs, p + 2)})*({_fmt_complex(lam, p + 2)})^n"
                     for cs, lam in pairs if abs(lam) > 1e-12 and abs(cs) > 1e-14]
            # zero eigenvalues only contribute at n = 0
            at_zero = sum(cs for cs, lam in pairs if abs(lam) <= 1e-12)
            if abs(at_zero) > 1e-14:
                terms.append(f"({_fmt_complex(at_zero, p + 2)})*[n=0]")
            lines.append(f"{'X^n' if pair.exact else side + ' X^n'} = {' + '.join(terms)}")
    except (kernel.ExpansionUnavailable, ArithmeticError) as exc:
        lines.append(f"eigen-expansion unavailable: {exc}")
    for S in select_sets(model, args):
        lines.append(build_reduced(model, S, graph).dump(max(p, 3)).rstrip("\n"))
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _fmt_complex(z, p: int) -> str:
    z = complex(z)
    if abs(z.imag) <= 1e-12:
        text = f"{z.real:.{p}f}"
        return text[1:] if text.startswith("-") and float(text) == 0.0 else text
    return f"{z.real:.{p}f}{z.imag:+.{p}f}j"


def bounds_csv(model: OpenMapModel, n_max: int, sets: list[StructuralSet], clamp: bool,
               all_blocks: bool) -> str:
    base = escape_series(build_matrices(model), n_max)
    if not sets:
        return base.to_csv(clamp)
    blocks = []
    graph = build_graph(model)
    for S in sets:
        red = improved_series(build_reduced(model, S, graph), n_max)
        cols = red.columns(clamp)
        extra = {f"{k}_S": cols[k] for k in ("X_lower", "X_upper", "Y_lower", "Y_upper")}
        text = base.to_csv(clamp, extra)
        if all_blocks:
            text = f"# structural_set={S.label()}\n" + text
        blocks.append(text)
    if all_blocks:
        blocks.append("# compare\n" + compare(model, sets, n_max, base).to_csv())
    return "\n".join(blocks)


def cmd_bounds(args) -> int:
    model = read_model(args.model)
    sets = select_sets(model, args)
    emit(bounds_csv(model, args.n, sets, not args.no_clamp, bool(args.all)), args.out)
    return EXIT_OK


def cmd_exact(args) -> int:
    model = read_model(args.model)
    if args.n > MAX_EXACT_DEPTH:
        raise CLIError(1, f"--n is capped at {MAX_EXACT_DEPTH} for exact enumeration")
    emit(exact_escape_measure(model, args.n).series().to_csv(not args.no_clamp), args.out)
    return EXIT_OK


def cmd_structural_sets(args) -> int:
    model = read_model(args.model)
    graph = build_graph(model)
    sets = enumerate_structural_sets(graph, limit=args.limit)
    emit("".join(S.label() + "\n" for S in sets), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = read_model(args.model)
    sets = select_sets(model, args)
    est = monte_carlo_escape(model, args.samples, args.n, args.seed, workers=args.workers)
    if est.samples:
        series = EscapeSeries.from_escape(est.X, est.X)
        text = series.to_csv(not args.no_clamp, {"X_se": est.X_se, "Y_se": est.Y_se})
    else:
        text = "n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact,X_se,Y_se\n"
    emit(text, args.out)
    log = []
    for S in sets:
        rep = lemma1_check(model, S, args.lemma_samples, args.lemma_n, args.seed)
        log.append(f"# lemma1 {S.label()}: {len(rep.mismatches)} mismatches "
                   f"over {rep.samples} points, n<={rep.n_max}")
        log.extend(rep.log_lines())
    if log:
        if args.log:
            Path(args.log).write_text("\n".join(log) + "\n")
        else:
            sys.stderr.write("\n".join(log) + "\n")
    return EXIT_OK


# -- verification ------------------------------------------------------------

def _chain_violation(lo_outer, lo_inner, hi_inner, hi_outer, tol=1e-12):
    """First index where outer_lo <= inner_lo <= inner_hi <= outer_hi fails."""
    for n in range(len(lo_outer)):
        scale = max(1.0, abs(hi_outer[n]))
        if (lo_inner[n] < lo_outer[n] - tol * scale or hi_inner[n] < lo_inner[n] - tol * scale
                or hi_outer[n] < hi_inner[n] - tol * scale):
            return n
    return None


def _inside(values, lo, hi, tol):
    for n in range(len(values)):
        scale = max(1.0, abs(hi[n]))
        if not lo[n] - tol * scale <= values[n] <= hi[n] + tol * scale:
            return n
    return None


def verify(model: OpenMapModel, n_max: int, samples: int, seed: int,
           max_sets: int = 16, pair: BoundMatrixPair | None = None) -> list[tuple[str, bool, str]]:
    """Run oracle-vs-matrix checks; returns ``(name, passed, detail)`` rows."""
    results = []
    pair = pair or build_matrices(model)
    base = escape_series(pair, n_max)
    depth = min(n_max, 12)
    truth = exact_escape_measure(model, depth)

    if pair.exact:
        err = np.abs(truth.X - base.X_lower[: depth + 1])
        bad = np.flatnonzero(err > 1e-10)
        results.append(("exact X^n matches cylinder oracle", bad.size == 0,
                        f"n={int(bad[0])}, error {err[bad[0]]:.3g}" if bad.size
                        else f"n<={depth}, max error {err.max():.3g}"))
    for name, v, lo, hi in (("X", truth.X, base.X_lower, base.X_upper),
                            ("Y", truth.Y, base.Y_lower, base.Y_upper)):
        n = _inside(v, lo, hi, 1e-10)
        results.append((f"oracle {name}^n inside unreduced bounds", n is None,
                        f"violated at n={n}" if n is not None else f"n<={depth}"))

    graph = build_graph(model)
    for S in enumerate_structural_sets(graph, limit=max_sets):
        red = improved_series(build_reduced(model, S, graph), n_max)
        label = S.label()
        for name in ("X", "Y"):
            n = _chain_violation(getattr(base, f"{name}_lower"), getattr(red, f"{name}_lower"),
                                 getattr(red, f"{name}_upper"), getattr(base, f"{name}_upper"))
            results.append((f"{{{label}}} {name}-chain unreduced <= reduced", n is None,
                            f"violated at n={n}" if n is not None else f"n<={n_max}"))
            v = getattr(truth, name)
            n = _inside(v, getattr(red, f"{name}_lower")[: depth + 1],
                        getattr(red, f"{name}_upper")[: depth + 1], 1e-10)
            results.append((f"{{{label}}} oracle {name}^n inside reduced bounds", n is None,
                            f"violated at n={n}" if n is not None else f"n<={depth}"))
        rep = lemma1_check(model, S, samples, max(n_max, 1), seed)
        detail = (f"{len(rep.mismatches)} mismatches, first x0={rep.mismatches[0][0]!r}"
                  if rep.mismatches else f"{samples} points agree")
        results.append((f"{{{label}}} delayed return escape times", rep.ok, detail))
    return results


def cmd_verify(args) -> int:
    model = read_model(args.model)
    results = verify(model, args.n, args.samples, args.seed, args.max_sets,
                     pair=build_matrices(model))
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail in results]
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="openmaps",
        description="Escape and survival bounds for open Markov interval maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_default=30):
        p.add_argument("model", help="model JSON file, or bundled name: " + ", ".join(BUNDLED))
        p.add_argument("--n", type=int, default=n_default, help="largest step n")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--no-clamp", action="store_true",
                       help="report raw bounds instead of clamping to [0, 1]")

    def selector(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--set", help="structural set, e.g. v1,v3,v4")
        g.add_argument("--auto", action="store_true", help="smallest structural set")
        g.add_argument("--all", action="store_true", help="every structural set")

    p = sub.add_parser("analyze", help="validation report, graph and matrices")
    p.add_argument("model")
    p.add_argument("--precision", type=int, default=2, help="decimals in matrix display")
    p.add_argument("--out")
    selector(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bounds", help="escape bounds as CSV")
    common(p)
    selector(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("exact", help="exact escape measures by cylinder enumeration")
    common(p, n_default=12)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("structural-sets", help="list open structural sets")
    p.add_argument("model")
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_structural_sets)

    p = sub.add_parser("simulate", help="Monte Carlo escape estimates")
    common(p, n_default=10)
    selector(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--lemma-samples", type=int, default=10**4)
    p.add_argument("--lemma-n", type=int, default=200)
    p.add_argument("--log", help="file for the delayed-return mismatch log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check matrix bounds against the oracles")
    common(p, n_default=50)
    p.add_argument("--samples", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--max-sets", type=int, default=16)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "n", 0) < 0:
        sys.stderr.write("error: --n must be non-negative\n")
        return 1
    try:
        return args.func(args)
    except CLIError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
