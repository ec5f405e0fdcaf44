"""Delayed first-return reductions over open structural sets.

Each admissible word ``i_0 i_1 ... i_t`` runs from a non-hole cell through
cells outside the structural set and stops at its first return to the
set. The reduced matrices replace a long word by a chain of path states
with weight 1, followed by one step weighted by the inf (or sup) of the
inverse derivative of ``f^t`` over the word's cylinder. That weight is
never looser than the product of the single-step weights.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from . import kernel
from .escape import EscapeSeries, matrix_series
from .graph import StructuralSet, TransitionGraph, build_graph, is_structural
from .model import Cell, OpenMapModel, cell_intersection, path_cell, word_label

Label = Union[int, tuple[tuple[int, ...], int]]


class NotStructural(ValueError):
    def __init__(self, vertices):
        self.vertices = tuple(sorted(vertices))
        super().__init__(f"{{{', '.join(f'v{v}' for v in self.vertices)}}} is not an "
                         "open structural set")


@dataclass(frozen=True)
class AdmissibleSequence:
    word: tuple[int, ...]
    cell: Cell

    @property
    def length(self) -> int:
        return len(self.word) - 1

    @property
    def label(self) -> str:
        return word_label(self.word)


def _as_structural(model: OpenMapModel, graph: TransitionGraph, S) -> StructuralSet:
    verts = S.vertices if isinstance(S, StructuralSet) else frozenset(S)
    if not is_structural(graph, verts):
        raise NotStructural(verts)
    return StructuralSet(frozenset(verts), model.m)


def admissible_sequences(model: OpenMapModel, S: Iterable[int] | StructuralSet,
                         graph: TransitionGraph | None = None) -> list[AdmissibleSequence]:
    """Words from every non-hole cell up to the first return to ``S``, in lexicographic order."""
    graph = graph or build_graph(model)
    sset = _as_structural(model, graph, S)
    inside = sset.vertices
    words = []
    for start in range(1, model.m + 1):
        if start in model.hole:
            continue
        stack = [(start,)]
        while stack:
            w = stack.pop()
            for nxt in graph.successors(w[-1]):
                grown = w + (nxt,)
                if nxt in inside:
                    words.append(grown)
                else:
                    stack.append(grown)
    out = []
    for w in sorted(words):
        cell = cell_intersection(model, w[0], w[1]) if len(w) == 2 else path_cell(model, w)
        if cell is not None and cell.measure > 0.0:
            out.append(AdmissibleSequence(w, Cell(cell.lo, cell.hi, "xi_" + word_label(w))))
    return out


def format_label(label: Label) -> str:
    if isinstance(label, int):
        return str(label)
    word, k = label
    return f"{word_label(word)};{k}"


@dataclass
class ReducedSystem:
    model: OpenMapModel
    structural_set: StructuralSet
    sequences: list[AdmissibleSequence]
    labels: list[Label]
    lower: np.ndarray
    upper: np.ndarray
    ones: np.ndarray
    hole_vector: np.ndarray

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def exact(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))

    def index(self, label: Label) -> int:
        return self.labels.index(label)

    def dump(self, precision: int = 6) -> str:
        buf = io.StringIO()
        buf.write(f"structural set: {{{self.structural_set.label()}}}\n")
        buf.write("admissible sequences:\n")
        for seq in self.sequences:
            buf.write(f"  {seq.label:>8}  ({seq.cell.lo:.{precision}g}, {seq.cell.hi:.{precision}g}]\n")
        names = [format_label(lab) for lab in self.labels]
        buf.write("index order: " + " ".join(names) + "\n")
        for title, mat in (("lower", self.lower), ("upper", self.upper)):
            buf.write(f"{title} transition matrix:\n")
            buf.write(format_matrix(mat, names, precision))
        return buf.getvalue()


def format_matrix(mat: np.ndarray, names: Sequence[str] | None = None, precision: int = 2) -> str:
    m = mat.shape[0]
    names = list(names) if names is not None else [str(i + 1) for i in range(m)]
    cells = [[("0" if v == 0 else f"{v:.{precision}f}") for v in row] for row in mat]
    width = max([len(c) for row in cells for c in row] + [len(n) for n in names])
    lw = max(len(n) for n in names)
    lines = [" " * (lw + 2) + " ".join(n.rjust(width) for n in names)]
    for name, row in zip(names, cells):
        lines.append(f"{name.rjust(lw)}  " + " ".join(c.rjust(width) for c in row))
    return "\n".join(lines) + "\n"


def _step_bounds(model: OpenMapModel, graph: TransitionGraph) -> dict:
    out = {}
    for i, j in graph.edges:
        c = cell_intersection(model, i, j)
        if c is not None:
            out[i, j] = kernel.extremize_inverse_derivative(model, c, 1, word=(i,))
    return out


def build_reduced(model: OpenMapModel, S: Iterable[int] | StructuralSet,
                  graph: TransitionGraph | None = None) -> ReducedSystem:
    graph = graph or build_graph(model)
    sset = _as_structural(model, graph, S)
    seqs = admissible_sequences(model, sset, graph)
    labels: list[Label] = list(range(1, model.m + 1))
    for seq in seqs:
        labels.extend((seq.word, k) for k in range(1, seq.length))
    pos = {lab: n for n, lab in enumerate(labels)}

    def at(word, k):
        if k == 0:
            return pos[word[0]]
        if k == len(word) - 1:
            return pos[word[-1]]
        return pos[(word, k)]

    step_bounds = _step_bounds(model, graph)
    size = len(labels)
    lower = np.zeros((size, size))
    upper = np.zeros((size, size))
    for seq in seqs:
        w, t = seq.word, seq.length
        for k in range(1, t):
            lower[at(w, k - 1), at(w, k)] = 1.0
            upper[at(w, k - 1), at(w, k)] = 1.0
        lo, hi = kernel.extremize_inverse_derivative(model, seq.cell, t, word=w[:-1])
        if t > 1:
            # the composite range always lies inside the product of single-step
            # ranges; clamping removes log-space rounding of order 1e-15 relative
            steps = [step_bounds[a, b] for a, b in zip(w, w[1:])]
            lo = max(lo, float(np.prod([s[0] for s in steps])))
            hi = min(hi, float(np.prod([s[1] for s in steps])))
        lower[at(w, t - 1), at(w, t)] = lo
        upper[at(w, t - 1), at(w, t)] = hi

    ones = np.zeros(size)
    ones[:model.m] = 1.0
    e = np.zeros(size)
    e[:model.m] = model.hole_vector()
    return ReducedSystem(model, sset, seqs, labels, lower, upper, ones, e)


def improved_series(reduced: ReducedSystem, n_max: int) -> EscapeSeries:
    return matrix_series(reduced.lower, reduced.upper, reduced.hole_vector, reduced.ones,
                         n_max, exact=reduced.exact)


@dataclass
class TighteningRow:
    structural_set: StructuralSet
    gap_reduced: float
    gap_unreduced: float

    @property
    def improvement(self) -> float:
        return self.gap_unreduced - self.gap_reduced


@dataclass
class TighteningReport:
    rows: list[TighteningRow]
    winners: list[int]
    exact: bool

    @property
    def best(self) -> TighteningRow:
        return min(self.rows, key=lambda r: (r.gap_reduced, r.structural_set.sort_key()))

    def to_csv(self) -> str:
        lines = ["structural_set,gap_reduced,gap_unreduced,improvement,best"]
        best = self.best
        for r in self.rows:
            lines.append(f"\"{r.structural_set.label()}\",{r.gap_reduced!r},{r.gap_unreduced!r},"
                         f"{r.improvement!r},{1 if r is best else 0}")
        return "\n".join(lines) + "\n"


def _gap(series: EscapeSeries) -> np.ndarray:
    c = series.clamped()
    return c["X_upper"] - c["X_lower"]


def compare(model: OpenMapModel, S_list: Sequence, n_max: int,
            base: EscapeSeries | None = None) -> TighteningReport:
    """Total gap between clamped upper and lower X-bounds, reduced vs unreduced."""
    from .escape import build_matrices, escape_series

    graph = build_graph(model)
    if base is None:
        base = escape_series(build_matrices(model), n_max)
    base_gap = _gap(base)
    rows, per_n = [], []
    for S in S_list:
        red = build_reduced(model, S, graph)
        gap = _gap(improved_series(red, n_max))
        rows.append(TighteningRow(red.structural_set, float(gap.sum()), float(base_gap.sum())))
        per_n.append(gap)
    stacked = np.array(per_n)
    winners = [int(np.argmin(stacked[:, n])) for n in range(n_max + 1)] if rows else []
    exact = model.is_affine and all(r.gap_reduced == 0.0 for r in rows)
    return TighteningReport(rows, winners, exact)
