"""Transition graphs and open structural sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .model import MARKOV_TOL, OpenMapModel

EXHAUSTIVE_MAX = 22


@dataclass(frozen=True)
class TransitionGraph:
    m: int
    edges: frozenset[tuple[int, int]]
    hole: frozenset[int]

    def successors(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)

    def out_degree(self, i: int) -> int:
        return sum(1 for (a, _) in self.edges if a == i)

    @property
    def vertices(self) -> range:
        return range(1, self.m + 1)

    def to_dot(self, name: str = "Gamma_H") -> str:
        lines = [f"digraph {name} {{"]
        for v in self.vertices:
            if v in self.hole:
                lines.append(f'  "v{v}" [shape=circle,style=open];')
            else:
                lines.append(f'  "v{v}" [shape=circle];')
        for i, j in sorted(self.edges):
            lines.append(f'  "v{i}" -> "v{j}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StructuralSet:
    vertices: frozenset[int]
    m: int

    @property
    def complement(self) -> frozenset[int]:
        return frozenset(range(1, self.m + 1)) - self.vertices

    @property
    def index_set(self) -> tuple[int, ...]:
        return tuple(sorted(self.vertices))

    def label(self) -> str:
        return ",".join(f"v{v}" for v in self.index_set)

    def sort_key(self):
        return (len(self.vertices), self.index_set)


def build_graph(model: OpenMapModel, open_system: bool = True) -> TransitionGraph:
    """Edges ``i -> j`` with ``cl(xi_j)`` inside the declared image of ``xi_i``.

    With ``open_system=False`` the hole is ignored and the closed system's
    graph is returned.
    """
    q = model.partition.cut_points
    hole = model.hole if open_system else frozenset()
    edges = set()
    for i in range(1, model.m + 1):
        if i in hole:
            continue
        a, b = model.images[i - 1]
        for j in range(1, model.m + 1):
            if a - MARKOV_TOL <= q[j - 1] and q[j] <= b + MARKOV_TOL:
                edges.add((i, j))
    return TransitionGraph(model.m, frozenset(edges), frozenset(hole))


def is_acyclic(graph: TransitionGraph, subset: Iterable[int]) -> bool:
    """True iff the subgraph induced on ``subset`` has no directed cycle (self-loops count)."""
    sub = set(subset)
    adj = {v: [w for w in graph.successors(v) if w in sub] for v in sorted(sub)}
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(sub, WHITE)
    for root in sorted(sub):
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(adj[root]))]
        colour[root] = GREY
        while stack:
            v, it = stack[-1]
            for w in it:
                if colour[w] == GREY:
                    return False
                if colour[w] == WHITE:
                    colour[w] = GREY
                    stack.append((w, iter(adj[w])))
                    break
            else:
                colour[v] = BLACK
                stack.pop()
    return True


def is_structural(graph: TransitionGraph, vertices: Iterable[int]) -> bool:
    s = set(vertices)
    if not graph.hole <= s or not s <= set(graph.vertices):
        return False
    return is_acyclic(graph, set(graph.vertices) - s)


def _greedy_fvs_sets(graph: TransitionGraph) -> list[frozenset[int]]:
    """Sound structural sets from a greedy feedback-vertex-set pass."""
    found = []
    free = set(graph.vertices) - graph.hole
    forced = {v for v in free if (v, v) in graph.edges}
    comp = free - forced
    while not is_acyclic(graph, comp):
        def score(v):
            indeg = sum(1 for (a, b) in graph.edges if b == v and a in comp)
            outdeg = sum(1 for (a, b) in graph.edges if a == v and b in comp)
            return (indeg * outdeg, -v)
        comp.discard(max(comp, key=score))
    s = frozenset(set(graph.vertices) - comp)
    found.append(s)
    # single-vertex additions to the greedy set are also structural
    for v in sorted(comp):
        found.append(s | {v})
    found.append(frozenset(graph.vertices))
    return found


def enumerate_structural_sets(graph: TransitionGraph, limit: int | None = None,
                              exhaustive_max: int = EXHAUSTIVE_MAX) -> list[StructuralSet]:
    """Open structural sets ordered by size, then lexicographically.

    Exhaustive when the number of vertices is at most ``exhaustive_max``;
    otherwise a greedy heuristic returns a verified, non-empty subset.
    """
    m = graph.m
    if m > exhaustive_max:
        sets = {s for s in _greedy_fvs_sets(graph) if is_structural(graph, s)}
        out = sorted((StructuralSet(s, m) for s in sets), key=StructuralSet.sort_key)
        return out[:limit] if limit is not None else out

    # vertices with self-loops can never sit in the complement
    free = sorted(set(graph.vertices) - graph.hole
                  - {v for v in graph.vertices if (v, v) in graph.edges})
    everything = frozenset(graph.vertices)
    # acyclic sets are closed under subsets, so grow complements and prune
    complements: list[tuple[int, ...]] = [()]
    stack = [((), 0)]
    while stack:
        comp, start = stack.pop()
        for idx in range(start, len(free)):
            grown = comp + (free[idx],)
            if is_acyclic(graph, grown):
                complements.append(grown)
                stack.append((grown, idx + 1))
    out = sorted((StructuralSet(everything - set(c), m) for c in complements),
                 key=StructuralSet.sort_key)
    return out[:limit] if limit is not None else out
