"""Ground truth independent of the transition matrices.

* ``exact_escape_measure`` sums Lebesgue measures of escape cylinders,
  built by inverting branches interval by interval.
* ``monte_carlo_escape`` iterates uniform samples under the open map.
* ``delayed_orbit`` / ``lemma1_check`` simulate the delayed first-return
  map and compare its escape times with those of the open map.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .escape import EscapeSeries
from .graph import StructuralSet, build_graph
from .model import OpenMapModel

MAX_EXACT_DEPTH = 14
CHUNK = 1 << 16


class DepthTooLarge(ValueError):
    pass


@dataclass
class ExactEscape:
    X: np.ndarray
    cylinders: list[int]

    @property
    def Y(self) -> np.ndarray:
        return np.cumsum(self.X)

    def series(self) -> EscapeSeries:
        return EscapeSeries.from_escape(self.X, self.X, exact=True)


def exact_escape_measure(model: OpenMapModel, n_max: int) -> ExactEscape:
    """Measure of points entering the hole first at step ``n``, for ``n <= n_max``.

    Cylinders are grown backwards from the hole cells along edges of the
    transition graph, so only realizable itineraries are visited. Each level
    is held as arrays of interval endpoints and inverted branch by branch.
    """
    if n_max > MAX_EXACT_DEPTH:
        raise DepthTooLarge(f"n_max={n_max} exceeds the cap of {MAX_EXACT_DEPTH}")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    graph = build_graph(model)
    q = model.partition.cut_points
    hole = sorted(model.hole)
    lo = np.array([q[j - 1] for j in hole], dtype=float)
    hi = np.array([q[j] for j in hole], dtype=float)
    cell = np.array(hole, dtype=np.int64)
    X = np.zeros(n_max + 1)
    counts = []
    for n in range(n_max + 1):
        X[n] = float(np.sum(hi - lo))
        counts.append(int(lo.size))
        if n == n_max or lo.size == 0:
            counts.extend([0] * (n_max - n))
            break
        parts = [_preimages(model, i, graph.successors(i), lo, hi, cell)
                 for i in range(1, model.m + 1) if i not in model.hole]
        parts = [p for p in parts if p[0].size]
        if parts:
            lo, hi, cell = (np.concatenate(z) for z in zip(*parts))
        else:
            lo = hi = np.zeros(0)
            cell = np.zeros(0, dtype=np.int64)
    return ExactEscape(X, counts)


def _preimages(model: OpenMapModel, i: int, targets, lo, hi, cell):
    """Preimages under branch ``i`` of the intervals lying in its target cells."""
    keep = np.isin(cell, list(targets))
    a, b = lo[keep], hi[keep]
    clo, chi = model.partition.cut_points[i - 1], model.partition.cut_points[i]
    br = model.branches[i - 1]
    ya, yb = float(br(clo)), float(br(chi))
    a, b = np.maximum(a, min(ya, yb)), np.minimum(b, max(ya, yb))
    ok = b > a
    a, b = a[ok], b[ok]
    xa, xb = _inverse(br, a, clo, chi), _inverse(br, b, clo, chi)
    xlo, xhi = np.minimum(xa, xb), np.maximum(xa, xb)
    ok = xhi > xlo
    return xlo[ok], xhi[ok], np.full(int(ok.sum()), i, dtype=np.int64)


def _inverse(br, y, lo: float, hi: float, iters: int = 64):
    """Vectorized inverse of a monotone branch on ``[lo, hi]`` by bisection."""
    if br.is_affine:
        return np.clip((y - br.coeffs[0]) / br.slope, lo, hi)
    increasing = float(br(hi)) > float(br(lo))
    a = np.full(y.shape, lo)
    b = np.full(y.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = (br(mid) < y) if increasing else (br(mid) > y)
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


@dataclass
class MonteCarloEstimate:
    samples: int
    counts: np.ndarray

    @property
    def X(self) -> np.ndarray:
        return self.counts / self.samples if self.samples else np.zeros(0)

    @property
    def Y(self) -> np.ndarray:
        return np.cumsum(self.X)

    @staticmethod
    def _se(p: np.ndarray, n: int) -> np.ndarray:
        return np.sqrt(p * (1 - p) / n) if n else np.zeros(0)

    @property
    def X_se(self) -> np.ndarray:
        return self._se(self.X, self.samples)

    @property
    def Y_se(self) -> np.ndarray:
        return self._se(self.Y, self.samples)


def escape_times(model: OpenMapModel, x: np.ndarray, n_max: int) -> np.ndarray:
    """First ``n <= n_max`` with ``f_H^n(x)`` in the hole, or -1."""
    x = np.array(x, dtype=float)
    t = np.full(x.shape, -1, dtype=np.int64)
    alive = np.ones(x.shape, dtype=bool)
    for n in range(n_max + 1):
        hit = alive & model.in_hole(x)
        t[hit] = n
        alive &= ~hit
        if n == n_max or not alive.any():
            break
        x[alive] = model.step_open(x[alive])
    return t


def _chunk_counts(model, seed_seq, size, n_max):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    t = escape_times(model, rng.random(size), n_max)
    return np.bincount(t[t >= 0], minlength=n_max + 1)[: n_max + 1]


def monte_carlo_escape(model: OpenMapModel, sample_count: int, n_max: int, seed: int,
                       workers: int = 1) -> MonteCarloEstimate:
    """Escape-time histogram of uniform samples under the open map.

    Samples are drawn in fixed chunks of 65536 from PCG64 substreams spawned
    off ``SeedSequence(seed)``, so results do not depend on ``workers``.
    """
    if sample_count <= 0:
        return MonteCarloEstimate(0, np.zeros(0, dtype=np.int64))
    n_chunks = -(-sample_count // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(CHUNK, sample_count - k * CHUNK) for k in range(n_chunks)]
    jobs = list(zip(children, sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda js: _chunk_counts(model, js[0], js[1], n_max), jobs))
    else:
        parts = [_chunk_counts(model, s, k, n_max) for s, k in jobs]
    counts = np.zeros(n_max + 1, dtype=np.int64)
    for p in parts:
        counts += p
    return MonteCarloEstimate(sample_count, counts)


# -- delayed first return ---------------------------------------------------

def _in_set(model: OpenMapModel, vertices: frozenset[int], x):
    return np.isin(model.partition.locate(x), list(vertices))


def _first_return(model: OpenMapModel, vertices: frozenset[int], x: np.ndarray):
    """Word length ``|gamma(x)|`` and ``f_H^{|gamma(x)|}(x)`` for points outside the hole."""
    y = np.array(x, dtype=float)
    t = np.zeros(y.shape, dtype=np.int64)
    pending = np.ones(y.shape, dtype=bool)
    for k in range(1, model.m + 2):
        y[pending] = model.step_open(y[pending])
        back = pending & _in_set(model, vertices, y)
        t[back] = k
        pending &= ~back
        if not pending.any():
            return t, y
    raise RuntimeError("orbit did not return to the structural set; complement has a cycle")


@dataclass
class DelayedReturnState:
    point: float
    word_length: int = 0
    position: int = 0


def delayed_orbit(model: OpenMapModel, S: Iterable[int] | StructuralSet, x0: float,
                  steps: int) -> list[float]:
    """Orbit ``x_0, ..., x_steps`` of the delayed first-return map.

    A point outside the hole is held for ``|gamma(x)| - 1`` extra steps and
    then jumps to ``f_H^{|gamma(x)|}(x)``; hole points are fixed.
    """
    verts = S.vertices if isinstance(S, StructuralSet) else frozenset(S)
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    state = DelayedReturnState(float(x0))
    orbit = [state.point]
    for _ in range(steps):
        if not bool(model.in_hole(state.point)):
            if state.word_length == 0:
                t, _ = _first_return(model, verts, np.array([state.point]))
                state.word_length, state.position = int(t[0]), 0
            state.position += 1
            if state.position == state.word_length:
                y = np.array([state.point])
                for _ in range(state.word_length):
                    y = model.step_open(y)
                state = DelayedReturnState(float(y[0]))
        orbit.append(state.point)
    return orbit


def delayed_escape_times(model: OpenMapModel, S: Iterable[int] | StructuralSet,
                         x: np.ndarray, n_max: int) -> np.ndarray:
    """Escape times under the delayed first-return map (vectorized), or -1."""
    verts = S.vertices if isinstance(S, StructuralSet) else frozenset(S)
    x = np.array(x, dtype=float)
    t_out = np.full(x.shape, -1, dtype=np.int64)
    clock = np.zeros(x.shape, dtype=np.int64)
    hit = model.in_hole(x)
    t_out[hit] = 0
    active = ~hit
    while active.any():
        t, y = _first_return(model, verts, x[active])
        idx = np.flatnonzero(active)
        clock[idx] += t
        x[idx] = y
        late = clock[idx] > n_max
        escaped = model.in_hole(y) & ~late
        t_out[idx[escaped]] = clock[idx[escaped]]
        active[idx[escaped | late]] = False
    return t_out


@dataclass
class Lemma1Report:
    structural_set: frozenset[int]
    samples: int
    n_max: int
    mismatches: list[tuple[float, int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def log_lines(self) -> list[str]:
        s = ",".join(f"v{v}" for v in sorted(self.structural_set))
        return [f"{s},{x!r},{a},{b}" for x, a, b in self.mismatches]


def lemma1_check(model: OpenMapModel, S: Iterable[int] | StructuralSet, sample_count: int,
                 n_max: int, seed: int) -> Lemma1Report:
    """Compare escape times of the open map and its delayed first-return map."""
    verts = S.vertices if isinstance(S, StructuralSet) else frozenset(S)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    x = rng.random(sample_count)
    direct = escape_times(model, x, n_max)
    delayed = delayed_escape_times(model, verts, x, n_max)
    bad = np.flatnonzero(direct != delayed)
    report = Lemma1Report(frozenset(verts), sample_count, n_max)
    report.mismatches = [(float(x[k]), int(direct[k]), int(delayed[k])) for k in bad]
    return report
