"""Numeric kernel: matrix power sums, eigen-expansions, derivative bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Cell, OpenMapModel

RHO_MARGIN = 1e-9
UNIT_EIGENVALUE_TOL = 1e-9
DEFECTIVE_COND = 1e8
EIG_RESIDUAL_TOL = 1e-9
GRID_POINTS = 4096
ENVELOPE_SLACK = 1e-9


class SpectralRadiusTooLarge(ArithmeticError):
    pass


class ExpansionUnavailable(ArithmeticError):
    pass


class EnvelopeViolation(ArithmeticError):
    pass


def _check_dims(A, e):
    A = np.asarray(A, dtype=float)
    e = np.asarray(e, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if e.shape != (A.shape[0],):
        raise ValueError(f"vector of shape {e.shape} does not match {A.shape}")
    return A, e


def matrix_power_apply(A, e, n: int) -> np.ndarray:
    """Rows ``A^0 e, A^1 e, ..., A^n e`` by repeated application."""
    A, e = _check_dims(A, e)
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.empty((n + 1, e.size))
    out[0] = e
    for k in range(1, n + 1):
        out[k] = A @ out[k - 1]
    return out


def neumann_partial(A, e, n: int) -> np.ndarray:
    """``sum_{i=0}^n A^i e``, accumulated term by term."""
    terms = matrix_power_apply(A, e, n)
    total = terms[0].copy()
    for k in range(1, n + 1):
        total = total + terms[k]
    return total


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def nilpotency_index(A) -> int | None:
    """Smallest ``p`` with ``A^p = 0`` for a nonnegative matrix, else None.

    A nonnegative matrix is nilpotent exactly when the digraph of its
    positive entries is acyclic; ``p`` is then one more than the longest path.
    """
    A = np.asarray(A)
    m = A.shape[0]
    succ = [np.flatnonzero(A[i] > 0) for i in range(m)]
    depth = [-1] * m  # longest path (in edges) starting at i
    state = [0] * m
    for root in range(m):
        if state[root]:
            continue
        stack = [(root, 0)]
        state[root] = 1
        while stack:
            v, k = stack[-1]
            if k < len(succ[v]):
                stack[-1] = (v, k + 1)
                w = succ[v][k]
                if state[w] == 1:
                    return None
                if state[w] == 0:
                    state[w] = 1
                    stack.append((w, 0))
            else:
                depth[v] = max((depth[w] + 1 for w in succ[v]), default=0)
                state[v] = 2
                stack.pop()
    if not any(len(s) for s in succ):
        return 1 if m else 0
    return max(depth) + 1


@dataclass
class ClosedForm:
    partial: np.ndarray
    limit: np.ndarray
    rho: float


def closed_form_sum(A, e, n: int) -> ClosedForm:
    """``(I - A)^{-1}(I - A^{n+1}) e`` and its limit ``(I - A)^{-1} e``."""
    A, e = _check_dims(A, e)
    rho = spectral_radius(A)
    if rho >= 1.0 - RHO_MARGIN:
        raise SpectralRadiusTooLarge(f"spectral radius {rho:.6g} is not below 1")
    eye = np.eye(A.shape[0])
    tail = np.linalg.matrix_power(A, n + 1) @ e
    partial = np.linalg.solve(eye - A, e - tail)
    limit = np.linalg.solve(eye - A, e)
    return ClosedForm(partial, limit, rho)


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    nondefective: bool
    rho: float
    condition: float
    residual: float


def spectral(A) -> SpectralData:
    """Eigenpairs sorted by decreasing modulus, with a defectiveness verdict."""
    A = np.asarray(A, dtype=float)
    w, V = np.linalg.eig(A)
    order = sorted(range(len(w)), key=lambda k: (-round(abs(w[k]), 12), -w[k].real, -w[k].imag))
    w, V = w[order], V[:, order]
    cond = float(np.linalg.cond(V)) if V.size else 1.0
    if not np.isfinite(cond):
        cond = math.inf
    res = 0.0
    for k in range(len(w)):
        v = V[:, k]
        res = max(res, float(np.linalg.norm(A @ v - w[k] * v) / np.linalg.norm(v)))
    rho = float(np.max(np.abs(w))) if len(w) else 0.0
    # LAPACK can return inaccurate eigenvectors for entries near the underflow
    # range; an expansion built on them would be silently wrong
    scale = max(1.0, float(np.linalg.norm(A, 2))) if A.size else 1.0
    usable = cond <= DEFECTIVE_COND and res <= EIG_RESIDUAL_TOL * scale
    return SpectralData(w, V, usable, rho, cond, res)


@dataclass
class ExpansionCoefficients:
    """``e = sum c_i v_i`` with ``s_i = w . v_i`` for the weight row ``w``."""

    eigenvalues: np.ndarray
    c: np.ndarray
    s: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.c * self.s

    def _real(self, z: complex, scale: float) -> float:
        if abs(z.imag) > 1e-9 * max(1.0, scale):
            raise ArithmeticError(f"non-negligible imaginary part {z.imag:.3g}")
        return float(z.real)

    def escape(self, n: int) -> float:
        terms = self.weights * self.eigenvalues.astype(complex) ** n
        return self._real(complex(terms.sum()), float(np.abs(terms).sum()))

    def cumulative(self, n: int) -> float:
        lam = self.eigenvalues.astype(complex)
        terms = self.weights * (1 - lam ** (n + 1)) / (1 - lam)
        return self._real(complex(terms.sum()), float(np.abs(terms).sum()))

    def residual(self, V: np.ndarray, e: np.ndarray) -> float:
        return float(np.linalg.norm(V @ self.c - e))


def expand(e, sd: SpectralData, weights=None) -> ExpansionCoefficients:
    e = np.asarray(e, dtype=float)
    if not sd.nondefective:
        raise ExpansionUnavailable(f"matrix is defective or its eigenpairs are inaccurate "
                                   f"(eigenvector condition {sd.condition:.3g}, residual {sd.residual:.3g})")
    if np.any(np.abs(sd.eigenvalues - 1.0) <= UNIT_EIGENVALUE_TOL):
        raise ExpansionUnavailable("matrix has an eigenvalue equal to 1")
    w = np.ones(e.size) if weights is None else np.asarray(weights, dtype=float)
    c = np.linalg.solve(sd.eigenvectors, e.astype(complex))
    s = w @ sd.eigenvectors
    return ExpansionCoefficients(sd.eigenvalues, c, s)


# -- derivative extremization ----------------------------------------------

def _itinerary(model: OpenMapModel, cell: Cell, depth: int) -> tuple[int, ...]:
    x = 0.5 * (cell.lo + cell.hi)
    word = []
    for _ in range(depth):
        i = int(model.partition.locate(x))
        word.append(i)
        x = float(model.branches[i - 1](x))
    return tuple(word)


def _log_abs_derivative(model: OpenMapModel, word: Sequence[int], x):
    y = np.asarray(x, dtype=float)
    total = np.zeros_like(y)
    for i in word:
        br = model.branches[i - 1]
        total = total + np.log(np.abs(br.derivative(y)))
        y = br(y)
    return total


def _golden(fun, a: float, b: float, maximize: bool, tol: float = 1e-13) -> float:
    sign = -1.0 if maximize else 1.0
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = sign * fun(c), sign * fun(d)
    while b - a > tol * max(1.0, abs(a)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = sign * fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = sign * fun(d)
    return 0.5 * (a + b)


def extremize_inverse_derivative(model: OpenMapModel, cell: Cell, depth: int,
                                 word: Sequence[int] | None = None) -> tuple[float, float]:
    """(inf, sup) of ``|(f^depth)'(x)|^{-1}`` for ``x`` in ``cell``.

    ``word`` lists the cells visited by the first ``depth`` iterates; when
    omitted it is read off the orbit of the cell midpoint.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    word = tuple(word[:depth]) if word is not None else _itinerary(model, cell, depth)
    lo, hi = cell.lo, cell.hi
    branches = [model.branches[i - 1] for i in word]

    if all(b.is_affine for b in branches):
        prod = math.prod(abs(b.slope) for b in branches)
        return 1.0 / prod, 1.0 / prod
    if depth == 1:
        dmin, dmax = branches[0].abs_derivative_range(lo, hi)
        return 1.0 / dmax, 1.0 / dmin

    # per-step bounds over the exact image intervals give a sound envelope
    env_lo, env_hi = 0.0, 0.0
    ya, yb = lo, hi
    q = model.partition.cut_points
    for i, br in zip(word, branches):
        a, b = sorted((ya, yb))
        a, b = max(a, q[i - 1]), min(b, q[i])
        dmin, dmax = br.abs_derivative_range(a, b)
        env_lo += math.log(dmin)
        env_hi += math.log(dmax)
        ya, yb = float(br(ya)), float(br(yb))

    fun = lambda x: float(_log_abs_derivative(model, word, x))  # noqa: E731
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = _log_abs_derivative(model, word, grid)
    found = []
    for maximize in (False, True):
        k = int(np.argmax(vals) if maximize else np.argmin(vals))
        best = float(vals[k])
        if 0 < k < GRID_POINTS - 1:
            x = _golden(fun, grid[k - 1], grid[k + 1], maximize)
            v = fun(x)
            best = max(best, v) if maximize else min(best, v)
        found.append(best)
    log_min, log_max = found
    # polynomials with large coefficients lose digits to cancellation, so the
    # check only flags gross escapes; those indicate a modeling bug
    slack = ENVELOPE_SLACK * max(1.0, abs(env_lo), abs(env_hi))
    if log_min < env_lo - slack or log_max > env_hi + slack:
        raise EnvelopeViolation(
            f"word {word}: log|(f^t)'| range [{log_min:.6g}, {log_max:.6g}] "
            f"escapes envelope [{env_lo:.6g}, {env_hi:.6g}]")
    log_min, log_max = max(log_min, env_lo), min(log_max, env_hi)
    return math.exp(-log_max), math.exp(-log_min)
