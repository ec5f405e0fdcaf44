"""Escape series from weighted transition matrices.

For piecewise-affine maps a single matrix gives the escaping measure
exactly; for nonlinear branches the inf/sup matrices bracket it.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from . import kernel
from .model import OpenMapModel, cell_intersection

CSV_HEADER = ["n", "X_lower", "X_upper", "Y_lower", "Y_upper", "P_lower", "P_upper", "exact"]


@dataclass(frozen=True)
class BoundMatrixPair:
    lower: np.ndarray
    upper: np.ndarray
    hole_vector: np.ndarray
    weights: np.ndarray
    exact: bool

    @property
    def m(self) -> int:
        return self.lower.shape[0]


def build_matrices(model: OpenMapModel) -> BoundMatrixPair:
    """Lower/upper weighted transition matrices of the open map."""
    m = model.m
    lower = np.zeros((m, m))
    upper = np.zeros((m, m))
    for i in range(1, m + 1):
        if i in model.hole:
            continue
        for j in range(1, m + 1):
            c = cell_intersection(model, i, j)
            if c is None:
                continue
            lo, hi = kernel.extremize_inverse_derivative(model, c, 1, word=(i,))
            lower[i - 1, j - 1] = lo
            upper[i - 1, j - 1] = hi
    return BoundMatrixPair(lower, upper, model.hole_vector(), np.ones(m), model.is_affine)


def fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class EscapeSeries:
    """Per-step bounds on the measure escaping at step ``n`` (X) and by step ``n`` (Y).

    Raw values are kept; ``clamped`` views restrict them to [0, 1].
    """

    X_lower: np.ndarray
    X_upper: np.ndarray
    Y_lower: np.ndarray
    Y_upper: np.ndarray
    exact: bool = False

    @property
    def n_max(self) -> int:
        return len(self.X_lower) - 1

    @classmethod
    def from_escape(cls, X_lower, X_upper, exact=False) -> "EscapeSeries":
        X_lower = np.asarray(X_lower, dtype=float)
        X_upper = np.asarray(X_upper, dtype=float)
        return cls(X_lower, X_upper, np.cumsum(X_lower), np.cumsum(X_upper), exact)

    def clamped(self) -> dict[str, np.ndarray]:
        c = {k: np.clip(getattr(self, k), 0.0, 1.0)
             for k in ("X_lower", "X_upper", "Y_lower", "Y_upper")}
        c["P_lower"] = 1.0 - c["Y_upper"]
        c["P_upper"] = 1.0 - c["Y_lower"]
        return c

    def raw(self) -> dict[str, np.ndarray]:
        r = {k: getattr(self, k) for k in ("X_lower", "X_upper", "Y_lower", "Y_upper")}
        r["P_lower"] = 1.0 - self.Y_upper
        r["P_upper"] = 1.0 - self.Y_lower
        return r

    def columns(self, clamp: bool = True) -> dict[str, np.ndarray]:
        return self.clamped() if clamp else self.raw()

    def to_csv(self, clamp: bool = True, extra: dict[str, np.ndarray] | None = None) -> str:
        cols = self.columns(clamp)
        extra = extra or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER + list(extra))
        for n in range(self.n_max + 1):
            row = [str(n)] + [fmt(cols[k][n]) for k in CSV_HEADER[1:-1]]
            row.append("1" if self.exact else "0")
            row += [fmt(v[n]) for v in extra.values()]
            w.writerow(row)
        return buf.getvalue()


def matrix_series(lower, upper, e, weights, n_max: int, exact: bool = False) -> EscapeSeries:
    """X-side ``w A^n e`` for both matrices; Y-side as running sums."""
    xl = weights @ kernel.matrix_power_apply(lower, e, n_max).T
    if exact and np.array_equal(lower, upper):
        xu = xl.copy()
    else:
        xu = weights @ kernel.matrix_power_apply(upper, e, n_max).T
    return EscapeSeries.from_escape(xl, xu, exact)


def escape_series(pair: BoundMatrixPair, n_max: int) -> EscapeSeries:
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    return matrix_series(pair.lower, pair.upper, pair.hole_vector, pair.weights,
                         n_max, pair.exact)


@dataclass
class EigenExpansion:
    lower: kernel.ExpansionCoefficients
    upper: kernel.ExpansionCoefficients

    def terms(self, side: str) -> list[tuple[complex, complex]]:
        """``(c_i s_i, lambda_i)`` pairs for one side."""
        ex = getattr(self, side)
        return list(zip(ex.weights, ex.eigenvalues))


def eigen_escape(pair: BoundMatrixPair, n_max: int,
                 check_tol: float = 1e-9) -> tuple[EscapeSeries, EigenExpansion]:
    """Escape series evaluated from the eigen-expansion of each matrix.

    Raises ``ExpansionUnavailable`` for defective matrices or a unit
    eigenvalue. The result is cross-checked against ``escape_series``.
    """
    sides = {}
    for side in ("lower", "upper"):
        A = getattr(pair, side)
        sd = kernel.spectral(A)
        sides[side] = kernel.expand(pair.hole_vector, sd, pair.weights)
    expansion = EigenExpansion(sides["lower"], sides["upper"])
    X = {s: np.array([sides[s].escape(n) for n in range(n_max + 1)]) for s in sides}
    Y = {s: np.array([sides[s].cumulative(n) for n in range(n_max + 1)]) for s in sides}
    series = EscapeSeries(X["lower"], X["upper"], Y["lower"], Y["upper"], pair.exact)

    reference = escape_series(pair, n_max)
    for name in ("X_lower", "X_upper", "Y_lower", "Y_upper"):
        a, b = getattr(series, name), getattr(reference, name)
        err = np.abs(a - b) / np.maximum(1.0, np.abs(b))
        if np.any(err > check_tol):
            raise ArithmeticError(f"eigen-expansion disagrees with matrix powers in {name} "
                                  f"(max relative error {err.max():.3g})")
    return series, expansion


class SurvivalClass(enum.Enum):
    FINITE_TIME_FULL_ESCAPE = "FiniteTimeFullEscape"
    ASYMPTOTIC_FULL_ESCAPE = "AsymptoticFullEscape"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class Classification:
    kind: SurvivalClass
    rho: float
    nilpotency_index: int | None = None
    witness: int | None = None
    limit: float | None = None

    def describe(self) -> str:
        parts = [self.kind.value, f"rho={self.rho:.6g}"]
        if self.witness is not None:
            parts.append(f"Y^{self.witness}=1")
        if self.limit is not None:
            parts.append(f"lim Y^n={self.limit:.12g}")
        return ", ".join(parts)


def classify_matrix(A, e, weights=None) -> Classification:
    A = np.asarray(A, dtype=float)
    w = np.ones(A.shape[0]) if weights is None else np.asarray(weights)
    p = kernel.nilpotency_index(A)
    if p is not None:
        # A^p = 0, so all escape happens by step p - 1
        terms = kernel.matrix_power_apply(A, e, max(p - 1, 0))
        y = np.cumsum(terms @ w)
        total = y[-1]
        witness = int(np.flatnonzero(y >= total - 1e-15 * max(1.0, total))[0])
        return Classification(SurvivalClass.FINITE_TIME_FULL_ESCAPE, 0.0, p, witness, float(total))
    rho = kernel.spectral_radius(A)
    if rho < 1.0 - kernel.RHO_MARGIN:
        limit = float(w @ kernel.closed_form_sum(A, e, 0).limit)
        return Classification(SurvivalClass.ASYMPTOTIC_FULL_ESCAPE, rho, limit=limit)
    return Classification(SurvivalClass.INCONCLUSIVE, rho)


def classify(pair: BoundMatrixPair) -> dict[str, Classification]:
    """Long-run survival regime implied by each bound matrix."""
    return {side: classify_matrix(getattr(pair, side), pair.hole_vector, pair.weights)
            for side in ("lower", "upper")}
