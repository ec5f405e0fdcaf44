"""Piecewise Markov interval maps with a hole.

Cells are indexed from 1, matching the usual ``xi_1, ..., xi_m`` labelling;
numpy arrays built from a model use index ``i - 1`` for cell ``i``.
Lebesgue measure on [0, 1] is the reference measure throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .polyroots import bracketed_root, real_roots

MARKOV_TOL = 1e-9
DERIVATIVE_FLOOR = 1e-9


class ModelError(ValueError):
    """Base class for rejected models."""


class ModelFormatError(ModelError):
    """Malformed model description; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class CellError(ModelError):
    cause = "CellError"

    def __init__(self, cell: int, detail: str = ""):
        self.cell = cell
        self.detail = detail
        msg = f"{self.cause}({cell})"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class EmptyCell(CellError):
    cause = "EmptyCell"


class NonMarkovImage(CellError):
    cause = "NonMarkovImage"


class VanishingDerivative(CellError):
    cause = "VanishingDerivative"


class NonMonotoneBranch(CellError):
    cause = "NonMonotoneBranch"


@dataclass(frozen=True)
class Cell:
    """Half-open interval ``(lo, hi]``."""

    lo: float
    hi: float
    label: str = ""

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x: float) -> bool:
        return self.lo < x <= self.hi

    def contains_cell(self, other: "Cell", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol


@dataclass(frozen=True)
class Partition:
    cut_points: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.cut_points)
        object.__setattr__(self, "cut_points", q)
        if len(q) < 3:
            raise ModelFormatError("cut_points", "need at least two cells")
        if q[0] != 0.0 or q[-1] != 1.0:
            raise ModelFormatError("cut_points", "must start at 0 and end at 1")
        for i in range(1, len(q)):
            if not q[i] > q[i - 1]:
                raise EmptyCell(i, f"cut points {q[i - 1]!r} >= {q[i]!r}")

    @property
    def m(self) -> int:
        return len(self.cut_points) - 1

    def cell(self, i: int) -> Cell:
        return Cell(self.cut_points[i - 1], self.cut_points[i], f"xi_{i}")

    def measure(self, i: int) -> float:
        return self.cut_points[i] - self.cut_points[i - 1]

    @property
    def measures(self) -> np.ndarray:
        return np.diff(np.asarray(self.cut_points))

    def locate(self, x):
        """Cell index of ``x`` under the ``(q_{i-1}, q_i]`` convention; 0 maps to cell 1."""
        idx = np.searchsorted(np.asarray(self.cut_points), x, side="left")
        return np.maximum(idx, 1)


@dataclass(frozen=True)
class Branch:
    """Restriction of the map to one cell: affine or polynomial in ``x``."""

    kind: str
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("affine", "poly"):
            raise ModelFormatError("kind", f"unknown branch kind {self.kind!r}")
        c = [float(v) for v in self.coeffs]
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def affine(cls, slope: float, intercept: float) -> "Branch":
        return cls("affine", (intercept, slope))

    @classmethod
    def poly(cls, coeffs: Sequence[float]) -> "Branch":
        return cls("poly", tuple(coeffs))

    @property
    def is_affine(self) -> bool:
        return len(self.coeffs) <= 2

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coeffs)

    @property
    def slope(self) -> float:
        return self.coeffs[1] if len(self.coeffs) > 1 else 0.0

    def __call__(self, x):
        if self.is_affine:
            return self.coeffs[0] + self.slope * np.asarray(x, dtype=float)
        return self.polynomial(x)

    def derivative(self, x):
        if self.is_affine:
            return np.full_like(np.asarray(x, dtype=float), self.slope)
        return self.polynomial.deriv()(x)

    def abs_derivative_range(self, lo: float, hi: float) -> tuple[float, float]:
        """(inf, sup) of ``|f'|`` over ``[lo, hi]``."""
        if self.is_affine:
            s = abs(self.slope)
            return s, s
        dp = self.polynomial.deriv()
        pts = [lo, hi, *real_roots(dp.deriv(), lo, hi), *real_roots(dp, lo, hi)]
        vals = np.abs(dp(np.array(pts)))
        return float(vals.min()), float(vals.max())

    def image_range(self, lo: float, hi: float) -> tuple[float, float]:
        """Closure of the image of ``[lo, hi]``."""
        pts = [lo, hi]
        if not self.is_affine:
            pts += real_roots(self.polynomial.deriv(), lo, hi)
        vals = self(np.array(pts))
        return float(vals.min()), float(vals.max())

    def inverse(self, y: float, lo: float, hi: float) -> float:
        """The ``x`` in ``[lo, hi]`` with ``f(x) = y``; branch must be monotone there."""
        if self.is_affine:
            x = (y - self.coeffs[0]) / self.slope
            return min(max(x, lo), hi)
        p = self.polynomial
        flo, fhi = float(p(lo)), float(p(hi))
        if y == flo:
            return lo
        if y == fhi:
            return hi
        if (flo - y) * (fhi - y) > 0:
            return lo if abs(flo - y) < abs(fhi - y) else hi
        return bracketed_root(p - y, lo, hi, p.deriv())

    def to_json(self) -> dict:
        if self.kind == "affine":
            return {"kind": "affine", "slope": self.slope, "intercept": self.coeffs[0]}
        return {"kind": "poly", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class OpenMapModel:
    partition: Partition
    branches: tuple[Branch, ...]
    hole: frozenset[int]
    images: tuple[tuple[float, float], ...]
    name: str = ""

    def __post_init__(self):
        m = self.partition.m
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "hole", frozenset(int(i) for i in self.hole))
        object.__setattr__(self, "images",
                           tuple((float(a), float(b)) for a, b in self.images))
        if len(self.branches) != m:
            raise ModelFormatError("branches", f"expected {m} branches, got {len(self.branches)}")
        if len(self.images) != m:
            raise ModelFormatError("images", f"expected {m} images, got {len(self.images)}")
        bad = [i for i in self.hole if not 1 <= i <= m]
        if bad:
            raise ModelFormatError("hole", f"indices out of range 1..{m}: {sorted(bad)}")

    @property
    def m(self) -> int:
        return self.partition.m

    def cell(self, i: int) -> Cell:
        return self.partition.cell(i)

    @property
    def hole_measure(self) -> float:
        return float(sum(self.partition.measure(i) for i in self.hole))

    def hole_vector(self) -> np.ndarray:
        e = np.zeros(self.m)
        for i in self.hole:
            e[i - 1] = self.partition.measure(i)
        return e

    def with_hole(self, hole: Iterable[int]) -> "OpenMapModel":
        return OpenMapModel(self.partition, self.branches, frozenset(hole),
                            self.images, self.name)

    @property
    def is_affine(self) -> bool:
        return all(self.branches[i - 1].is_affine
                   for i in range(1, self.m + 1) if i not in self.hole)

    def apply(self, x):
        """The closed map ``f`` (vectorized)."""
        x = np.asarray(x, dtype=float)
        idx = self.partition.locate(x)
        out = np.empty_like(x)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.branches[i - 1](x[mask])
        return out

    def in_hole(self, x):
        idx = self.partition.locate(x)
        return np.isin(idx, list(self.hole))

    def step_open(self, x):
        """One step of the open map: hole points are fixed."""
        x = np.asarray(x, dtype=float)
        idx = self.partition.locate(x)
        out = x.copy()
        for i in np.unique(idx):
            if i in self.hole:
                continue
            mask = idx == i
            out[mask] = self.branches[i - 1](x[mask])
        return out

    def to_json(self) -> dict:
        return {
            "cut_points": list(self.partition.cut_points),
            "branches": [b.to_json() for b in self.branches],
            "hole": sorted(self.hole),
            "images": [list(im) for im in self.images],
        }


# -- serialization ---------------------------------------------------------

def _parse_branch(k: int, obj) -> Branch:
    where = f"branches[{k}]"
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ModelFormatError(where, "expected an object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "affine":
            return Branch.affine(float(obj["slope"]), float(obj["intercept"]))
        if kind == "poly":
            coeffs = [float(c) for c in obj["coeffs"]]
            if not coeffs:
                raise ModelFormatError(f"{where}.coeffs", "empty coefficient list")
            return Branch.poly(coeffs)
    except KeyError as exc:
        raise ModelFormatError(f"{where}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelFormatError(where, f"non-numeric value ({exc})") from None
    raise ModelFormatError(f"{where}.kind", f"unknown branch kind {kind!r}")


def model_from_dict(obj: dict, name: str = "") -> OpenMapModel:
    if not isinstance(obj, dict):
        raise ModelFormatError("<root>", "expected a JSON object")
    for key in ("cut_points", "branches", "hole", "images"):
        if key not in obj:
            raise ModelFormatError(key, "missing")
    try:
        cuts = [float(v) for v in obj["cut_points"]]
    except (TypeError, ValueError):
        raise ModelFormatError("cut_points", "expected a list of numbers") from None
    if not isinstance(obj["branches"], list):
        raise ModelFormatError("branches", "expected a list")
    branches = [_parse_branch(k, b) for k, b in enumerate(obj["branches"])]
    try:
        hole = [int(i) for i in obj["hole"]]
    except (TypeError, ValueError):
        raise ModelFormatError("hole", "expected a list of 1-based integers") from None
    try:
        images = [(float(a), float(b)) for a, b in obj["images"]]
    except (TypeError, ValueError):
        raise ModelFormatError("images", "expected a list of [lo, hi] pairs") from None
    return OpenMapModel(Partition(tuple(cuts)), tuple(branches), frozenset(hole),
                        tuple(images), name)


def load_model(path, validate_model: bool = True) -> OpenMapModel:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError("<file>", f"invalid JSON ({exc})") from None
    model = model_from_dict(obj, name=path.stem)
    if validate_model:
        validate(model).raise_if_rejected()
    return model


# -- validation ------------------------------------------------------------

@dataclass
class CellReport:
    index: int
    in_hole: bool
    image: tuple[float, float]
    declared: tuple[float, float]
    residual: float
    deriv_inf: float
    deriv_sup: float
    monotone: bool
    affine: bool


@dataclass
class ValidationReport:
    cells: list[CellReport]
    class_tag: str
    errors: list[CellError] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.errors

    def raise_if_rejected(self) -> None:
        if self.errors:
            raise self.errors[0]

    def lines(self) -> list[str]:
        out = []
        for c in self.cells:
            tag = "hole" if c.in_hole else ("affine" if c.affine else "poly")
            out.append(
                f"cell {c.index} [{tag}] image=[{c.image[0]:.6g}, {c.image[1]:.6g}] "
                f"declared=[{c.declared[0]:.6g}, {c.declared[1]:.6g}] "
                f"residual={c.residual:.3g} |f'| in [{c.deriv_inf:.6g}, {c.deriv_sup:.6g}] "
                f"monotone={'yes' if c.monotone else 'no'}")
        verdict = "accepted" if self.accepted else "rejected: " + "; ".join(map(str, self.errors))
        out.append(f"class {self.class_tag}; {verdict}")
        return out


def _is_cut_point(q: np.ndarray, v: float) -> int | None:
    k = int(np.argmin(np.abs(q - v)))
    return k if abs(q[k] - v) <= MARKOV_TOL else None


def validate(model: OpenMapModel) -> ValidationReport:
    q = np.asarray(model.partition.cut_points)
    cells: list[CellReport] = []
    errors: list[CellError] = []
    for i in range(1, model.m + 1):
        br = model.branches[i - 1]
        lo, hi = q[i - 1], q[i]
        in_hole = i in model.hole
        image = br.image_range(lo, hi)
        declared = model.images[i - 1]
        residual = max(abs(image[0] - declared[0]), abs(image[1] - declared[1]))
        dinf, dsup = br.abs_derivative_range(lo, hi)
        if br.is_affine:
            monotone = br.slope != 0.0
        else:
            dp = br.polynomial.deriv()
            inner = [r for r in real_roots(dp, lo, hi) if lo < r < hi]
            knots = [lo, *inner, hi]
            mids = [0.5 * (a + b) for a, b in zip(knots[:-1], knots[1:])]
            signs = {np.sign(dp(x)) for x in mids} - {0.0}
            monotone = len(signs) <= 1
        cells.append(CellReport(i, in_hole, image, declared, residual,
                                dinf, dsup, monotone, br.is_affine))

        j0, j1 = _is_cut_point(q, declared[0]), _is_cut_point(q, declared[1])
        if residual > MARKOV_TOL or j0 is None or j1 is None or j1 <= j0:
            errors.append(NonMarkovImage(i, f"image [{image[0]:.12g}, {image[1]:.12g}] vs "
                                            f"declared [{declared[0]:.12g}, {declared[1]:.12g}], "
                                            f"residual {residual:.3g}"))
            continue
        if in_hole:
            continue
        if not monotone:
            errors.append(NonMonotoneBranch(i, "derivative changes sign"))
        elif not dinf >= DERIVATIVE_FLOOR or not np.isfinite(dsup):
            errors.append(VanishingDerivative(i, f"inf |f'| = {dinf:.3g}"))
    class_tag = "L" if model.is_affine else "N"
    return ValidationReport(cells, class_tag, errors)


# -- dynamics --------------------------------------------------------------

def evaluate_open(model: OpenMapModel, x, n: int):
    """``f_H^n(x)``; scalar or array input."""
    if n < 0:
        raise ValueError("n must be non-negative")
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("points must lie in [0, 1]")
    for _ in range(n):
        arr = model.step_open(arr)
    return float(arr) if np.ndim(arr) == 0 else arr


def preimage_in_cell(model: OpenMapModel, i: int, lo: float, hi: float) -> Cell | None:
    """``xi_i`` intersected with the preimage of ``(lo, hi]`` under branch ``i``."""
    q = model.partition.cut_points
    clo, chi = q[i - 1], q[i]
    br = model.branches[i - 1]
    ya, yb = float(br(clo)), float(br(chi))
    ilo, ihi = min(ya, yb), max(ya, yb)
    a, b = max(lo, ilo), min(hi, ihi)
    if b - a <= 0.0:
        return None
    xa, xb = br.inverse(a, clo, chi), br.inverse(b, clo, chi)
    xlo, xhi = min(xa, xb), max(xa, xb)
    if xhi - xlo <= 0.0:
        return None
    return Cell(xlo, xhi)


def cell_intersection(model: OpenMapModel, i: int, j: int) -> Cell | None:
    """``xi_ij``: points of cell ``i`` mapped into cell ``j``; None when empty."""
    target = model.cell(j)
    c = preimage_in_cell(model, i, target.lo, target.hi)
    if c is None or c.measure <= MARKOV_TOL * 1e-3:
        return None
    return Cell(c.lo, c.hi, f"xi_{i}{j}" if model.m < 10 else f"xi_{i},{j}")


def word_label(word: Sequence[int]) -> str:
    if all(w < 10 for w in word):
        return "".join(str(w) for w in word)
    return ",".join(str(w) for w in word)


def path_cell(model: OpenMapModel, word: Sequence[int]) -> Cell | None:
    """Cylinder of points whose first ``len(word)`` cells follow ``word``."""
    word = tuple(word)
    if len(word) < 2:
        raise ValueError("word must have at least two symbols")
    target = model.cell(word[-1])
    lo, hi = target.lo, target.hi
    for i in reversed(word[:-1]):
        c = preimage_in_cell(model, i, lo, hi)
        if c is None or c.measure <= 0.0:
            return None
        lo, hi = c.lo, c.hi
    return Cell(lo, hi, "xi_" + word_label(word))
