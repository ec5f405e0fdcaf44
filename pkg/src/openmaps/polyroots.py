"""Real root isolation for univariate polynomials on a closed interval.

Roots are isolated recursively: the critical points of ``p`` (roots of
``p'``) split the interval into pieces on which ``p`` is monotone, and each
piece with a sign change holds exactly one root, found by safeguarded
Newton iteration inside the bracket.
"""

from __future__ import annotations

import math

from numpy.polynomial import Polynomial

ROOT_TOL = 1e-13


def _trim(p: Polynomial) -> Polynomial:
    coef = list(p.coef)
    while len(coef) > 1 and coef[-1] == 0.0:
        coef.pop()
    return Polynomial(coef)


def bracketed_root(p, a: float, b: float, dp=None, tol: float = ROOT_TOL,
                   max_iter: int = 200) -> float:
    """Root of ``p`` in ``[a, b]`` given ``p(a)`` and ``p(b)`` of opposite sign.

    Bisection keeps the bracket; Newton steps are taken whenever they land
    inside it, so convergence is quadratic near simple roots and never worse
    than bisection.
    """
    if dp is None:
        dp = p.deriv()
    fa, fb = float(p(a)), float(p(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise ValueError(f"no sign change on [{a}, {b}]")
    lo, hi = (a, b) if fa < 0 else (b, a)
    x = 0.5 * (a + b)
    for _ in range(max_iter):
        fx = float(p(x))
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = float(dp(x))
        step_ok = False
        if d != 0.0:
            xn = x - fx / d
            if min(lo, hi) < xn < max(lo, hi):
                step_ok = True
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 0.25 * tol or abs(hi - lo) <= tol:
            return xn
        x = xn
    return x


def real_roots(p: Polynomial, lo: float, hi: float,
               tol: float = ROOT_TOL) -> list[float]:
    """Sorted real roots of ``p`` in the closed interval ``[lo, hi]``.

    Roots of even multiplicity are reported when ``p`` vanishes at a
    critical point to within rounding of the coefficients.
    """
    p = _trim(p)
    deg = p.degree()
    if deg <= 0:
        return []
    if deg == 1:
        c0, c1 = p.coef
        r = -c0 / c1
        return [r] if lo <= r <= hi else []
    scale = max(abs(c) for c in p.coef) * max(1.0, abs(lo), abs(hi)) ** deg
    flat = 64 * math.ulp(1.0) * scale
    knots = [lo, *real_roots(p.deriv(), lo, hi, tol), hi]
    roots: list[float] = []
    dp = p.deriv()
    for a, b in zip(knots[:-1], knots[1:]):
        fa, fb = float(p(a)), float(p(b))
        if abs(fa) <= flat:
            roots.append(a)
        elif fa * fb < 0 and abs(fb) > flat:
            roots.append(bracketed_root(p, a, b, dp, tol))
    if abs(float(p(hi))) <= flat:
        roots.append(hi)
    out: list[float] = []
    for r in sorted(roots):
        if not out or r - out[-1] > tol:
            out.append(r)
    return out
