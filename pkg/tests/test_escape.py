import csv
import io
import math

import numpy as np
import pytest

from openmaps.escape import (CSV_HEADER, BoundMatrixPair, EscapeSeries, SurvivalClass,
                             build_matrices, classify, classify_matrix, eigen_escape,
                             escape_series)
from openmaps.graph import build_graph
from openmaps.kernel import ExpansionUnavailable
from openmaps.oracle import exact_escape_measure

R5 = math.sqrt(5)
L1, L2 = (1 + R5) / 4, (1 - R5) / 4


def test_tent_matrix(tent):
    pair = build_matrices(tent)
    want = [[0, 0, 0, 0], [0, 0, .5, .5], [0, 0, .5, .5], [.5, .5, 0, 0]]
    np.testing.assert_array_equal(pair.lower, want)
    np.testing.assert_array_equal(pair.upper, want)
    np.testing.assert_array_equal(pair.hole_vector, [.25, 0, 0, 0])
    assert pair.exact


def test_cubic_matrices(cubic):
    pair = build_matrices(cubic)
    assert not pair.exact
    lo, hi = 2 / 11, 0.29
    np.testing.assert_allclose(pair.upper[1], [0, 0, 4, hi], atol=0.01)
    np.testing.assert_allclose(pair.upper[2], [0, 0, 4, hi], atol=0.01)
    np.testing.assert_allclose(pair.upper[3], [hi, 4, 0, 0], atol=0.01)
    np.testing.assert_allclose(pair.lower[1], [0, 0, hi, lo], atol=0.01)
    np.testing.assert_allclose(pair.lower[2], [0, 0, hi, lo], atol=0.01)
    np.testing.assert_allclose(pair.lower[3], [lo, hi, 0, 0], atol=0.01)


def test_matrix_invariants(tent, cubic, random_models):
    for model in (tent, cubic, *random_models):
        pair = build_matrices(model)
        assert np.all(0 <= pair.lower) and np.all(pair.lower <= pair.upper)
        edges = build_graph(model).edges
        for i in range(model.m):
            for j in range(model.m):
                assert (pair.lower[i, j] > 0) == ((i + 1, j + 1) in edges)
                assert (pair.upper[i, j] > 0) == ((i + 1, j + 1) in edges)
        for h in model.hole:
            assert not pair.upper[h - 1].any()


def test_tent_series_first_terms(tent):
    s = escape_series(build_matrices(tent), 3)
    np.testing.assert_array_equal(s.X_lower, [.25, .125, .125, .09375])
    np.testing.assert_array_equal(s.X_upper, s.X_lower)
    assert s.exact


def test_empty_hole_never_escapes(tent):
    s = escape_series(build_matrices(tent.with_hole(())), 10)
    c = s.clamped()
    assert not c["X_upper"].any() and not c["Y_upper"].any()
    np.testing.assert_array_equal(c["P_lower"], 1.0)


def test_cubic_zeroth_term_is_hole_measure(cubic):
    s = escape_series(build_matrices(cubic), 0)
    assert s.X_lower[0] == s.X_upper[0] == 0.25


def test_negative_horizon_rejected(tent):
    with pytest.raises(ValueError):
        escape_series(build_matrices(tent), -1)


def test_y_is_running_sum_of_x(cubic, random_models):
    for model in (cubic, *random_models):
        s = escape_series(build_matrices(model), 30)
        for lo_hi in ("lower", "upper"):
            X, Y = getattr(s, f"X_{lo_hi}"), getattr(s, f"Y_{lo_hi}")
            assert Y[0] == X[0]
            for n in range(1, len(X)):
                assert Y[n] == Y[n - 1] + X[n]
            assert np.all(np.diff(Y) >= 0)


def test_clamping_keeps_raw_values(cubic):
    s = escape_series(build_matrices(cubic), 20)
    assert s.Y_upper[-1] > 1
    c = s.clamped()
    assert c["Y_upper"].max() == 1.0
    assert c["P_lower"][-1] == 0.0
    raw = s.raw()
    assert raw["P_lower"][-1] < 0
    np.testing.assert_array_equal(c["P_upper"], 1 - np.clip(s.Y_lower, 0, 1))


def test_csv_schema(tent):
    text = escape_series(build_matrices(tent), 4).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 6
    assert rows[1] == ["0", "0.25", "0.25", "0.25", "0.25", "0.75", "0.75", "1"]
    extra = escape_series(build_matrices(tent), 1).to_csv(extra={"X_lower_S": np.array([.25, .125])})
    assert extra.splitlines()[0].endswith(",exact,X_lower_S")
    assert extra.splitlines()[2].endswith(",1,0.125")


def test_tent_expansion_coefficients(tent):
    series, ex = eigen_escape(build_matrices(tent), 100)
    terms = {round(lam.real, 9): c for c, lam in ex.terms("lower") if abs(lam) > 1e-12}
    assert terms[round(L1, 9)].real == pytest.approx((5 + R5) / 40, abs=1e-9)
    assert terms[round(L2, 9)].real == pytest.approx((5 - R5) / 40, abs=1e-9)
    for n in range(101):
        want = 1 - (0.5 + 1 / R5) * L1 ** (n + 1) - (0.5 - 1 / R5) * L2 ** (n + 1)
        assert series.Y_lower[n] == pytest.approx(want, abs=1e-9)


def test_eigen_escape_matches_matrix_powers(cubic, random_models):
    for model in (cubic, *random_models):
        pair = build_matrices(model)
        try:
            series, _ = eigen_escape(pair, 40)
        except ExpansionUnavailable:
            continue
        ref = escape_series(pair, 40)
        for name in ("X_lower", "X_upper", "Y_lower", "Y_upper"):
            a, b = getattr(series, name), getattr(ref, name)
            assert np.all(np.abs(a - b) <= 1e-9 * np.maximum(1, np.abs(b)))


def test_cubic_dominant_eigenvalues(cubic):
    _, ex = eigen_escape(build_matrices(cubic), 5)
    assert abs(ex.lower.eigenvalues[0]) == pytest.approx(0.41, abs=0.02)
    assert abs(ex.upper.eigenvalues[0]) == pytest.approx(4.27, abs=0.02)


def test_eigen_escape_refuses_unit_eigenvalue():
    pair = BoundMatrixPair(np.eye(2), np.eye(2), np.array([0.5, 0]), np.ones(2), True)
    with pytest.raises(ExpansionUnavailable):
        eigen_escape(pair, 3)


def test_classification(tent, cubic, shift):
    t = classify(build_matrices(tent))
    assert t["lower"].kind is SurvivalClass.ASYMPTOTIC_FULL_ESCAPE
    assert t["lower"].rho == pytest.approx(L1, abs=1e-12)
    assert t["lower"].limit == pytest.approx(1.0, abs=1e-10)
    c = classify(build_matrices(cubic))
    assert c["lower"].kind is SurvivalClass.ASYMPTOTIC_FULL_ESCAPE
    assert c["upper"].kind is SurvivalClass.INCONCLUSIVE
    s = classify(build_matrices(shift))["lower"]
    assert s.kind is SurvivalClass.FINITE_TIME_FULL_ESCAPE
    assert (s.witness, s.limit, s.nilpotency_index) == (1, 1.0, 2)
    assert "Y^1=1" in s.describe()


def test_finite_time_witness_bounded_by_m():
    chain = np.diag([1.0, 1.0, 1.0], k=-1)
    e = np.array([0.25, 0, 0, 0])
    cls = classify_matrix(chain, e)
    assert cls.kind is SurvivalClass.FINITE_TIME_FULL_ESCAPE
    assert cls.witness == 3 <= 4


def test_affine_measure_conservation(tent, random_affine_models):
    for model in (tent, *random_affine_models):
        A = build_matrices(model).lower
        mu = model.partition.measures
        for i in range(1, model.m + 1):
            if i not in model.hole:
                assert A[i - 1] @ mu == pytest.approx(mu[i - 1], abs=1e-12)


@pytest.mark.parametrize("which", ["cubic", "tent"])
def test_bounds_sandwich_exact_measure(which, request):
    model = request.getfixturevalue(which)
    s = escape_series(build_matrices(model), 12)
    exact = exact_escape_measure(model, 12)
    assert np.all(s.X_lower <= exact.X + 1e-12)
    assert np.all(exact.X <= s.X_upper + 1e-12)
    assert np.all(s.Y_lower <= exact.Y + 1e-12)
    assert np.all(exact.Y <= s.Y_upper + 1e-12)


def test_from_escape_is_exact_cumsum():
    s = EscapeSeries.from_escape([0.1, 0.2, 0.3], [0.2, 0.3, 0.4])
    assert s.n_max == 2
    np.testing.assert_array_equal(s.Y_upper, np.cumsum([0.2, 0.3, 0.4]))
