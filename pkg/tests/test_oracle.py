import numpy as np
import pytest

from openmaps.escape import build_matrices, escape_series
from openmaps.graph import build_graph, enumerate_structural_sets
from openmaps.oracle import (DepthTooLarge, delayed_orbit, escape_times, exact_escape_measure,
                             lemma1_check, monte_carlo_escape)
from openmaps.reduction import admissible_sequences

S134 = {1, 3, 4}


# -- exact cylinder measures -----------------------------------------------------

def test_tent_exact_values(tent):
    ex = exact_escape_measure(tent, 2)
    np.testing.assert_array_equal(ex.X, [0.25, 0.125, 0.125])
    np.testing.assert_array_equal(ex.Y, [0.25, 0.375, 0.5])


def test_tent_cylinder_counts_follow_fibonacci(tent):
    counts = exact_escape_measure(tent, 10).cylinders
    assert counts[:3] == [1, 1, 2]
    assert all(counts[k] == counts[k - 1] + counts[k - 2] for k in range(3, 11))


def test_depth_cap(tent):
    exact_escape_measure(tent, 14)
    with pytest.raises(DepthTooLarge):
        exact_escape_measure(tent, 15)
    with pytest.raises(ValueError):
        exact_escape_measure(tent, -1)


def test_empty_hole(tent):
    np.testing.assert_array_equal(exact_escape_measure(tent.with_hole(()), 6).X, 0.0)


def test_shift_escapes_in_one_step(shift):
    ex = exact_escape_measure(shift, 5)
    np.testing.assert_array_equal(ex.X, [0.5, 0.5, 0, 0, 0, 0])
    np.testing.assert_array_equal(ex.Y[1:], 1.0)


def test_affine_oracle_agrees_with_matrix_powers(tent, random_affine_models):
    for model in (tent, *random_affine_models):
        ex = exact_escape_measure(model, 12)
        s = escape_series(build_matrices(model), 12)
        np.testing.assert_allclose(ex.X, s.X_lower, atol=1e-10)
        np.testing.assert_allclose(ex.Y, s.Y_lower, atol=1e-10)


def test_exact_series_is_exact(cubic):
    s = exact_escape_measure(cubic, 4).series()
    assert s.exact
    np.testing.assert_array_equal(s.X_lower, s.X_upper)


# -- Monte Carlo ------------------------------------------------------------------

def test_tent_monte_carlo_first_step(tent):
    est = monte_carlo_escape(tent, 10**6, 3, seed=42)
    assert abs(est.X[1] - 0.125) <= 4 * est.X_se[1]


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_monte_carlo_converges_to_exact(tent, seed):
    exact = exact_escape_measure(tent, 12)
    est = monte_carlo_escape(tent, 200_000, 12, seed=seed)
    se = np.sqrt(exact.X * (1 - exact.X) / est.samples)
    assert np.all(np.abs(est.X - exact.X) <= 5 * se)


def test_monte_carlo_deterministic_across_workers(cubic):
    a = monte_carlo_escape(cubic, 150_000, 8, seed=9)
    b = monte_carlo_escape(cubic, 150_000, 8, seed=9, workers=3)
    np.testing.assert_array_equal(a.counts, b.counts)
    c = monte_carlo_escape(cubic, 150_000, 8, seed=10)
    assert not np.array_equal(a.counts, c.counts)


def test_monte_carlo_zero_samples(tent):
    est = monte_carlo_escape(tent, 0, 5, seed=1)
    assert est.samples == 0 and est.X.size == 0 and est.X_se.size == 0


def test_standard_error_formula(tent):
    est = monte_carlo_escape(tent, 1000, 3, seed=4)
    p = est.X
    np.testing.assert_allclose(est.X_se, np.sqrt(p * (1 - p) / 1000))


def test_escape_times(tent):
    t = escape_times(tent, np.array([0.1, 0.9, 0.6]), 3)
    # 0.9 -> 0.2 (hole); 0.6 -> 0.8 -> 0.4 -> 0.8 never reaches the hole
    np.testing.assert_array_equal(t, [0, 1, -1])


# -- delayed first return ---------------------------------------------------------

def cell_of(model, S, label):
    return next(s.cell for s in admissible_sequences(model, S) if s.label == label)


def test_delay_on_two_step_word(cubic):
    c = cell_of(cubic, S134, "424")
    x0 = 0.5 * (c.lo + c.hi)
    orbit = delayed_orbit(cubic, S134, x0, 2)
    assert orbit[1] == x0
    assert orbit[2] == float(cubic.step_open(cubic.step_open(np.array([x0])))[0])


def test_no_delay_on_single_step_word(cubic):
    c = cell_of(cubic, S134, "33")
    x0 = 0.5 * (c.lo + c.hi)
    orbit = delayed_orbit(cubic, S134, x0, 1)
    assert orbit[1] == float(cubic.step_open(np.array([x0]))[0])


def test_hole_points_fixed_under_delay(cubic):
    assert delayed_orbit(cubic, S134, 0.1, 6) == [0.1] * 7


def test_within_delay_constancy(tent):
    # complement {v4}: words through v4 have length 2, everything else length 1
    S = {1, 2, 3}
    seqs = admissible_sequences(tent, S)
    rng = np.random.default_rng(0)
    for seq in seqs:
        for x0 in rng.uniform(seq.cell.lo, seq.cell.hi, 5):
            orbit = delayed_orbit(tent, S, float(x0), seq.length)
            assert orbit[: seq.length] == [x0] * seq.length
            assert orbit[seq.length] != x0 or tent.in_hole(x0)


def test_delayed_orbit_rejects_out_of_range(tent):
    with pytest.raises(ValueError):
        delayed_orbit(tent, {1, 2, 3}, 1.2, 3)


@pytest.mark.parametrize("S", [S134, {1, 2, 3}, {1, 2, 3, 4}])
def test_lemma1(cubic, tent, S):
    for model in (cubic, tent):
        rep = lemma1_check(model, S, 10_000, 200, seed=3)
        assert rep.ok, rep.log_lines()[:5]


def test_lemma1_random_models(random_models):
    for model in random_models:
        g = build_graph(model)
        for S in enumerate_structural_sets(g, limit=4):
            assert lemma1_check(model, S, 2000, 60, seed=1).ok


def test_lemma1_log_format(cubic):
    rep = lemma1_check(cubic, S134, 10, 5, seed=0)
    rep.mismatches.append((0.5, 3, 4))
    assert rep.log_lines() == ["v1,v3,v4,0.5,3,4"]
    assert not rep.ok
