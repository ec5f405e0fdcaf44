"""Property tests over randomly generated accepted Markov models."""

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from openmaps.escape import build_matrices, escape_series
from openmaps.fixtures import random_markov_model
from openmaps.graph import build_graph, enumerate_structural_sets, is_acyclic
from openmaps.model import validate
from openmaps.oracle import exact_escape_measure
from openmaps.reduction import admissible_sequences, build_reduced, improved_series

SETTINGS = settings(max_examples=25, deadline=None, derandomize=True,
                    suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(0, 2**32 - 1)


def model_from(seed, affine=False):
    return random_markov_model(np.random.default_rng(seed), m_max=6, affine=affine)


@SETTINGS
@given(seeds)
def test_generated_models_are_accepted(seed):
    model = model_from(seed)
    assert validate(model).accepted
    assert 2 <= model.m <= 6


@SETTINGS
@given(seeds)
def test_affine_measure_conservation(seed):
    model = model_from(seed, affine=True)
    A = build_matrices(model).lower
    mu = model.partition.measures
    for i in range(model.m):
        if i + 1 not in model.hole:
            assert abs(A[i] @ mu - mu[i]) <= 1e-12


@SETTINGS
@given(seeds)
def test_lower_below_upper_with_edge_pattern(seed):
    model = model_from(seed)
    pair = build_matrices(model)
    assert np.all(pair.lower >= 0) and np.all(pair.lower <= pair.upper)
    edges = build_graph(model).edges
    support = {(i + 1, j + 1) for i, j in zip(*np.nonzero(pair.lower))}
    assert support == edges


@SETTINGS
@given(seeds, st.integers(0, 40))
def test_y_from_x(seed, n_max):
    s = escape_series(build_matrices(model_from(seed)), n_max)
    for X, Y in ((s.X_lower, s.Y_lower), (s.X_upper, s.Y_upper)):
        assert Y[0] == X[0]
        assert all(Y[n] == Y[n - 1] + X[n] for n in range(1, n_max + 1))


@SETTINGS
@given(seeds)
def test_structural_sets_are_structural(seed):
    model = model_from(seed)
    g = build_graph(model)
    sets = enumerate_structural_sets(g)
    assert sets[-1].index_set == tuple(range(1, model.m + 1))
    for S in sets:
        assert model.hole <= S.vertices
        assert is_acyclic(g, set(range(1, model.m + 1)) - S.vertices)
    assert [S.sort_key() for S in sets] == sorted(S.sort_key() for S in sets)


@SETTINGS
@given(seeds)
def test_word_cells_partition(seed):
    model = model_from(seed)
    g = build_graph(model)
    for S in enumerate_structural_sets(g, limit=4):
        seqs = admissible_sequences(model, S, g)
        for i in range(1, model.m + 1):
            if i not in model.hole:
                total = sum(s.cell.measure for s in seqs if s.word[0] == i)
                assert abs(total - model.partition.measure(i)) <= 1e-9


@SETTINGS
@given(seeds)
def test_composition_tightening(seed):
    model = model_from(seed)
    g = build_graph(model)
    pair = build_matrices(model)
    for S in enumerate_structural_sets(g, limit=4):
        red = build_reduced(model, S, g)
        for seq in red.sequences:
            if seq.length < 2:
                continue
            w = seq.word
            row, col = red.index((w, seq.length - 1)), w[-1] - 1
            steps = list(zip(w, w[1:]))
            assert red.lower[row, col] >= np.prod([pair.lower[a - 1, b - 1] for a, b in steps])
            assert red.upper[row, col] <= np.prod([pair.upper[a - 1, b - 1] for a, b in steps])


@SETTINGS
@given(seeds)
def test_bounds_contain_exact_measure(seed):
    model = model_from(seed)
    exact = exact_escape_measure(model, 10)
    base = escape_series(build_matrices(model), 10)
    assert np.all(base.X_lower <= exact.X + 1e-12) and np.all(exact.X <= base.X_upper + 1e-12)
    assert np.all(base.Y_lower <= exact.Y + 1e-12) and np.all(exact.Y <= base.Y_upper + 1e-12)
    g = build_graph(model)
    for S in enumerate_structural_sets(g, limit=4):
        red = improved_series(build_reduced(model, S, g), 10)
        assert np.all(red.X_lower <= exact.X + 1e-12) and np.all(exact.X <= red.X_upper + 1e-12)


@SETTINGS
@given(seeds)
def test_main_sandwich_chain(seed):
    model = model_from(seed)
    base = escape_series(build_matrices(model), 50)
    g = build_graph(model)
    for S in enumerate_structural_sets(g, limit=6):
        red = improved_series(build_reduced(model, S, g), 50)
        for side in ("X", "Y"):
            lo, hi = getattr(base, f"{side}_lower"), getattr(base, f"{side}_upper")
            rlo, rhi = getattr(red, f"{side}_lower"), getattr(red, f"{side}_upper")
            assert np.all(rlo - lo >= -1e-12)
            assert np.all(rhi - rlo >= -1e-12)
            assert np.all(hi - rhi >= -1e-12)
