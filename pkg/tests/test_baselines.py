import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from helpers import dataset, simple_walk

from trajclusivat.baselines import (
    GlobalMarkovModel,
    dense_paths,
    global_mm_train,
    mmm_cv,
    mmm_train,
    netscan_search,
    netscan_train,
)
from trajclusivat.errors import DataError, NetworkMismatchError
from trajclusivat.markov import build_counts, next_location, to_probabilities
from trajclusivat.persistence import load_any
from trajclusivat.pipeline import save_model
from trajclusivat.predictor import PredictionRequest, predict
from trajclusivat.synthgen import make_grid_network


@pytest.fixture(scope="module")
def two_routes(grid):
    r1 = grid.route((1, 0), (1, 9))
    r2 = grid.route((7, 0), (7, 9))
    seqs = [r1] * 30 + [r2] * 20
    return dataset(seqs, grid.net), r1, r2


def test_global_chain_definition(two_routes):
    ds, r1, _ = two_routes
    assert global_mm_train(ds) == to_probabilities(build_counts(t.segments for t in ds))
    model = GlobalMarkovModel.train(ds)
    assert predict(model, PredictionRequest(r1[:3], 4)).predicted == list(r1[3:7])
    with pytest.raises(DataError):
        global_mm_train([])


def test_global_chain_takes_majority_at_a_junction(grid):
    stem = grid.route((4, 0), (4, 4))
    major = stem + grid.route((4, 4), (4, 8))
    minor = stem + grid.route((4, 4), (8, 4))
    chain = global_mm_train(dataset([major] * 7 + [minor] * 3, grid.net))
    assert next_location(chain, stem[-1]) == major[len(stem)]


def test_mmm_single_component_is_global_argmax(two_routes):
    ds, _, _ = two_routes
    mmm = mmm_train(ds, 1, seed=0)
    chain = global_mm_train(ds)
    assert mmm.weights == pytest.approx([1.0])
    for i in chain.rows:
        assert next_location(mmm.chains[0], i) == next_location(chain, i)
    # within a row the smoothed estimate is the outgoing-count share
    for (i, j), p in zip(mmm.support, mmm.trans_probs[0]):
        assert p == pytest.approx(1.0, abs=1e-5)


def test_mmm_separates_disjoint_routes(two_routes):
    ds, r1, r2 = two_routes
    mmm = mmm_train(ds, 2, seed=3)
    R = mmm.responsibilities
    assert np.allclose(R.sum(axis=1), 1, atol=1e-9)
    truth = np.array([0] * 30 + [1] * 20)
    comp = R.argmax(axis=1)
    assert len(set(comp[truth == 0])) == 1 and len(set(comp[truth == 1])) == 1
    assert comp[0] != comp[-1]
    assert R.max(axis=1).min() >= 0.99
    assert np.all(np.diff(mmm.objective_trace) >= -1e-9)
    assert mmm.weights.sum() == pytest.approx(1.0)
    assert np.all(mmm.weights > 0)


def test_mmm_errors(two_routes):
    ds, _, _ = two_routes
    with pytest.raises(DataError):
        mmm_train(ds, 0)
    with pytest.raises(DataError):
        mmm_train(ds, 51)
    with pytest.raises(DataError):
        mmm_train([], 1)


def test_mmm_cv_prefers_two_components(two_routes):
    ds, _, _ = two_routes
    scores = mmm_cv(ds, [1, 2], folds=5, seed=0, max_iters=50)
    assert scores[2] > scores[1]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mmm_invariants_on_random_data(grid, seed):
    rng = np.random.default_rng(seed)
    seqs = [simple_walk(grid.net, rng, int(rng.integers(2, 10))) for _ in range(int(rng.integers(3, 25)))]
    C = int(rng.integers(1, 4))
    mmm = mmm_train(seqs, C, seed=seed, max_iters=40)
    assert np.all(np.diff(mmm.objective_trace) >= -1e-9)
    assert np.allclose(mmm.responsibilities.sum(axis=1), 1, atol=1e-9)
    assert mmm.weights.sum() == pytest.approx(1.0) and np.all((mmm.weights > 0) & (mmm.weights <= 1))
    for chain in mmm.chains:
        for i in chain.rows:
            assert chain.row_mass(i) <= 1 + 1e-9


def test_netscan_single_route(grid):
    route = grid.route((2, 0), (2, 9), (6, 9))
    side = grid.route((5, 0), (5, 3))
    model = netscan_train(dataset([route] * 10 + [side] * 2, grid.net), grid.net, 5, 1, grid.dist)
    assert len(model.dense_paths) == 1
    path = model.dense_paths[0]
    assert path == route or path == route[::-1]
    with pytest.raises(DataError):
        netscan_train(dataset([route] * 10, grid.net), grid.net, 11, 1)
    with pytest.raises(DataError):
        netscan_train(dataset([route] * 10, grid.net), grid.net, 0, 1)


def test_netscan_two_routes(two_routes, grid):
    ds, r1, r2 = two_routes
    model = netscan_train(ds, grid.net, 10, 5, grid.dist)
    assert len(model.dense_paths) == 2
    groups = [model.assignment[t.id] for t in ds]
    assert len(set(groups[:30])) == 1 and len(set(groups[30:])) == 1 and groups[0] != groups[-1]
    # a query sharing no segment goes to the nearest path
    probe = grid.route((2, 0), (2, 3))
    assert model.assign(probe) == groups[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dense_path_invariants(grid, seed):
    rng = np.random.default_rng(seed)
    seqs = [simple_walk(grid.net, rng, 12) for _ in range(5)]
    seqs = [s for s in seqs for _ in range(int(rng.integers(1, 6)))]
    density = build_counts(seqs).pass_counts
    delta, sim = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    paths = dense_paths(density, grid.net, delta, sim, min_path=2)
    used = [e for p in paths for e in p]
    assert len(used) == len(set(used))
    for p in paths:
        assert all(density[e] >= delta for e in p)
        assert all(abs(density[a] - density[b]) <= sim for a, b in zip(p, p[1:]))
        assert all(b in grid.net.adjacent_segments(a) for a, b in zip(p, p[1:]))
        assert len(p) >= 2


def test_netscan_search_hits_target(two_routes, grid):
    ds, _, _ = two_routes
    model = netscan_search(ds, grid.net, 2, grid.dist)
    assert len(model.dense_paths) == 2


def test_baseline_persistence(tmp_path, two_routes, grid):
    ds, r1, _ = two_routes
    models = [
        GlobalMarkovModel.train(ds),
        mmm_train(ds, 2, seed=1),
        netscan_train(ds, grid.net, 10, 5, grid.dist),
    ]
    for model in models:
        path = tmp_path / f"{model.method}.json"
        save_model(model, path)
        back = load_any(path).bind(grid.dist, grid.net)
        assert back.method == model.method
        req = PredictionRequest(r1[:4], 5)
        assert predict(back, req).predicted == predict(model, req).predicted
        other = make_grid_network(3, 3, 0.01)
        with pytest.raises(NetworkMismatchError):
            back.bind(None, other)
