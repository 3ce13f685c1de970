import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trajclusivat.errors import TrajectoryError
from trajclusivat.trajectories import (
    Trajectory,
    TrajectoryDataset,
    ingest,
    is_connected_sequence,
    is_subtrajectory,
    reverse,
    source_segment,
    split_query_truth,
    split_train_test,
    write_rejection_report,
)


def _write_lines(path, objs):
    path.write_text("\n".join(o if isinstance(o, str) else json.dumps(o) for o in objs) + "\n")
    return path


def test_ingest_examples(tmp_path, toy4):
    path = _write_lines(
        tmp_path / "t.jsonl",
        [
            {"id": 1, "edges": [0, 1, 2]},
            {"id": 2, "edges": [0, 2]},
            {"id": 3, "edges": [0]},
            {"id": 4, "edges": [0, 9]},
            "garbage",
            {"id": 1, "edges": [2, 1]},
        ],
    )
    ds, rejected = ingest(path, toy4, min_len=2, max_len=200)
    assert ds.ids == [1]
    assert ds.network_ref == toy4.ref
    reasons = {(r.line_no, r.reason) for r in rejected}
    assert reasons == {(2, "disconnected"), (3, "too_short"), (4, "unknown_edge"), (5, "malformed"), (6, "duplicate_id")}
    report = tmp_path / "rej.csv"
    write_rejection_report(rejected, report)
    assert report.read_text().splitlines()[0] == "line_no,id,reason"


def test_ingest_bounds_and_missing_file(tmp_path, toy4):
    path = _write_lines(tmp_path / "t.jsonl", [{"id": 1, "edges": [0, 1, 2]}])
    ds, rej = ingest(path, toy4, min_len=2, max_len=2)
    assert len(ds) == 0 and rej[0].reason == "too_long"
    with pytest.raises(TrajectoryError):
        ingest(tmp_path / "missing.jsonl", toy4)


def test_subtrajectory_examples():
    assert is_subtrajectory((1, 2), (0, 1, 2))
    assert not is_subtrajectory((0, 2), (0, 1, 2))
    assert is_subtrajectory((0, 1, 2), (0, 1, 2))


def _naive_sub(c, t):
    for start in range(len(t) + 1):
        ok = True
        for k, e in enumerate(c):
            if start + k >= len(t) or t[start + k] != e:
                ok = False
                break
        if ok:
            return True
    return False


seqs = st.lists(st.integers(0, 3), max_size=8)


@given(seqs, seqs, seqs)
def test_subtrajectory_matches_scan_and_is_transitive(a, b, c):
    assert is_subtrajectory(a, b) == _naive_sub(a, b)
    assert is_subtrajectory(a, a)
    if is_subtrajectory(a, b) and is_subtrajectory(b, c):
        assert is_subtrajectory(a, c)


def test_source_segment(toy4):
    assert source_segment(Trajectory(0, (0, 1)), toy4) == (0, 0)
    assert source_segment(Trajectory(0, (1, 0)), toy4) == (1, 2)
    assert source_segment(Trajectory(0, (0, 1, 2)), toy4) == (0, 0)
    with pytest.raises(TrajectoryError):
        source_segment(Trajectory(0, (0,)), toy4)


def test_reverse():
    t = Trajectory(5, (0, 1, 2))
    assert reverse(t) == Trajectory(5, (2, 1, 0))
    assert reverse(reverse(t)) == t
    assert reverse(Trajectory(1, (0,))).segments == (0,)


@pytest.mark.parametrize("length,q", [(10, 5), (5, 3), (2, 1)])
def test_split_query_truth(length, q):
    t = Trajectory(0, tuple(range(length)))
    p, tr = split_query_truth(t)
    assert len(p) == q and len(tr) == length - q
    assert p.segments + tr.segments == t.segments


def test_split_query_truth_too_short():
    with pytest.raises(TrajectoryError):
        split_query_truth(Trajectory(0, (1,)))


def _ds(n):
    return TrajectoryDataset(tuple(Trajectory(i, (0, 1)) for i in range(n)))


def test_split_train_test():
    train, test = split_train_test(_ds(10), 0.6, 7)
    assert len(train) == 6 and len(test) == 4
    assert set(train.ids) | set(test.ids) == set(range(10))
    assert not set(train.ids) & set(test.ids)
    again = split_train_test(_ds(10), 0.6, 7)
    assert again[0].ids == train.ids
    assert len(split_train_test(_ds(3), 0.5, 1)[0]) == 2
    with pytest.raises(TrajectoryError):
        split_train_test(_ds(0), 0.5, 1)
    with pytest.raises(ValueError):
        split_train_test(_ds(3), 1.0, 1)


def test_duplicate_ids_rejected():
    with pytest.raises(TrajectoryError):
        TrajectoryDataset((Trajectory(1, (0,)), Trajectory(1, (1,))))


def test_random_walks_are_connected(grid):
    from helpers import random_walk

    rng = np.random.default_rng(3)
    for _ in range(50):
        w = random_walk(grid.net, rng, 10)
        assert is_connected_sequence(w, grid.net)
