"""Prediction metrics (PA, PR, DE, OA, ODE) and the experiment harness."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .predictor import PredictionRequest, predict
from .road_network import RoadNetwork, haversine
from .trajectories import Trajectory, split_query_truth

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["method", "avg_pa", "avg_de_km", "pr_pct", "oa", "ode_km", "n_test", "n_truncated"]
PER_STEP_COLUMNS = ["step", "avg_pa", "avg_de_km", "support"]


def _check_pair(pred: Sequence[int], truth: Sequence[int]) -> None:
    if len(pred) == 0 and len(truth) == 0:
        raise DataError("cannot score an empty prediction against an empty truth")


def pa(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Positionwise exact-match ratio over ``max(|pred|, |truth|)`` positions.

    Missing (truncated) and surplus positions count as wrong.
    """
    _check_pair(pred, truth)
    hits = sum(1 for a, b in zip(pred, truth) if a == b)
    return hits / max(len(pred), len(truth))


def de(
    pred: Sequence[int],
    truth: Sequence[int],
    net: RoadNetwork,
    anchor: int | None = None,
) -> float:
    """Mean midpoint haversine distance (km) over ``max(|pred|, |truth|)`` positions.

    A missing predicted position is scored from the last predicted segment
    (or ``anchor``, typically the last known segment, when nothing was
    predicted); a surplus predicted position is scored against the last
    truth segment (or ``anchor``).
    """
    _check_pair(pred, truth)
    mids = net.midpoints()
    total = 0.0
    n = max(len(pred), len(truth))
    for j in range(n):
        if j < len(pred) and j < len(truth):
            a, b = pred[j], truth[j]
        elif j < len(truth):
            a = pred[-1] if pred else anchor
            b = truth[j]
        else:
            a = pred[j]
            b = truth[-1] if truth else anchor
        if a is None or b is None:
            raise DataError("an anchor segment is needed to score an empty sequence")
        if a != b:
            total += haversine(mids[a], mids[b])
    return total / n


def pr(results: Sequence[tuple[Sequence[int], Sequence[int]]]) -> float:
    """Fraction of predictions identical to their truth."""
    if len(results) == 0:
        raise DataError("no results to score")
    return sum(1 for p, t in results if tuple(p) == tuple(t)) / len(results)


def one_step_metrics(
    results: Sequence[tuple[Sequence[int], Sequence[int]]],
    net: RoadNetwork,
    anchors: Sequence[int | None] | None = None,
) -> tuple[float, float]:
    """Pooled one-step accuracy and mean one-step distance error (km).

    Each result holds at most one predicted and one true segment.
    """
    if len(results) == 0:
        raise DataError("no one-step results to score")
    if anchors is None:
        anchors = [None] * len(results)
    correct = 0
    dist = 0.0
    for (p, t), anc in zip(results, anchors):
        p, t = list(p)[:1], list(t)[:1]
        correct += int(bool(p) and p == t)
        dist += de(p, t, net, anc)
    return correct / len(results), dist / len(results)


@dataclass
class EvalReport:
    method: str
    avg_pa: float
    pr: float
    avg_de: float
    oa: float
    ode: float
    n_test: int
    n_truncated: int
    per_step: list[tuple[int, float, float, int]] = field(default_factory=list)
    truth_lengths: dict[int, int] = field(default_factory=dict)

    def summary_row(self) -> list:
        return [
            self.method,
            f"{self.avg_pa:.6f}",
            f"{self.avg_de:.6f}",
            f"{100 * self.pr:.4f}",
            f"{self.oa:.6f}",
            f"{self.ode:.6f}",
            self.n_test,
            self.n_truncated,
        ]

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "summary": out / "summary.csv",
            "per_step": out / "per_step.csv",
            "lengths": out / "truth_lengths.csv",
        }
        with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            w.writerow(self.summary_row())
        with open(paths["per_step"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(PER_STEP_COLUMNS)
            for step, spa, sde, support in self.per_step:
                w.writerow([step, f"{spa:.6f}", f"{sde:.6f}", support])
        with open(paths["lengths"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["length", "count"])
            for length in sorted(self.truth_lengths):
                w.writerow([length, self.truth_lengths[length]])
        return paths


def run_experiment(
    model,
    test: Sequence[Trajectory],
    net: RoadNetwork,
    m_max: int,
    out_dir=None,
    lambda_window: int | None = 3,
    method: str | None = None,
) -> EvalReport:
    """Split every test trajectory into query/truth halves, predict, and score.

    Each trajectory is predicted once for ``min(|truth|, m_max)`` steps; by
    prefix consistency the first ``s`` predicted segments are the ``s``-step
    prediction, which gives the per-step curve and the one-step metrics.
    """
    test = list(test)
    if not test:
        raise DataError("empty test set")
    if m_max < 1:
        raise DataError("m_max must be >= 1")
    method = method or getattr(model, "method", "model")
    pas, des, pairs, truncated = [], [], [], 0
    step_pa = np.zeros(m_max)
    step_de = np.zeros(m_max)
    support = np.zeros(m_max, dtype=np.int64)
    one_step, anchors = [], []
    lengths: Counter = Counter()
    for traj in test:
        query, truth = split_query_truth(traj)
        q, t = list(query.segments), list(truth.segments)
        lengths[len(t)] += 1
        m = min(len(t), m_max)
        res = predict(model, PredictionRequest(tuple(q), m, lambda_window), n_edges=net.n_edges)
        p = res.predicted
        truncated += int(res.truncated)
        tw = t[:m]
        pas.append(pa(p, tw))
        des.append(de(p, tw, net, anchor=q[-1]))
        pairs.append((p, tw))
        one_step.append((p[:1], t[:1]))
        anchors.append(q[-1])
        for s in range(1, m + 1):
            step_pa[s - 1] += pa(p[:s], t[:s])
            step_de[s - 1] += de(p[:s], t[:s], net, anchor=q[-1])
            support[s - 1] += 1
    oa, ode = one_step_metrics(one_step, net, anchors)
    per_step = [
        (s + 1, step_pa[s] / support[s] if support[s] else 0.0, step_de[s] / support[s] if support[s] else 0.0, int(support[s]))
        for s in range(m_max)
    ]
    report = EvalReport(
        method,
        float(np.mean(pas)),
        pr(pairs),
        float(np.mean(des)),
        oa,
        ode,
        len(test),
        truncated,
        per_step,
        dict(lengths),
    )
    logger.info("%s: PA %.3f, DE %.3f km, PR %.1f%%", method, report.avg_pa, report.avg_de, 100 * report.pr)
    if out_dir is not None:
        report.write(out_dir)
    return report
