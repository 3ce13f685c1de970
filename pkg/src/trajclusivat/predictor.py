"""Sequential m-step route prediction with a latest-locations window."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .errors import DataError, TrajectoryError
from .markov import TransitionMatrix, next_location

DEAD_END = "dead end"


class ChainSelector(Protocol):
    """Anything that maps a query window to a transition matrix (clusters, mixture components, dense paths)."""

    global_chain: TransitionMatrix

    def select_chain(self, window: Sequence[int], full_history: bool) -> tuple[int, TransitionMatrix]: ...


@dataclass(frozen=True)
class PredictionRequest:
    partial: tuple[int, ...]
    steps: int
    lambda_window: int | None = 3

    def __post_init__(self):
        object.__setattr__(self, "partial", tuple(int(e) for e in self.partial))
        if len(self.partial) < 1:
            raise DataError("partial trajectory must hold at least one segment")
        if self.steps < 1:
            raise DataError("steps must be >= 1")
        if self.lambda_window is not None and self.lambda_window < 1:
            raise DataError("lambda_window must be >= 1")


@dataclass
class PredictionResult:
    predicted: list[int] = field(default_factory=list)
    cluster_trace: list[int] = field(default_factory=list)
    truncated: bool = False
    reason: str | None = None

    def to_json(self, traj_id) -> dict:
        return {
            "id": traj_id,
            "predicted": self.predicted,
            "clusters": self.cluster_trace,
            "truncated": self.truncated,
        }


def _check_edges(partial: Sequence[int], n_edges: int | None) -> None:
    if n_edges is None:
        return
    bad = [e for e in partial if not 0 <= e < n_edges]
    if bad:
        raise TrajectoryError(f"partial trajectory references unknown segments {bad[:5]}")


def predict(model: ChainSelector, req: PredictionRequest, n_edges: int | None = None) -> PredictionResult:
    """Greedy m-step prediction.

    Each step re-selects a chain from the last ``lambda_window`` segments of the
    growing trajectory (``None`` means the whole history), takes the most
    probable successor of the last segment, and falls back to the global chain
    when the selected chain has no outgoing transition there. The selected id
    is recorded even on fallback steps; -1 marks a dead end.
    """
    if n_edges is None:
        n_edges = getattr(model, "n_edges", None)
    _check_edges(req.partial, n_edges)
    history = list(req.partial)
    out = PredictionResult()
    lam = req.lambda_window
    for _ in range(req.steps):
        if lam is None or lam >= len(history):
            window, full = history, True
        else:
            window, full = history[-lam:], False
        cid, chain = model.select_chain(window, full)
        nxt = next_location(chain, history[-1])
        if nxt is None:
            nxt = next_location(model.global_chain, history[-1])
        if nxt is None:
            out.truncated = True
            out.reason = DEAD_END
            break
        out.predicted.append(nxt)
        out.cluster_trace.append(cid)
        history.append(nxt)
    return out


def predict_batch(model: ChainSelector, partials, steps: int, lambda_window: int | None = 3) -> list[PredictionResult]:
    return [predict(model, PredictionRequest(tuple(p), steps, lambda_window)) for p in partials]
