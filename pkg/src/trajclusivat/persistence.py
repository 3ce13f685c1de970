"""JSON model envelope with a trailing SHA-256 checksum line."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ModelFormatError

MAGIC = "trajclusivat-model"
VERSION = 1


def dumps_envelope(method: str, payload: dict) -> bytes:
    doc = {"format": MAGIC, "version": VERSION, "method": method, **payload}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(text.encode()).hexdigest()
    return f"{text}\nsha256:{digest}\n".encode()


def write_envelope(path, method: str, payload: dict) -> None:
    Path(path).write_bytes(dumps_envelope(method, payload))


def read_envelope(path) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    lines = raw.rstrip("\n").split("\n")
    if len(lines) != 2 or not lines[1].startswith("sha256:"):
        raise ModelFormatError(f"{path}: missing checksum trailer")
    text, digest = lines[0], lines[1][len("sha256:") :]
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: malformed model JSON") from exc
    if not isinstance(doc, dict) or doc.get("format") != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {doc.get('version')}")
    if hashlib.sha256(text.encode()).hexdigest() != digest:
        raise ModelFormatError(f"{path}: checksum mismatch")
    return doc


def counts_to_dict(counts) -> dict:
    return {
        "triplets": counts.to_triplets(),
        "pass": sorted([e, c] for e, c in counts.pass_counts.items()),
        "origin": sorted([e, c] for e, c in counts.origin_counts.items()),
        "n": counts.n_trajectories,
    }


def counts_from_dict(doc: dict):
    from .markov import TransitionCounts

    return TransitionCounts(
        {(int(i), int(j)): int(c) for i, j, c in doc["triplets"]},
        {int(e): int(c) for e, c in doc["pass"]},
        {int(e): int(c) for e, c in doc["origin"]},
        int(doc["n"]),
    )


def load_any(path):
    """Load a Traj-clusiVAT or baseline model, dispatching on the envelope's method tag."""
    doc = read_envelope(path)
    method = doc["method"]
    if method == "traj-clusivat":
        from .pipeline import TrainedModel

        return TrainedModel.from_dict(doc)
    from . import baselines

    loaders = {
        "global": baselines.GlobalMarkovModel.from_dict,
        "mmm": baselines.MMMModel.from_dict,
        "netscan": baselines.NetscanModel.from_dict,
    }
    if method not in loaders:
        raise ModelFormatError(f"{path}: unknown method {method!r}")
    return loaders[method](doc)
