"""JSON / JSON-lines persistence with exact float round-trips.

Python's ``json`` writes floats with ``repr`` so every finite double (and
``Infinity``/``NaN``) reads back bit-identical. Readers validate structure
and raise :class:`ParseError` naming the offending line and field; nothing
is returned from a file that fails validation.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .causal import CausalGraph, Episode, HistoryBuffer, LinearCausalModel


class ParseError(ValueError):
    def __init__(self, path, message: str, line: int = None, field: str = None):
        where = str(path)
        if line is not None:
            where += f", line {line}"
        if field is not None:
            where += f", field {field!r}"
        super().__init__(f"{where}: {message}")
        self.path, self.line, self.field = path, line, field


def atomic_write(path, text: str) -> None:
    """Write via a temporary file and rename so readers never see half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _require(d: dict, key: str, path, line=None):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(path, "missing field", line, key)
    return d[key]


def _array(d: dict, key: str, path, line=None, ndim=None, dtype=float, optional=False):
    if optional and d.get(key) is None:
        return None
    value = _require(d, key, path, line)
    try:
        arr = np.array(value, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ParseError(path, f"not a numeric array ({exc})", line, key) from None
    if ndim is not None and arr.ndim != ndim and arr.size:
        raise ParseError(path, f"expected {ndim}-d array, got {arr.ndim}-d", line, key)
    return arr


def episode_to_dict(ep: Episode) -> dict:
    return {
        "policy_tag": ep.policy_tag,
        "features": ep.features.tolist(),
        "actions": ep.actions.tolist(),
        "rewards": ep.rewards.tolist(),
        "train_rewards": None if ep.train_rewards is None else ep.train_rewards.tolist(),
    }


def episode_from_dict(d: dict, path="<episode>", line=None) -> Episode:
    features = _array(d, "features", path, line, ndim=2)
    actions = _array(d, "actions", path, line, ndim=1, dtype=int)
    rewards = _array(d, "rewards", path, line, ndim=1)
    train = _array(d, "train_rewards", path, line, ndim=1, optional=True)
    tag = _require(d, "policy_tag", path, line)
    for key, arr in (("actions", actions), ("rewards", rewards), ("train_rewards", train)):
        if arr is not None and len(arr) != len(features):
            raise ParseError(path, f"length {len(arr)} differs from {len(features)} steps", line, key)
    return Episode(features, actions, rewards, tag, train)


def save_buffer(buffer: HistoryBuffer, path) -> None:
    """One header line (capacity, episode count) followed by one episode per line."""
    lines = [json.dumps({"capacity": buffer.capacity, "n_episodes": len(buffer)})]
    lines += [json.dumps(episode_to_dict(ep)) for ep in buffer]
    atomic_write(path, "\n".join(lines) + "\n")


def load_buffer(path) -> HistoryBuffer:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(path, "empty file", 1)
    records = []
    for k, text in enumerate(lines, start=1):
        try:
            records.append(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(path, f"invalid JSON ({exc.msg})", k) from None
    header = records[0]
    capacity = _require(header, "capacity", path, 1)
    expected = _require(header, "n_episodes", path, 1)
    episodes = [episode_from_dict(r, path, k) for k, r in enumerate(records[1:], start=2)]
    if len(episodes) != expected:
        raise ParseError(path, f"header announces {expected} episodes, found {len(episodes)} (truncated?)",
                         len(lines), "n_episodes")
    try:
        return HistoryBuffer(capacity, episodes)
    except ValueError as exc:
        raise ParseError(path, str(exc), 1, "capacity") from None


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON ({exc.msg})", exc.lineno) from None


def save_model(model: LinearCausalModel, path, tau=None) -> None:
    atomic_write(path, json.dumps(model.to_dict(tau), indent=1))


def model_from_dict(d: dict, path="<model>") -> LinearCausalModel:
    W = _array(d, "W", path, ndim=2)
    b = _array(d, "b", path, ndim=1)
    lam = _require(d, "lambda", path)
    names = _require(d, "feature_names", path)
    try:
        return LinearCausalModel(W, b, lam, names)
    except ValueError as exc:
        raise ParseError(path, str(exc), field="W") from None


def load_model(path) -> LinearCausalModel:
    return model_from_dict(_load_json(path), path)


def save_graph(graph: CausalGraph, path, extra: dict = None) -> None:
    d = graph.to_dict()
    if extra:
        d.update(extra)
    atomic_write(path, json.dumps(d, indent=1))


def graph_from_dict(d: dict, path="<graph>") -> CausalGraph:
    adjacency = _array(d, "adjacency", path, ndim=2, dtype=bool)
    sign = _array(d, "sign", path, ndim=2, dtype=int)
    weights = _array(d, "weights", path, ndim=2)
    if not (adjacency.shape == sign.shape == weights.shape):
        raise ParseError(path, "adjacency, sign and weights shapes differ", field="adjacency")
    return CausalGraph(adjacency, sign, weights, _require(d, "tau", path), tuple(_require(d, "feature_names", path)))


def load_graph(path) -> CausalGraph:
    return graph_from_dict(_load_json(path), path)
