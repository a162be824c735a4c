"""Feature specifications and the hand-designed KeyChest feature extractor."""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np


@dataclasses.dataclass(frozen=True)
class FeatureSpec:
    """Names and value bounds of the learner's features.

    Base features come first, then one derived feature per pair in
    ``conjunction_pairs``: ``[f_i > 0] * [f_j > 0]``.
    """

    names: tuple
    min_val: np.ndarray
    max_val: np.ndarray
    conjunction_pairs: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.min_val, dtype=float)
        hi = np.asarray(self.max_val, dtype=float)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "min_val", lo)
        object.__setattr__(self, "max_val", hi)
        object.__setattr__(self, "conjunction_pairs", tuple(tuple(p) for p in self.conjunction_pairs))
        if lo.shape != (len(self.names),) or hi.shape != lo.shape:
            raise ValueError("bounds must have one entry per feature")
        if np.any(lo > hi):
            raise ValueError("min_val must not exceed max_val")
        for i, j in self.conjunction_pairs:
            if not (0 <= i < self.n_base and 0 <= j < self.n_base):
                raise ValueError(f"conjunction ({i}, {j}) must reference base features")

    @classmethod
    def with_conjunctions(
        cls, names: Sequence[str], min_val, max_val, pairs: Sequence[tuple] = ()
    ) -> "FeatureSpec":
        """Build a spec from base features, appending one 0/1 feature per pair."""
        names = list(names)
        if any(not (0 <= k < len(names)) for pair in pairs for k in pair):
            raise ValueError("conjunction pairs must reference base features")
        derived = [f"{names[i]}*{names[j]}" for i, j in pairs]
        lo = list(min_val) + [0.0] * len(pairs)
        hi = list(max_val) + [1.0] * len(pairs)
        return cls(tuple(names + derived), np.array(lo, float), np.array(hi, float), tuple(pairs))

    @property
    def n_features(self) -> int:
        return len(self.names)

    @property
    def n_base(self) -> int:
        return len(self.names) - len(self.conjunction_pairs)

    def index(self, name: str) -> int:
        return self.names.index(name)


def extract_features(obs, spec: FeatureSpec) -> np.ndarray:
    """Map an observation record to the feature vector described by ``spec``.

    ``obs`` may be any object exposing the base feature names as attributes
    (e.g. :class:`~interventionlab.envs.keychest.FeatureObservation`) or an
    array of base values.
    """
    n_base = spec.n_base
    if isinstance(obs, np.ndarray):
        base = obs.astype(float)
    else:
        base = np.array([getattr(obs, name) for name in spec.names[:n_base]], dtype=float)
    out = np.empty(spec.n_features)
    out[:n_base] = base
    for k, (i, j) in enumerate(spec.conjunction_pairs):
        out[n_base + k] = float(base[i] > 0 and base[j] > 0)
    return np.clip(out, spec.min_val, spec.max_val)
