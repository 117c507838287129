"""Deterministic synthetic objectives over structures.

Each objective is a pure function of the fingerprint. ``tanimoto_to_target``
is model-matched to the surrogate (the objective literally is a Tanimoto
similarity), isolating optimiser behaviour from model misspecification;
``rugged_nk`` is the misspecified stress case; ``linear_score`` sits in
between. Hidden instance parameters are generated from the instance seed
with the project RNG, so an instance is shareable by seed alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import STREAM_OBJECTIVE_INSTANCE, Fingerprint, Structure, derive_stream

KINDS = ("tanimoto_to_target", "linear_score", "rugged_nk")


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Tagged objective description; see module docstring for kinds."""

    kind: str
    fingerprint_len: int
    target: Optional[Fingerprint] = None  # tanimoto_to_target
    weights: Optional[np.ndarray] = None  # linear_score
    interactions: int = 2  # rugged_nk neighbourhood size K
    tables: Optional[np.ndarray] = None  # rugged_nk, shape (L, 2**(K+1))
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "tanimoto_to_target":
            if self.target is None or len(self.target) != self.fingerprint_len:
                raise ValueError("tanimoto_to_target needs a full-length target")
        elif self.kind == "linear_score":
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.fingerprint_len,) or not np.any(w):
                raise ValueError("linear_score needs a nonzero weight vector")
            object.__setattr__(self, "weights", w)
        elif self.kind == "rugged_nk":
            if not (1 <= self.interactions <= 4):
                raise ValueError("rugged_nk supports 1 <= K <= 4")
            t = np.asarray(self.tables, dtype=np.float64)
            if t.shape != (self.fingerprint_len, 2 ** (self.interactions + 1)):
                raise ValueError("rugged_nk tables shape mismatch")
            object.__setattr__(self, "tables", t)

    @property
    def bounds(self) -> tuple[float, float]:
        """Objective range; linear_score is quoted for binary counts."""
        if self.kind == "tanimoto_to_target":
            return (0.0, 1.0)
        if self.kind == "linear_score":
            return (-1.0, 1.0)
        return (0.0, 1.0)


def tanimoto_to_target_spec(target: Fingerprint, seed: int = 0) -> ObjectiveSpec:
    if target.is_zero:
        raise ValueError("target fingerprint must be nonzero")
    return ObjectiveSpec(
        kind="tanimoto_to_target",
        fingerprint_len=len(target),
        target=target,
        seed=seed,
    )


def random_target_spec(fingerprint_len: int, seed: int) -> ObjectiveSpec:
    """tanimoto_to_target against a random binary target drawn from seed."""
    gen = derive_stream(seed, STREAM_OBJECTIVE_INSTANCE).generator()
    counts = gen.integers(0, 2, size=fingerprint_len)
    if not counts.any():
        counts[0] = 1
    return tanimoto_to_target_spec(Fingerprint.from_array(counts), seed=seed)


def linear_score_spec(fingerprint_len: int, seed: int) -> ObjectiveSpec:
    gen = derive_stream(seed, STREAM_OBJECTIVE_INSTANCE).generator()
    w = gen.standard_normal(fingerprint_len)
    return ObjectiveSpec(
        kind="linear_score", fingerprint_len=fingerprint_len, weights=w, seed=seed
    )


def rugged_nk_spec(fingerprint_len: int, interactions: int, seed: int) -> ObjectiveSpec:
    gen = derive_stream(seed, STREAM_OBJECTIVE_INSTANCE).generator()
    tables = gen.uniform(size=(fingerprint_len, 2 ** (interactions + 1)))
    return ObjectiveSpec(
        kind="rugged_nk",
        fingerprint_len=fingerprint_len,
        interactions=interactions,
        tables=tables,
        seed=seed,
    )


def _nk_value(spec: ObjectiveSpec, bits: np.ndarray) -> float:
    length = spec.fingerprint_len
    k = spec.interactions
    total = 0.0
    for i in range(length):
        idx = 0
        for j in range(k + 1):
            idx = (idx << 1) | int(bits[(i + j) % length])
        total += spec.tables[i, idx]
    return total / length


def evaluate(spec: ObjectiveSpec, x: Structure) -> float:
    """Objective value of a structure (pure in its fingerprint)."""
    counts = x.fingerprint.as_array()
    if counts.shape != (spec.fingerprint_len,):
        raise ValueError("fingerprint length does not match the objective")
    if spec.kind == "tanimoto_to_target":
        t = spec.target.as_array()
        dot = int(counts @ t)
        denom = int(counts @ counts) + int(t @ t) - dot
        return dot / denom if denom else 0.0
    if spec.kind == "linear_score":
        return float(spec.weights @ counts) / float(np.abs(spec.weights).sum())
    return _nk_value(spec, (counts > 0).astype(np.int64))


def nk_global_optimum(spec: ObjectiveSpec) -> tuple[Fingerprint, float]:
    """Certified optimum of a rugged_nk instance by exhaustive enumeration.

    Only tractable for fingerprint_len <= 16.
    """
    if spec.kind != "rugged_nk":
        raise ValueError("only rugged_nk instances can be enumerated")
    if spec.fingerprint_len > 16:
        raise ValueError("enumeration limited to fingerprint_len <= 16")
    best_bits = None
    best_val = -np.inf
    for bits in itertools.product((0, 1), repeat=spec.fingerprint_len):
        val = _nk_value(spec, np.asarray(bits))
        if val > best_val:
            best_val = val
            best_bits = bits
    return Fingerprint(best_bits), float(best_val)


def make_objective(spec: ObjectiveSpec):
    """Bind a spec into a plain callable Structure -> float."""

    def objective(x: Structure) -> float:
        return evaluate(spec, x)

    return objective
