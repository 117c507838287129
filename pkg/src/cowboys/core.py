"""Domain types, RNG stream discipline, and dataset bookkeeping.

Randomness policy: every random draw in this project comes from a numpy
``Generator`` backed by the counter-based Philox bit generator, keyed
through ``numpy.random.SeedSequence``. A stream is identified by
``(master_seed, stream_id)`` plus an optional derivation path, which makes
any sub-stream reproducible across runs and platforms and statistically
independent of its siblings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np


class CowboysError(Exception):
    """Base class for errors raised by this package."""


# Reserved stream ids for the top-level subsystems of a run. Chains, qEI
# draws etc. derive from these with `RngStream.derive`.
STREAM_INIT_DESIGN = 0
STREAM_SAMPLER = 1
STREAM_QEI = 2
STREAM_DECODER_INSTANCE = 3
STREAM_OBJECTIVE_INSTANCE = 4
STREAM_PERTURB = 5
STREAM_LSBO = 6


@dataclass(frozen=True)
class RngStream:
    """Handle for one reproducible random stream.

    ``generator()`` builds a fresh numpy Generator each call, so holding an
    RngStream is side-effect free; state lives only in the Generators it
    hands out.
    """

    master_seed: int
    stream_id: int
    path: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_id, *self.path)
        )
        return np.random.Generator(np.random.Philox(seq))

    def derive(self, *indices: int) -> "RngStream":
        """Child stream, independent of this one and of other children."""
        return replace(self, path=self.path + tuple(indices))


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    """Deterministic, collision-free map from (seed, id) to a stream."""
    return RngStream(master_seed=master_seed, stream_id=stream_id)


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-length vector of non-negative integer feature counts."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("fingerprint counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def is_zero(self) -> bool:
        return not any(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    @classmethod
    def from_array(cls, arr: Iterable[int]) -> "Fingerprint":
        return cls(counts=tuple(int(v) for v in arr))


@dataclass(frozen=True)
class Structure:
    """A fingerprint plus an optional external text label.

    Equality and hashing use the fingerprint only; the label is
    informational.
    """

    fingerprint: Fingerprint
    label: Optional[str] = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, Structure):
            return NotImplemented
        return self.fingerprint == other.fingerprint

    def __hash__(self) -> int:
        return hash(self.fingerprint)


def as_latent(z, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return a latent vector as a 1-d float64 array."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError(f"latent vector must be 1-d, got shape {z.shape}")
    if dim is not None and z.shape[0] != dim:
        raise ValueError(f"latent dimension mismatch: {z.shape[0]} != {dim}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent vector entries must be finite")
    return z


@dataclass(frozen=True)
class Evaluation:
    """One objective evaluation: which structure, what it scored, when."""

    structure: Structure
    y: float
    iteration: int
    batch_index: int = 0

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise ValueError("objective value must be finite")


def dataset_best(dataset: Sequence[Evaluation]) -> float:
    """Incumbent: the maximum observed objective value."""
    if len(dataset) == 0:
        raise ValueError("no incumbent")
    return max(e.y for e in dataset)


class Dataset:
    """Append-only list of evaluations; rejects all-zero fingerprints.

    The Tanimoto kernel is undefined at a pair of zero fingerprints, so a
    zero fingerprint would poison the Gram matrix. Decoders substitute a
    fallback structure before anything reaches this guard, so tripping it
    indicates a bug upstream.
    """

    def __init__(self, evaluations: Iterable[Evaluation] = ()):
        self._evaluations: list[Evaluation] = []
        for e in evaluations:
            self.append(e)

    def append(self, evaluation: Evaluation) -> None:
        if evaluation.structure.fingerprint.is_zero:
            raise ValueError("zero fingerprint rejected at dataset insertion")
        self._evaluations.append(evaluation)

    @property
    def evaluations(self) -> list[Evaluation]:
        return self._evaluations

    def best(self) -> float:
        return dataset_best(self._evaluations)

    def __len__(self) -> int:
        return len(self._evaluations)

    def __iter__(self):
        return iter(self._evaluations)

    def __getitem__(self, i):
        return self._evaluations[i]


@dataclass(frozen=True)
class GpSettings:
    """Bounds and knobs for exact-GP hyperparameter fitting."""

    jitter: float = 1e-6
    noise_bounds: tuple[float, float] = (1e-6, 1.0)
    scale_bounds: tuple[float, float] = (1e-3, 1e3)
    fit_restarts: int = 8

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        for lo, hi in (self.noise_bounds, self.scale_bounds):
            if not (0 < lo <= hi):
                raise ValueError("bounds must satisfy 0 < lo <= hi")
        if self.fit_restarts < 1:
            raise ValueError("fit_restarts must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run bit-for-bit."""

    seed: int
    latent_dim: int
    fingerprint_len: int
    budget: int
    init_size: int
    batch_size: int = 1
    chains: Optional[int] = None  # None: 50 if batch_size > 5 else 1
    steps: int = 100
    acceptance_mode: str = "paper"
    beta_init: float = 0.1
    target_accept: float = 0.243
    adapt_gain: float = 0.1
    beta_min: float = 1e-4
    beta_max: float = 0.999
    max_restarts: int = 10
    qei_mc_samples: int = 256
    workers: int = 1
    perturb_prob: float = 0.0
    decoder_pool_per_chain: bool = False
    lsbo_delta: Optional[float] = None
    decoder_spec: object = None
    objective_spec: object = None
    gp_settings: GpSettings = field(default_factory=GpSettings)

    def __post_init__(self):
        if self.latent_dim < 1 or self.fingerprint_len < 1:
            raise ValueError("latent_dim and fingerprint_len must be >= 1")
        if not (1 <= self.init_size < self.budget or self.init_size == self.budget):
            raise ValueError("init_size must satisfy 1 <= init_size <= budget")
        if self.batch_size < 1 or self.steps < 1 or self.max_restarts < 1:
            raise ValueError("batch_size, steps, max_restarts must be >= 1")
        if self.chains is not None and self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.acceptance_mode not in ("paper", "standard_pcn"):
            raise ValueError(f"unknown acceptance_mode {self.acceptance_mode!r}")
        if not (0.0 < self.beta_init < 1.0):
            raise ValueError("beta_init must lie in (0, 1)")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must lie in (0, 1)")
        if self.adapt_gain <= 0:
            raise ValueError("adapt_gain must be > 0")
        if self.qei_mc_samples < 1:
            raise ValueError("qei_mc_samples must be >= 1")
        if not (0.0 <= self.perturb_prob <= 1.0):
            raise ValueError("perturb_prob must lie in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def resolved_chains(self) -> int:
        if self.chains is not None:
            return self.chains
        return 50 if self.batch_size > 5 else 1
