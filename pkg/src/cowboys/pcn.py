"""Preconditioned Crank-Nicolson sampling of improvement-conditioned latents.

The sampling target is the posterior over latent codes induced by a
standard Gaussian prior and the likelihood

    lik(z) = P(f(decode(z)) > f* | data),

the GP's probability that the decoded structure improves on the incumbent.
The PCN proposal z' = sqrt(1 - beta^2) z + beta * eps leaves the prior
invariant, so the standard acceptance rule needs only the likelihood
ratio. Two acceptance modes are provided:

* ``standard_pcn`` - alpha = min(1, lik(z')/lik(z)). Targets exactly the
  prior-times-likelihood posterior.
* ``paper`` - alpha additionally multiplies in the prior density ratio.
  Because the proposal is already prior-reversible, this tempers the
  stationary law to lik(z) * prior(z)^2; with a flat likelihood that is a
  Gaussian with variance 1/2 per coordinate. Both modes are first-class:
  the optimiser defaults to ``paper`` and the validation suite pins the
  difference down quantitatively rather than silently correcting it.

The step size adapts toward a target acceptance probability,
beta <- clamp(beta + gain * (alpha - target)), and chains restart at the
best-so-far latent. ``rejection_sample`` is the exact but slow sampler for
the same posterior, used as ground truth when validating the chains.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_ndtr

from .core import CowboysError, Fingerprint, RngStream, Structure, as_latent
from .decoder import Decoder
from .gp import GpPosterior, qei_greedy_select

LOG_EPS = np.log(1e-12)


class InfeasibleOracleError(CowboysError):
    """The rejection oracle found no feasible mass in its probe budget."""


@dataclass
class PcnSettings:
    """Step-size schedule for the adaptive PCN chain.

    ``adapt_gain = 0`` freezes beta at ``beta_init``, recovering the plain
    reversible PCN kernel; the validation suite uses that mode when
    checking posterior correctness, because a constant, non-diminishing
    gain couples the step size to the chain history and measurably biases
    the stationary law.
    """

    beta_init: float = 0.1
    target_accept: float = 0.243
    adapt_gain: float = 0.1
    beta_min: float = 1e-4
    beta_max: float = 0.999

    def __post_init__(self):
        if not (0.0 < self.beta_min <= self.beta_init <= self.beta_max < 1.0):
            raise ValueError("need 0 < beta_min <= beta_init <= beta_max < 1")
        if self.adapt_gain < 0:
            raise ValueError("adapt_gain must be >= 0")


class GpImprovementTarget:
    """Improvement-probability likelihood over latents, via decode + GP.

    Read-only once constructed apart from cheap bookkeeping: GP
    predictions are memoised per fingerprint (decoders are piecewise
    constant, so chains revisit fingerprints constantly) and a counter
    tracks actual posterior evaluations. Latents whose decoding is already
    known (the incumbent) can be registered up front so chain starts cost
    no decoder calls.
    """

    def __init__(
        self,
        posterior: GpPosterior,
        decoder: Decoder,
        f_star: float,
        acceptance_mode: str = "paper",
    ):
        if acceptance_mode not in ("paper", "standard_pcn"):
            raise ValueError(f"unknown acceptance_mode {acceptance_mode!r}")
        self.posterior = posterior
        self.decoder = decoder
        self.f_star = float(f_star)
        self.acceptance_mode = acceptance_mode
        self._fp_cache: dict[tuple[int, ...], float] = {}
        self._known_latents: dict[bytes, Structure] = {}
        self._lock = threading.Lock()
        self._n_predicts = 0

    @property
    def n_predicts(self) -> int:
        return self._n_predicts

    @property
    def latent_dim(self) -> int:
        return self.decoder.latent_dim

    def register_decoding(self, z: np.ndarray, structure: Structure) -> None:
        """Record that ``z`` is known to decode to ``structure``."""
        self._known_latents[as_latent(z).tobytes()] = structure

    def _decode(self, z: np.ndarray) -> Structure:
        known = self._known_latents.get(z.tobytes())
        if known is not None:
            return known
        return self.decoder.decode(z)

    def _log_lik_of_fingerprint(self, fp: Fingerprint) -> float:
        key = fp.counts
        cached = self._fp_cache.get(key)
        if cached is not None:
            return cached
        mean, var = self.posterior.predict(fp)
        with self._lock:
            self._n_predicts += 1
        if var == 0.0:
            value = 0.0 if mean > self.f_star else -np.inf
        else:
            value = float(log_ndtr((mean - self.f_star) / np.sqrt(var)))
        self._fp_cache[key] = value
        return value

    def log_likelihood(self, z: np.ndarray) -> float:
        return self._log_lik_of_fingerprint(self._decode(z).fingerprint)

    def decode_and_log_likelihood(self, z: np.ndarray) -> tuple[Structure, float]:
        structure = self._decode(z)
        return structure, self._log_lik_of_fingerprint(structure.fingerprint)

    def log_likelihood_batch(self, zs: np.ndarray) -> np.ndarray:
        structures = self.decoder.decode_batch(zs)
        return np.asarray(
            [self._log_lik_of_fingerprint(s.fingerprint) for s in structures]
        )


def log_likelihood(target, z: np.ndarray) -> float:
    """Log improvement likelihood of a latent under the target."""
    return target.log_likelihood(z)


def pcn_propose(z: np.ndarray, beta: float, gen: np.random.Generator) -> np.ndarray:
    """One PCN proposal: sqrt(1 - beta^2) * z + beta * fresh normal."""
    if not (0.0 < beta < 1.0):
        raise ValueError("beta must lie in (0, 1)")
    eps = gen.standard_normal(z.shape[0])
    return np.sqrt(1.0 - beta * beta) * z + beta * eps


def _log_accept_ratio(
    mode: str,
    z_cur: np.ndarray,
    z_prop: np.ndarray,
    loglik_cur: float,
    loglik_prop: float,
) -> float:
    if loglik_prop == -np.inf:
        return -np.inf
    if loglik_cur == -np.inf:
        return np.inf
    ratio = loglik_prop - loglik_cur
    if mode == "paper":
        ratio += 0.5 * (float(z_cur @ z_cur) - float(z_prop @ z_prop))
    return ratio


def log_accept_prob(target, z_cur: np.ndarray, z_prop: np.ndarray) -> float:
    """log of the acceptance probability, exact in log space."""
    z_cur = as_latent(z_cur)
    z_prop = as_latent(z_prop)
    ratio = _log_accept_ratio(
        target.acceptance_mode,
        z_cur,
        z_prop,
        target.log_likelihood(z_cur),
        target.log_likelihood(z_prop),
    )
    return min(0.0, ratio)


def accept_prob(target, z_cur: np.ndarray, z_prop: np.ndarray) -> float:
    """Acceptance probability for a proposed move under the target's mode."""
    return float(np.exp(log_accept_prob(target, z_cur, z_prop)))


def _eval_point(target, z: np.ndarray) -> tuple[Optional[Structure], float]:
    eval_fn = getattr(target, "decode_and_log_likelihood", None)
    if eval_fn is not None:
        return eval_fn(z)
    return None, target.log_likelihood(z)


@dataclass
class ChainState:
    """One PCN chain after a run: final position, step size, and samples.

    ``accepted`` stores a sample only on acceptance (rejections do not
    duplicate the current state); ``trajectory`` is the with-repeats path,
    recorded only when requested, which is what distributional validation
    must use. ``accepted_structures`` carries the decoding of each
    accepted latent when the target exposes one.
    """

    z_current: np.ndarray
    beta: float
    rng: RngStream
    accepted: list[np.ndarray] = field(default_factory=list)
    n_proposed: int = 0
    n_accepted: int = 0
    accept_flags: list[bool] = field(default_factory=list)
    accepted_structures: list[Optional[Structure]] = field(default_factory=list)
    trajectory: Optional[np.ndarray] = None
    n_lik_evals: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0


def run_chain(
    target,
    z_init: np.ndarray,
    steps: int,
    settings: PcnSettings,
    rng: RngStream,
    record_trajectory: bool = False,
) -> ChainState:
    """Run one adaptive PCN chain for ``steps`` iterations.

    Each iteration proposes, accepts with the mode's probability, then
    nudges beta by gain * (alpha - target_accept), clamped to
    [beta_min, beta_max]. The acceptance probability itself (not the
    binary accept/reject outcome) drives the adaptation.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = as_latent(z_init)
    gen = rng.generator()
    beta = settings.beta_init
    _, loglik = _eval_point(target, z)
    state = ChainState(z_current=z, beta=beta, rng=rng, n_lik_evals=1)
    path = [] if record_trajectory else None

    for _ in range(steps):
        z_prop = pcn_propose(z, beta, gen)
        structure_prop, loglik_prop = _eval_point(target, z_prop)
        state.n_lik_evals += 1
        ratio = _log_accept_ratio(
            target.acceptance_mode, z, z_prop, loglik, loglik_prop
        )
        alpha = float(min(1.0, np.exp(min(ratio, 0.0))))
        state.n_proposed += 1
        accepted = gen.uniform() < alpha
        if accepted:
            z = z_prop
            loglik = loglik_prop
            state.n_accepted += 1
            state.accepted.append(z)
            state.accepted_structures.append(structure_prop)
        state.accept_flags.append(bool(accepted))
        if path is not None:
            path.append(z)
        beta = float(
            np.clip(
                beta + settings.adapt_gain * (alpha - settings.target_accept),
                settings.beta_min,
                settings.beta_max,
            )
        )

    state.z_current = z
    state.beta = beta
    if path is not None:
        state.trajectory = np.asarray(path)
    return state


@dataclass
class SampleResult:
    """Batch proposed by the sampler plus bookkeeping for the run trace."""

    structures: list[Structure]
    latents: list[np.ndarray]
    candidates: list[Structure]
    rounds: int
    restarts: int
    fallbacks: int
    acceptance_rates: list[float]
    final_betas: list[float]
    n_lik_evals: int


def _run_chains(
    target,
    z_best: np.ndarray,
    chains: int,
    steps: int,
    settings: PcnSettings,
    streams: Sequence[RngStream],
    workers: int,
) -> list[ChainState]:
    def one(c: int) -> ChainState:
        return run_chain(target, z_best, steps, settings, streams[c])

    if workers <= 1 or chains == 1:
        return [one(c) for c in range(chains)]
    with ThreadPoolExecutor(max_workers=min(workers, chains)) as pool:
        return list(pool.map(one, range(chains)))


def cowboys_sample(
    target,
    z_best: np.ndarray,
    batch_size: int,
    chains: int,
    steps: int,
    settings: PcnSettings,
    rng: RngStream,
    max_restarts: int = 10,
    qei_mc: int = 256,
    qei_rng: Optional[RngStream] = None,
    workers: int = 1,
) -> SampleResult:
    """Propose a batch of structures by improvement-conditioned sampling.

    Runs ``chains`` PCN chains from the incumbent's latent; if the union
    of accepted samples decodes to fewer than ``batch_size`` distinct
    structures, the chains are re-run with fresh streams, up to
    ``max_restarts`` rounds in total. Surplus candidates are cut down by
    greedy Monte-Carlo batch expected improvement; a shortfall after all
    rounds is padded with decoded fresh prior draws (logged as fallbacks),
    so exactly ``batch_size`` structures always come back. Chain outputs
    merge in (round, chain, step) order, making the result identical for
    any worker count.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    z_best = as_latent(z_best)

    candidates: list[Structure] = []
    candidate_latents: dict[tuple[int, ...], np.ndarray] = {}
    acceptance_rates: list[float] = []
    final_betas: list[float] = []
    n_lik = 0
    rounds = 0

    for round_idx in range(max_restarts):
        rounds += 1
        streams = [rng.derive(round_idx, c) for c in range(chains)]
        states = _run_chains(target, z_best, chains, steps, settings, streams, workers)
        for state in states:
            acceptance_rates.append(state.acceptance_rate)
            final_betas.append(state.beta)
            n_lik += state.n_lik_evals
            for z, s in zip(state.accepted, state.accepted_structures):
                if s is None:
                    s = target.decoder.decode(z)
                if s.fingerprint.counts not in candidate_latents:
                    candidate_latents[s.fingerprint.counts] = z
                    candidates.append(s)
        if len(candidates) >= batch_size:
            break

    fallbacks = 0
    if len(candidates) < batch_size:
        gen = rng.derive(max_restarts, 0).generator()
        while len(candidates) < batch_size:
            z = gen.standard_normal(target.latent_dim)
            s = target.decoder.decode(z)
            candidate_latents.setdefault(s.fingerprint.counts, z)
            candidates.append(s)
            fallbacks += 1

    if len(candidates) > batch_size:
        qei_stream = qei_rng if qei_rng is not None else rng.derive(max_restarts, 1)
        chosen = qei_greedy_select(
            target.posterior, candidates, target.f_star, batch_size, qei_mc, qei_stream
        )
    else:
        chosen = list(candidates)

    latents = [candidate_latents[s.fingerprint.counts] for s in chosen]
    return SampleResult(
        structures=chosen,
        latents=latents,
        candidates=candidates,
        rounds=rounds,
        restarts=rounds - 1,
        fallbacks=fallbacks,
        acceptance_rates=acceptance_rates,
        final_betas=final_betas,
        n_lik_evals=n_lik,
    )


def rejection_sample(
    target,
    n: int,
    rng: RngStream,
    probe_draws: int = 1_000_000,
    chunk: int = 8192,
) -> list[np.ndarray]:
    """Exact sampler for the improvement-conditioned posterior.

    Draws z from the prior and accepts with probability exp(log lik),
    valid because the likelihood is a probability. Before sampling, a
    probe of prior draws must witness likelihood above 1e-12 somewhere;
    the probe stops early at the first witness.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rng.generator()
    dim = target.latent_dim

    probed = 0
    feasible = False
    while probed < probe_draws:
        m = min(chunk, probe_draws - probed)
        zs = gen.standard_normal((m, dim))
        if np.any(target.log_likelihood_batch(zs) > LOG_EPS):
            feasible = True
            break
        probed += m
    if not feasible:
        raise InfeasibleOracleError("infeasible oracle")

    out: list[np.ndarray] = []
    while len(out) < n:
        zs = gen.standard_normal((chunk, dim))
        loglik = target.log_likelihood_batch(zs)
        with np.errstate(divide="ignore"):
            accept = np.log(gen.uniform(size=chunk)) < loglik
        for z in zs[accept]:
            out.append(z)
            if len(out) == n:
                break
    return out
