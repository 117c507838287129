"""Exact Gaussian-process regression over count fingerprints.

The kernel is the Tanimoto similarity on integer count vectors,

    k(m, m') = scale * (m . m') / (||m||^2 + ||m'||^2 - m . m'),

whose numerator and denominator are exact integer dot products. Predictive
variances are latent (noise-free): acquisition values condition on the
latent objective, so observation noise is never added back in.

Hyperparameters (scale, noise) maximise the exact log marginal likelihood
over a bounded log-space box via derivative-free local search from a fixed
scrambled-grid set of starting points. The search evaluates the likelihood
through a one-off eigendecomposition of the unit-scale Gram matrix, which
makes each trial point O(n); the returned posterior is re-factorised with
a Cholesky decomposition at the chosen hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import ndtr
from scipy.stats import qmc

from .core import CowboysError, Dataset, Evaluation, Fingerprint, GpSettings, RngStream, Structure

# Jitter escalation ladder, as multiples of the kernel scale.
_JITTER_START = 1e-6
_JITTER_MAX = 1e-2

# Fixed seed for the scrambled multistart grid: fitting must be
# reproducible without threading an RNG through it.
_MULTISTART_SEED = 20139


class GramNotPositiveDefiniteError(CowboysError):
    """Raised when the Gram matrix cannot be factorised even with jitter."""


class InsufficientCandidatesError(CowboysError):
    """Raised when fewer deduplicated candidates than batch slots exist."""


@dataclass(frozen=True)
class KernelParams:
    """Tanimoto kernel hyperparameters: output scale and noise variance."""

    scale: float
    noise: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def tanimoto(m: Fingerprint, m2: Fingerprint, scale: float = 1.0) -> float:
    """Tanimoto kernel value between two fingerprints.

    Raises ValueError when both inputs are all-zero, where the similarity
    is 0/0.
    """
    a = m.as_array()
    b = m2.as_array()
    if a.shape != b.shape:
        raise ValueError("fingerprint length mismatch")
    dot = int(a @ b)
    denom = int(a @ a) + int(b @ b) - dot
    if denom == 0:
        raise ValueError("undefined Tanimoto at zero")
    return scale * dot / denom


def tanimoto_matrix(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Unit-scale Tanimoto cross matrix for integer count rows."""
    xa = np.asarray(xa, dtype=np.int64)
    xb = np.asarray(xb, dtype=np.int64)
    dot = xa @ xb.T
    sa = np.einsum("ij,ij->i", xa, xa)
    sb = np.einsum("ij,ij->i", xb, xb)
    denom = sa[:, None] + sb[None, :] - dot
    if np.any(denom == 0):
        raise ValueError("undefined Tanimoto at zero")
    return dot / denom


def gram(
    inputs: Sequence[Fingerprint], params: KernelParams, jitter: float = 0.0
) -> np.ndarray:
    """Symmetric Gram matrix with noise and jitter on the diagonal."""
    if len(inputs) == 0:
        raise ValueError("gram requires at least one input")
    x = np.stack([f.as_array() for f in inputs])
    k = params.scale * tanimoto_matrix(x, x)
    k[np.diag_indices_from(k)] += params.noise + jitter
    return k


def _cholesky_with_escalation(
    base: np.ndarray, scale: float, noise: float, jitter: float
) -> tuple[np.ndarray, float]:
    """Cholesky of scale*base + (noise + j)I, escalating j up to 1e-2*scale."""
    ladder = [jitter]
    j = max(jitter, _JITTER_START * scale)
    while j <= _JITTER_MAX * scale * (1 + 1e-12):
        ladder.append(j)
        j *= 10.0
    n = base.shape[0]
    for j in ladder:
        k = scale * base + (noise + j) * np.eye(n)
        try:
            return np.linalg.cholesky(k), j
        except np.linalg.LinAlgError:
            continue
    raise GramNotPositiveDefiniteError("gram not PD")


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Immutable fitted surrogate snapshot.

    ``factor`` is the lower Cholesky factor of
    scale*T + (noise + jitter)*I over the training fingerprints and
    ``weights`` solves that matrix against the centred targets.
    """

    params: KernelParams
    train_inputs: tuple[Fingerprint, ...]
    train_targets: np.ndarray
    factor: np.ndarray
    weights: np.ndarray
    mean_const: float
    jitter: float

    @property
    def train_array(self) -> np.ndarray:
        return self._x

    def __post_init__(self):
        object.__setattr__(
            self, "_x", np.stack([f.as_array() for f in self.train_inputs])
        )

    def _cross(self, x: np.ndarray) -> np.ndarray:
        return self.params.scale * tanimoto_matrix(x, self._x)

    def predict(self, x: Fingerprint) -> tuple[float, float]:
        mean, var = self.predict_batch(x.as_array()[None, :])
        return float(mean[0]), float(var[0])

    def predict_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Latent predictive mean and variance at each query row."""
        ks = self._cross(x)
        mean = self.mean_const + ks @ self.weights
        v = np.linalg.solve(self.factor, ks.T)
        var = self.params.scale - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def predict_joint(self, inputs: Sequence[Fingerprint]) -> tuple[np.ndarray, np.ndarray]:
        """Joint latent predictive mean vector and covariance matrix."""
        x = np.stack([f.as_array() for f in inputs])
        ks = self._cross(x)
        mean = self.mean_const + ks @ self.weights
        v = np.linalg.solve(self.factor, ks.T)
        cov = self.params.scale * tanimoto_matrix(x, x) - v.T @ v
        return mean, cov


def _as_evaluations(dataset) -> list[Evaluation]:
    if isinstance(dataset, Dataset):
        return dataset.evaluations
    return list(dataset)


def build_posterior(
    inputs: Sequence[Fingerprint],
    targets: Sequence[float],
    params: KernelParams,
    jitter: float = 0.0,
    mean_const: Optional[float] = None,
) -> GpPosterior:
    """Posterior at fixed hyperparameters (no marginal-likelihood search)."""
    y = np.asarray(targets, dtype=np.float64)
    if mean_const is None:
        mean_const = float(np.mean(y))
    x = np.stack([f.as_array() for f in inputs])
    base = tanimoto_matrix(x, x)
    factor, used = _cholesky_with_escalation(base, params.scale, params.noise, jitter)
    resid = y - mean_const
    weights = np.linalg.solve(factor.T, np.linalg.solve(factor, resid))
    return GpPosterior(
        params=params,
        train_inputs=tuple(inputs),
        train_targets=y,
        factor=factor,
        weights=weights,
        mean_const=mean_const,
        jitter=used,
    )


def _nll_from_eigs(
    eigvals: np.ndarray, proj: np.ndarray, scale: float, noise: float, jitter: float
) -> float:
    """Negative log marginal likelihood via the unit-Gram eigensystem.

    With T = Q diag(eigvals) Q^T and proj = Q^T (y - mean), the covariance
    scale*T + c*I shares Q, so the quadratic form and log-determinant are
    both O(n).
    """
    c = noise + jitter
    d = scale * eigvals + c
    if np.any(d <= 0):
        return np.inf
    n = d.shape[0]
    return 0.5 * (np.sum(proj**2 / d) + np.sum(np.log(d)) + n * np.log(2 * np.pi))


def _multistart_points(n_starts: int, n_params: int) -> np.ndarray:
    sampler = qmc.Sobol(d=n_params, scramble=True, seed=_MULTISTART_SEED)
    return sampler.random(n_starts)


def fit(dataset, settings: GpSettings = GpSettings()) -> GpPosterior:
    """Fit kernel hyperparameters by maximum marginal likelihood.

    Runs `settings.fit_restarts` Nelder-Mead searches over
    (log scale, log noise) inside the configured bounds, started from a
    scrambled low-discrepancy grid, and returns the posterior at the best
    point found.
    """
    evals = _as_evaluations(dataset)
    if len(evals) == 0:
        raise ValueError("cannot fit a GP to an empty dataset")
    inputs = [e.structure.fingerprint for e in evals]
    y = np.asarray([e.y for e in evals], dtype=np.float64)
    mean_const = float(np.mean(y))

    x = np.stack([f.as_array() for f in inputs])
    base = tanimoto_matrix(x, x)
    eigvals, eigvecs = np.linalg.eigh(base)
    proj = eigvecs.T @ (y - mean_const)

    lo = np.log([settings.scale_bounds[0], settings.noise_bounds[0]])
    hi = np.log([settings.scale_bounds[1], settings.noise_bounds[1]])

    def objective(theta: np.ndarray) -> float:
        t = np.clip(theta, lo, hi)
        scale, noise = np.exp(t)
        return _nll_from_eigs(eigvals, proj, scale, noise, _JITTER_START * scale)

    best_theta = None
    best_val = np.inf
    for start in _multistart_points(settings.fit_restarts, 2):
        theta0 = lo + start * (hi - lo)
        res = optimize.minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 120, "xatol": 1e-3, "fatol": 1e-6},
        )
        if res.fun < best_val:
            best_val = res.fun
            best_theta = np.clip(res.x, lo, hi)

    if best_theta is None or not np.isfinite(best_val):
        raise GramNotPositiveDefiniteError("gram not PD")

    scale, noise = np.exp(best_theta)
    params = KernelParams(scale=float(scale), noise=float(noise))
    return build_posterior(
        inputs, y, params, jitter=settings.jitter * params.scale, mean_const=mean_const
    )


def prob_improvement(post: GpPosterior, x: Fingerprint, f_star: float) -> float:
    """P(f(x) > f*) under the latent predictive law."""
    mean, var = post.predict(x)
    if var == 0.0:
        return 1.0 if mean > f_star else 0.0
    return float(ndtr((mean - f_star) / np.sqrt(var)))


def _dedupe_by_fingerprint(candidates: Sequence[Structure]) -> list[Structure]:
    seen: dict[tuple[int, ...], Structure] = {}
    for c in candidates:
        seen.setdefault(c.fingerprint.counts, c)
    return list(seen.values())


def qei_greedy_select(
    post: GpPosterior,
    candidates: Sequence[Structure],
    f_star: float,
    batch_size: int,
    mc: int,
    rng: RngStream,
) -> list[Structure]:
    """Greedy batch selection by Monte-Carlo batch expected improvement.

    One fixed matrix of base normal draws is shared by every candidate
    comparison (common random numbers), so the selection is deterministic
    under the stream and MC noise cancels across comparisons. Ties break
    toward the lexicographically smallest fingerprint.
    """
    cands = _dedupe_by_fingerprint(candidates)
    if len(cands) < batch_size:
        raise InsufficientCandidatesError("insufficient candidates")

    order = sorted(range(len(cands)), key=lambda i: cands[i].fingerprint.counts)
    base = rng.generator().standard_normal((mc, batch_size))

    def chol(cov: np.ndarray) -> np.ndarray:
        for nugget in (1e-12, 1e-9, 1e-6):
            try:
                return np.linalg.cholesky(
                    cov + nugget * post.params.scale * np.eye(cov.shape[0])
                )
            except np.linalg.LinAlgError:
                continue
        raise GramNotPositiveDefiniteError("gram not PD")

    selected: list[int] = []
    for _ in range(batch_size):
        best_idx = None
        best_val = -np.inf
        for i in order:
            if i in selected:
                continue
            fps = [cands[j].fingerprint for j in selected] + [cands[i].fingerprint]
            mean, cov = post.predict_joint(fps)
            q = len(fps)
            draws = mean + base[:, :q] @ chol(cov).T
            gain = np.maximum(draws - f_star, 0.0).max(axis=1)
            val = float(gain.mean())
            if val > best_val:
                best_val = val
                best_idx = i
        selected.append(best_idx)
    return [cands[i] for i in selected]
