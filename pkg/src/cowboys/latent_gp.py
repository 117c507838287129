"""Exact GP over latent vectors with a squared-exponential kernel.

Surrogate for the latent-space BO baseline only: one shared lengthscale,
fitted output scale and noise, constant mean at the training average.
Fitting mirrors the structure-space GP (bounded log-box, derivative-free
multistart), with the lengthscale as a third parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import GpSettings
from .gp import GramNotPositiveDefiniteError, _multistart_points

_LENGTHSCALE_BOUNDS = (1e-2, 1e2)
_JITTER = 1e-8


def _sqdist(za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    return np.maximum(
        np.sum(za**2, axis=1)[:, None]
        + np.sum(zb**2, axis=1)[None, :]
        - 2.0 * za @ zb.T,
        0.0,
    )


def _rbf(za: np.ndarray, zb: np.ndarray, lengthscale: float, scale: float) -> np.ndarray:
    return scale * np.exp(-0.5 * _sqdist(za, zb) / lengthscale**2)


@dataclass(frozen=True, eq=False)
class LatentGpPosterior:
    lengthscale: float
    scale: float
    noise: float
    train_z: np.ndarray
    train_y: np.ndarray
    factor: np.ndarray
    weights: np.ndarray
    mean_const: float

    def predict_batch(self, zq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ks = _rbf(zq, self.train_z, self.lengthscale, self.scale)
        mean = self.mean_const + ks @ self.weights
        v = np.linalg.solve(self.factor, ks.T)
        var = self.scale - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)


def fit_latent_gp(z: np.ndarray, y: np.ndarray, settings: GpSettings) -> LatentGpPosterior:
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mean_const = float(np.mean(y))
    resid = y - mean_const
    n = z.shape[0]
    sq = _sqdist(z, z)

    lo = np.log(
        [_LENGTHSCALE_BOUNDS[0], settings.scale_bounds[0], settings.noise_bounds[0]]
    )
    hi = np.log(
        [_LENGTHSCALE_BOUNDS[1], settings.scale_bounds[1], settings.noise_bounds[1]]
    )

    def nll(theta: np.ndarray) -> float:
        ell, scale, noise = np.exp(np.clip(theta, lo, hi))
        k = scale * np.exp(-0.5 * sq / ell**2) + (noise + _JITTER * scale) * np.eye(n)
        try:
            factor = np.linalg.cholesky(k)
        except np.linalg.LinAlgError:
            return np.inf
        alpha = np.linalg.solve(factor.T, np.linalg.solve(factor, resid))
        return float(
            0.5 * resid @ alpha
            + np.sum(np.log(np.diag(factor)))
            + 0.5 * n * np.log(2 * np.pi)
        )

    best_theta, best_val = None, np.inf
    for start in _multistart_points(settings.fit_restarts, 3):
        theta0 = lo + start * (hi - lo)
        res = optimize.minimize(
            nll,
            theta0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 150, "xatol": 1e-3, "fatol": 1e-6},
        )
        if res.fun < best_val:
            best_val, best_theta = res.fun, np.clip(res.x, lo, hi)
    if best_theta is None or not np.isfinite(best_val):
        raise GramNotPositiveDefiniteError("gram not PD")

    ell, scale, noise = np.exp(best_theta)
    k = scale * np.exp(-0.5 * sq / ell**2) + (noise + _JITTER * scale) * np.eye(n)
    factor = np.linalg.cholesky(k)
    weights = np.linalg.solve(factor.T, np.linalg.solve(factor, resid))
    return LatentGpPosterior(
        lengthscale=float(ell),
        scale=float(scale),
        noise=float(noise),
        train_z=z,
        train_y=y,
        factor=factor,
        weights=weights,
        mean_const=mean_const,
    )
