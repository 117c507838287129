"""Latent-geometry and sampler diagnostics.

A standard Gaussian in dimension d concentrates its mass in an O(1)-thick
shell at radius sqrt(d), which is why clipped-box latent search spaces
mostly miss the prior's support in even moderate dimension. The functions
here quantify that: radial statistics of prior samples, the overlap of a
[-delta, delta]^d box with the high-probability shell, and a two-sample
moment comparison used to validate samplers against the exact rejection
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream

# Radius mean/sd of a d-dimensional standard normal, computed once by the
# Monte-Carlo oracle in scripts/radial_reference.py (Philox, seed 777,
# n=10**7 per dimension) and checked in with that provenance.
CHI_MEAN = {
    1: 0.797832,
    2: 1.253200,
    8: 2.741636,
    16: 3.938179,
    32: 5.612716,
    64: 7.968755,
    128: 11.291633,
}
CHI_SD = {
    1: 0.602910,
    2: 0.655123,
    8: 0.695602,
    16: 0.701421,
    32: 0.704217,
    64: 0.705751,
    128: 0.706347,
}

# Asymptotic radius spread; the +-2.5 * this half-width shell captures
# ~99% of prior mass in high dimension.
RADIUS_SD_LIMIT = 0.7071067811865476  # 1/sqrt(2)
SHELL_HALF_WIDTH = 2.5 * RADIUS_SD_LIMIT


@dataclass
class RadialStats:
    """Radial summary of a latent sample."""

    n: int
    dim: int
    mean_radius: float
    sd_radius: float
    radii: np.ndarray

    def shell_fraction(self, lo: float, hi: float) -> float:
        """Fraction of samples whose radius lies in [lo, hi]."""
        return float(np.mean((self.radii >= lo) & (self.radii <= hi)))

    def prior_shell_fraction(self) -> float:
        """Fraction inside the canonical sqrt(d) +- 2.5/sqrt(2) shell."""
        centre = np.sqrt(self.dim)
        return self.shell_fraction(centre - SHELL_HALF_WIDTH, centre + SHELL_HALF_WIDTH)


def radial_stats(samples: np.ndarray) -> RadialStats:
    samples = np.asarray(samples, dtype=np.float64)
    radii = np.linalg.norm(samples, axis=1)
    return RadialStats(
        n=samples.shape[0],
        dim=samples.shape[1],
        mean_radius=float(radii.mean()),
        sd_radius=float(radii.std()),
        radii=radii,
    )


def annulus_report(d: int, n: int, rng: RngStream) -> RadialStats:
    """Radial statistics of n fresh standard normal samples in R^d."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    gen = rng.generator()
    return radial_stats(gen.standard_normal((n, d)))


def box_shell_overlap(d: int, delta: float, n: int, rng: RngStream) -> float:
    """Fraction of uniform box draws that land in the prior's shell.

    Draws n points uniformly from [-delta, delta]^d and reports how many
    have radius within sqrt(d) +- 2.5/sqrt(2).
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    gen = rng.generator()
    radii = np.linalg.norm(gen.uniform(-delta, delta, size=(n, d)), axis=1)
    centre = np.sqrt(d)
    lo, hi = centre - SHELL_HALF_WIDTH, centre + SHELL_HALF_WIDTH
    return float(np.mean((radii >= lo) & (radii <= hi)))


@dataclass
class MatchReport:
    """Two-sample moment comparison with iid-based standard errors."""

    mean_z: np.ndarray
    second_moment_z: np.ndarray
    max_abs_z: float
    passed: bool

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"distribution match: max |z| = {self.max_abs_z:.3f} ({verdict}); "
            f"mean z = {np.array2string(self.mean_z, precision=2)}, "
            f"m2 z = {np.array2string(self.second_moment_z, precision=2)}"
        )


def _moment_z(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # z-score of the difference in sample means, per column
    va = a.var(axis=0, ddof=1) / a.shape[0]
    vb = b.var(axis=0, ddof=1) / b.shape[0]
    return (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt(va + vb)


def distribution_match(a: np.ndarray, b: np.ndarray, threshold: float = 3.0) -> MatchReport:
    """Compare two latent samples on per-coordinate means and second moments.

    The standard errors assume independent draws. When one side is an
    autocorrelated chain, thin it first or the z-scores will be inflated.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two samples per side")
    mean_z = _moment_z(a, b)
    m2_z = _moment_z(a * a, b * b)
    max_abs = float(max(np.abs(mean_z).max(), np.abs(m2_z).max()))
    return MatchReport(
        mean_z=mean_z,
        second_moment_z=m2_z,
        max_abs_z=max_abs,
        passed=max_abs <= threshold,
    )
