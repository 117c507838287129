"""Oracle-backed validation suites, runnable from the CLI.

Each suite cross-checks one subsystem against an independent route:
kernel values against the scalar formula and an eigenvalue oracle, GP
predictions against a dense linear solve, PCN chains against prior
moments and the exact rejection sampler, and greedy Monte-Carlo batch
selection against analytic expected improvement. The fixed GP target
built here is also the fixture for the sampler acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import Fingerprint, Structure, derive_stream
from .decoder import DecoderSpec, make_decoder
from .diagnostics import CHI_MEAN, distribution_match
from .gp import KernelParams, build_posterior, qei_greedy_select, tanimoto, tanimoto_matrix
from .pcn import (
    GpImprovementTarget,
    PcnSettings,
    log_accept_prob,
    rejection_sample,
    run_chain,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"


def random_fingerprints(
    gen: np.random.Generator, n: int, length: int, max_count: int = 5
) -> list[Fingerprint]:
    out = []
    while len(out) < n:
        counts = gen.integers(0, max_count + 1, size=length)
        if counts.any():
            out.append(Fingerprint.from_array(counts))
    return out


class ConstantTarget:
    """Flat-likelihood stand-in target for prior-invariance checks."""

    def __init__(self, dim: int, log_value: float = 0.0, acceptance_mode: str = "standard_pcn"):
        self.latent_dim = dim
        self.log_value = log_value
        self.acceptance_mode = acceptance_mode

    def log_likelihood(self, z) -> float:
        return self.log_value

    def log_likelihood_batch(self, zs) -> np.ndarray:
        return np.full(len(zs), self.log_value)


def make_gp_validation_target(
    seed: int = 4, acceptance_mode: str = "standard_pcn"
) -> GpImprovementTarget:
    """Fixed two-dimensional GP target over a small threshold decoder.

    Five prior latents are decoded and scored by similarity to a hidden
    fingerprint; the GP uses fixed hyperparameters and the improvement
    threshold sits a small margin above the incumbent, so the target is
    fully determined by the seed. The default construction was calibrated
    once: the prior places ~3% of its mass on improvement (the rejection
    oracle stays cheap) and the likelihood is concentrated enough that
    step-size adaptation can settle at the target acceptance rate.
    """
    stream = derive_stream(seed, 90)
    gen = stream.generator()
    w = gen.standard_normal((5, 2)) * 1.5
    b = gen.standard_normal(5) * 0.5
    spec = DecoderSpec(
        kind="linear_threshold", latent_dim=2, fingerprint_len=5, weight=w, bias=b
    )
    decoder = make_decoder(spec)

    hidden_counts = gen.integers(0, 2, size=5)
    hidden_counts[0] = 1
    hidden = Fingerprint.from_array(hidden_counts)
    train_z = gen.standard_normal((5, 2))
    fps = [decoder.decode(z).fingerprint for z in train_z]
    ys = []
    for fp in fps:
        a, t = fp.as_array(), hidden.as_array()
        dot = int(a @ t)
        denom = int(a @ a) + int(t @ t) - dot
        ys.append(2.0 * (dot / denom if denom else 0.0))
    posterior = build_posterior(
        fps, ys, KernelParams(scale=0.25, noise=1e-3), jitter=1e-8
    )
    f_star = max(ys) + 0.2
    return GpImprovementTarget(posterior, decoder, f_star, acceptance_mode)


def kernel_suite(seed: int = 0) -> list[CheckResult]:
    gen = derive_stream(seed, 91).generator()
    checks = []

    fps = random_fingerprints(gen, 80, 32)
    sym_ok = all(
        tanimoto(a, b, 1.7) == tanimoto(b, a, 1.7)
        for a, b in zip(fps[:40], fps[40:])
    )
    checks.append(CheckResult("kernel symmetry", sym_ok, "40 random pairs, exact"))

    rng_ok = True
    for a, b in zip(fps[:40], fps[40:]):
        v = tanimoto(a, b, 2.0)
        rng_ok &= 0.0 <= v <= 2.0
        rng_ok &= abs(tanimoto(a, a, 2.0) - 2.0) < 1e-15
    checks.append(CheckResult("kernel range", bool(rng_ok), "0 <= k <= scale, k(a,a)=scale"))

    min_eig = np.inf
    for _ in range(10):
        x = np.stack([f.as_array() for f in random_fingerprints(gen, 32, 16, 3)])
        min_eig = min(min_eig, float(np.linalg.eigvalsh(tanimoto_matrix(x, x)).min()))
    checks.append(
        CheckResult(
            "kernel PSD", min_eig >= -1e-9, f"min eigenvalue {min_eig:.2e} >= -1e-9"
        )
    )

    formula_ok = True
    for a, b in zip(fps[:40], fps[40:]):
        ca, cb = a.counts, b.counts
        dot = sum(x * y for x, y in zip(ca, cb))
        ref = 1.3 * dot / (sum(x * x for x in ca) + sum(y * y for y in cb) - dot)
        formula_ok &= abs(tanimoto(a, b, 1.3) - ref) <= 1e-12
    checks.append(CheckResult("kernel formula", bool(formula_ok), "scalar oracle, 1e-12"))
    return checks


def gp_suite(seed: int = 0) -> list[CheckResult]:
    gen = derive_stream(seed, 92).generator()
    checks = []
    worst = 0.0
    for _ in range(5):
        fps = random_fingerprints(gen, 8, 12, 4)
        y = gen.standard_normal(8)
        params = KernelParams(scale=1.2, noise=0.05)
        post = build_posterior(fps, y, params, jitter=0.0)
        tests = random_fingerprints(gen, 6, 12, 4)

        x = np.stack([f.as_array() for f in fps])
        k = params.scale * tanimoto_matrix(x, x) + (params.noise + post.jitter) * np.eye(8)
        mean_c = float(np.mean(y))
        alpha = np.linalg.solve(k, np.asarray(y) - mean_c)
        for t in tests:
            ks = params.scale * tanimoto_matrix(t.as_array()[None, :], x)[0]
            ref_mean = mean_c + ks @ alpha
            ref_var = params.scale - ks @ np.linalg.solve(k, ks)
            mean, var = post.predict(t)
            worst = max(worst, abs(mean - ref_mean), abs(var - max(ref_var, 0.0)))
    checks.append(
        CheckResult("gp dense solve", worst <= 1e-8, f"max |diff| {worst:.2e} <= 1e-8")
    )

    fps = random_fingerprints(gen, 6, 10, 3)
    y = gen.standard_normal(6)
    post = build_posterior(fps, y, KernelParams(scale=1.0, noise=0.0), jitter=0.0)
    errs = [abs(post.predict(f)[0] - t) for f, t in zip(fps, y)]
    checks.append(
        CheckResult(
            "gp interpolation",
            max(errs) <= 1e-6,
            f"noise-free training residual {max(errs):.2e} <= 1e-6",
        )
    )
    return checks


def pcn_suite(seed: int = 0) -> list[CheckResult]:
    checks = []
    settings = PcnSettings()

    target = ConstantTarget(8)
    state = run_chain(
        target,
        np.zeros(8),
        12_000,
        settings,
        derive_stream(seed, 93),
        record_trajectory=True,
    )
    traj = state.trajectory[1000:]
    var_err = float(np.abs(traj.var(axis=0) - 1.0).max())
    mean_radius = float(np.linalg.norm(traj, axis=1).mean())
    radius_err = abs(mean_radius / CHI_MEAN[8] - 1.0)
    checks.append(
        CheckResult(
            "pcn prior invariance",
            var_err < 0.08 and radius_err < 0.03,
            f"per-coord var err {var_err:.3f} < 0.08, radius err {radius_err:.3%} < 3%",
        )
    )

    # posterior correctness is a property of the reversible fixed-step
    # kernel; adaptation is validated separately (it biases the law)
    target = make_gp_validation_target(acceptance_mode="standard_pcn")
    frozen = PcnSettings(beta_init=0.6, adapt_gain=0.0)
    state = run_chain(
        target,
        np.zeros(2),
        40_000,
        frozen,
        derive_stream(seed, 94),
        record_trajectory=True,
    )
    chain = state.trajectory[::10]
    oracle = np.asarray(rejection_sample(target, 4000, derive_stream(seed, 95)))
    report = distribution_match(chain, oracle)
    checks.append(
        CheckResult(
            "pcn vs rejection oracle",
            report.passed,
            f"max |z| {report.max_abs_z:.2f} <= 3",
        )
    )

    state = run_chain(
        target, np.zeros(2), 10_000, settings, derive_stream(seed, 99)
    )
    trailing = float(np.mean(state.accept_flags[-1000:]))
    checks.append(
        CheckResult(
            "pcn adaptation",
            abs(trailing - settings.target_accept) <= 0.05,
            f"trailing-1000 acceptance {trailing:.3f} within 0.243 +- 0.05",
        )
    )

    gen = derive_stream(seed, 96).generator()
    ok = True
    worst = 0.0
    for _ in range(50):
        za, zb = gen.standard_normal(2), gen.standard_normal(2)
        lhs = log_accept_prob(target, za, zb) - log_accept_prob(target, zb, za)
        rhs = target.log_likelihood(zb) - target.log_likelihood(za)
        worst = max(worst, abs(lhs - rhs))
        ok &= lhs == rhs
    checks.append(
        CheckResult("pcn detailed balance", bool(ok), f"identity exact (worst {worst:.1e})")
    )
    return checks


def analytic_ei(mean: float, var: float, f_star: float) -> float:
    if var <= 0.0:
        return max(0.0, mean - f_star)
    sd = np.sqrt(var)
    u = (mean - f_star) / sd
    phi = np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)
    return float(sd * phi + (mean - f_star) * ndtr(u))


def qei_suite(seed: int = 0) -> list[CheckResult]:
    gen = derive_stream(seed, 97).generator()
    agreements = 0
    trials = 5
    for t in range(trials):
        fps = random_fingerprints(gen, 10, 16, 3)
        train = random_fingerprints(gen, 6, 16, 3)
        y = gen.standard_normal(6)
        post = build_posterior(train, y, KernelParams(scale=1.0, noise=0.01))
        f_star = float(np.max(y)) - 0.2
        cands = [Structure(f) for f in fps]
        chosen = qei_greedy_select(
            post, cands, f_star, 1, 4096, derive_stream(seed, 98).derive(t)
        )[0]
        eis = [analytic_ei(*post.predict(f), f_star) for f in fps]
        best = fps[int(np.argmax(eis))]
        agreements += chosen.fingerprint == best
    return [
        CheckResult(
            "qei vs analytic EI",
            agreements >= trials - 1,
            f"{agreements}/{trials} argmax agreements",
        )
    ]


SUITES = {
    "kernel": kernel_suite,
    "gp": gp_suite,
    "pcn": pcn_suite,
    "qei": qei_suite,
}


def run_suites(names, seed: int = 0) -> list[CheckResult]:
    results = []
    for name in names:
        results.extend(SUITES[name](seed))
    return results
