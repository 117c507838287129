import numpy as np
import pytest

from cowboys.core import Fingerprint, derive_stream
from cowboys.decoder import DecoderSpec, make_decoder
from cowboys.gp import KernelParams, build_posterior
from cowboys.pcn import (
    GpImprovementTarget,
    InfeasibleOracleError,
    PcnSettings,
    accept_prob,
    cowboys_sample,
    log_accept_prob,
    log_likelihood,
    pcn_propose,
    rejection_sample,
    run_chain,
)
from cowboys.validate import ConstantTarget, make_gp_validation_target

from oracles import log_normal_cdf_tail, mc_qei


def fp(*counts):
    return Fingerprint(tuple(counts))


def one_point_target(y0=0.0, noise=1e-2, f_star=None, mode="standard_pcn"):
    """GP target whose decoded structure is constant: every latent maps to
    the training fingerprint, so mean/var are the same everywhere."""
    spec = DecoderSpec(
        kind="linear_threshold",
        latent_dim=2,
        fingerprint_len=2,
        weight=np.zeros((2, 2)),
        bias=np.array([1.0, -1.0]),  # counts always (1, 0)
    )
    post = build_posterior([fp(1, 0)], [y0], KernelParams(1.0, noise), jitter=0.0)
    if f_star is None:
        f_star = y0
    return GpImprovementTarget(post, make_decoder(spec), f_star, mode)


class TestLogLikelihood:
    def test_half_at_incumbent_mean(self):
        target = one_point_target(y0=0.3, noise=1e-2, f_star=0.3)
        z = np.array([0.5, 0.5])
        assert log_likelihood(target, z) == pytest.approx(np.log(0.5), abs=1e-12)

    def test_ten_sigma_tail_matches_asymptotic_oracle(self):
        target = one_point_target(y0=0.0, noise=1e-2)
        mean, var = target.posterior.predict(fp(1, 0))
        target.f_star = mean + 10.0 * np.sqrt(var)
        value = log_likelihood(target, np.zeros(2))
        assert value == pytest.approx(log_normal_cdf_tail(-10.0), abs=0.01)
        assert value == pytest.approx(-53.23, abs=0.01)

    def test_degenerate_variance_indicator(self):
        target = one_point_target(y0=1.0, noise=0.0, f_star=0.0)
        assert log_likelihood(target, np.zeros(2)) == 0.0
        target = one_point_target(y0=1.0, noise=0.0, f_star=2.0)
        assert log_likelihood(target, np.zeros(2)) == -np.inf

    def test_no_underflow_deep_in_the_tail(self):
        target = one_point_target(y0=0.0, noise=1e-2)
        mean, var = target.posterior.predict(fp(1, 0))
        target.f_star = mean + 38.0 * np.sqrt(var)
        assert np.isfinite(log_likelihood(target, np.zeros(2)))


class TestProposal:
    def test_beta_near_one_is_fresh_draw(self):
        z = np.full(4, 0.5)
        gen_a = derive_stream(51, 0).generator()
        gen_b = derive_stream(51, 0).generator()
        prop = pcn_propose(z, 1.0 - 1e-12, gen_a)
        eps = gen_b.standard_normal(4)
        assert np.allclose(prop, eps, atol=1e-6)

    def test_beta_near_zero_is_identity(self):
        z = np.full(4, 3.0)
        prop = pcn_propose(z, 1e-12, derive_stream(51, 1).generator())
        assert np.allclose(prop, z, atol=1e-6)

    def test_invalid_beta_rejected(self):
        with pytest.raises(ValueError):
            pcn_propose(np.zeros(2), 0.0, derive_stream(51, 2).generator())
        with pytest.raises(ValueError):
            pcn_propose(np.zeros(2), 1.0, derive_stream(51, 2).generator())

    def test_single_step_preserves_the_prior(self):
        gen = derive_stream(52, 0).generator()
        beta = 0.3
        out = np.empty((100_000, 8))
        for i in range(out.shape[0]):
            out[i] = pcn_propose(gen.standard_normal(8), beta, gen)
        assert np.abs(out.mean(axis=0)).max() < 0.02
        assert np.abs(out.var(axis=0) - 1.0).max() < 0.05


class TestAcceptProb:
    def test_identical_points_accept_in_both_modes(self):
        for mode in ("standard_pcn", "paper"):
            target = one_point_target(f_star=-1.0, mode=mode)
            z = np.array([0.7, -0.2])
            assert accept_prob(target, z, z) == 1.0

    def test_constant_likelihood_standard_mode_always_accepts(self):
        target = ConstantTarget(2, log_value=np.log(0.4))
        gen = derive_stream(53, 0).generator()
        for _ in range(10):
            assert accept_prob(target, gen.standard_normal(2), gen.standard_normal(2)) == 1.0

    def test_paper_mode_pays_the_prior_ratio(self):
        target = ConstantTarget(2, log_value=0.0, acceptance_mode="paper")
        z_cur = np.array([0.5, 0.0])
        z_prop = np.array([1.5, 1.0])
        expected = np.exp((z_cur @ z_cur - z_prop @ z_prop) / 2.0)
        assert accept_prob(target, z_cur, z_prop) == pytest.approx(expected, abs=1e-15)
        assert expected < 1.0

    def test_zero_likelihood_proposal_never_accepted(self):
        target = one_point_target(y0=1.0, noise=0.0, f_star=2.0)
        assert accept_prob(target, np.zeros(2), np.ones(2)) == 0.0


class TestRunChain:
    def test_beta_fixed_point_when_alpha_equals_target(self):
        # flat likelihood gives alpha = 1 every step; set the target there
        settings = PcnSettings(target_accept=1.0)
        state = run_chain(
            ConstantTarget(2), np.zeros(2), 200, settings, derive_stream(54, 0)
        )
        assert state.beta == pytest.approx(settings.beta_init, abs=1e-12)

    def test_single_step_beta_update_value(self):
        # alpha = 1 -> beta = 0.1 + 0.1 * (1 - 0.243)
        state = run_chain(
            ConstantTarget(2), np.zeros(2), 1, PcnSettings(), derive_stream(54, 1)
        )
        assert state.beta == pytest.approx(0.1757, abs=1e-12)

    def test_all_proposals_accepted_under_flat_likelihood(self):
        state = run_chain(
            ConstantTarget(4), np.zeros(4), 10_000, PcnSettings(), derive_stream(54, 2)
        )
        assert len(state.accepted) == 10_000
        assert state.n_accepted == state.n_proposed == 10_000

    def test_beta_clamps_at_both_ends(self):
        up = run_chain(
            ConstantTarget(2), np.zeros(2), 500, PcnSettings(), derive_stream(54, 3)
        )
        assert up.beta == PcnSettings().beta_max
        down = run_chain(
            one_point_target(y0=1.0, noise=0.0, f_star=2.0),
            np.zeros(2),
            500,
            PcnSettings(),
            derive_stream(54, 4),
        )
        assert down.beta == PcnSettings().beta_min

    def test_rejections_do_not_duplicate_samples(self):
        target = make_gp_validation_target(acceptance_mode="standard_pcn")
        state = run_chain(
            target, np.zeros(2), 2000, PcnSettings(), derive_stream(54, 5)
        )
        assert len(state.accepted) == state.n_accepted < state.n_proposed
        arr = np.asarray(state.accepted)
        assert not np.any(np.all(arr[1:] == arr[:-1], axis=1))

    def test_trajectory_records_with_repeats(self):
        target = make_gp_validation_target(acceptance_mode="standard_pcn")
        state = run_chain(
            target,
            np.zeros(2),
            2000,
            PcnSettings(),
            derive_stream(54, 6),
            record_trajectory=True,
        )
        assert state.trajectory.shape == (2000, 2)
        repeats = np.any(np.all(state.trajectory[1:] == state.trajectory[:-1], axis=1))
        assert repeats  # rejected steps hold the position


class TestDetailedBalance:
    def test_log_acceptance_identity_exact(self):
        target = make_gp_validation_target(acceptance_mode="standard_pcn")
        gen = derive_stream(55, 0).generator()
        checked = 0
        while checked < 100:
            za, zb = gen.standard_normal(2), gen.standard_normal(2)
            la, lb = target.log_likelihood(za), target.log_likelihood(zb)
            if la == -np.inf or lb == -np.inf:
                continue
            lhs = log_accept_prob(target, za, zb) - log_accept_prob(target, zb, za)
            assert lhs == lb - la
            checked += 1


class TestPaperModeBias:
    def test_flat_likelihood_contracts_to_half_variance(self):
        # the prior-ratio acceptance targets prior^2: var 1/2, E||z||^2 = d/2
        target = ConstantTarget(8, acceptance_mode="paper")
        state = run_chain(
            target,
            np.zeros(8),
            30_000,
            PcnSettings(),
            derive_stream(56, 0),
            record_trajectory=True,
        )
        msr = float((state.trajectory[2000:] ** 2).sum(axis=1).mean())
        assert msr == pytest.approx(4.0, rel=0.05)


class TestRejectionSample:
    def test_flat_likelihood_returns_prior_draws(self):
        target = ConstantTarget(3)
        n = 4000
        zs = np.asarray(rejection_sample(target, n, derive_stream(57, 0)))
        assert zs.shape == (n, 3)
        assert np.abs(zs.mean(axis=0)).max() <= 4.0 / np.sqrt(n)

    def test_halfspace_indicator(self):
        class Halfspace:
            latent_dim = 2
            acceptance_mode = "standard_pcn"

            def log_likelihood(self, z):
                return 0.0 if z[0] > 0 else -np.inf

            def log_likelihood_batch(self, zs):
                return np.where(zs[:, 0] > 0, 0.0, -np.inf)

        zs = np.asarray(rejection_sample(Halfspace(), 2000, derive_stream(57, 1)))
        assert np.all(zs[:, 0] > 0)

    def test_infeasible_target_detected_by_the_probe(self):
        target = ConstantTarget(2, log_value=-np.inf)
        with pytest.raises(InfeasibleOracleError, match="infeasible oracle"):
            rejection_sample(target, 10, derive_stream(57, 2))


class TestCowboysSample:
    def feasible_target(self, mode="paper"):
        # f* below every reachable prediction: likelihood is one everywhere
        return make_gp_validation_target(acceptance_mode=mode)

    def certain_target(self):
        target = make_gp_validation_target(acceptance_mode="standard_pcn")
        target.f_star = -np.inf
        target._fp_cache.clear()
        return target

    def impossible_target(self):
        target = make_gp_validation_target(acceptance_mode="standard_pcn")
        target.f_star = np.inf
        target._fp_cache.clear()
        return target

    def test_flat_likelihood_single_batch_no_restart(self):
        result = cowboys_sample(
            self.certain_target(),
            np.zeros(2),
            batch_size=1,
            chains=1,
            steps=100,
            settings=PcnSettings(),
            rng=derive_stream(58, 0),
        )
        assert len(result.structures) == 1
        assert result.restarts == 0
        assert result.fallbacks == 0

    def test_unreachable_likelihood_exhausts_restarts_and_pads(self):
        result = cowboys_sample(
            self.impossible_target(),
            np.zeros(2),
            batch_size=3,
            chains=2,
            steps=20,
            settings=PcnSettings(),
            rng=derive_stream(58, 1),
            max_restarts=4,
        )
        assert len(result.structures) == 3
        assert result.fallbacks == 3
        assert result.restarts == 3
        assert all(not s.fingerprint.is_zero for s in result.structures)

    def test_always_returns_exactly_b_nonzero_structures(self):
        for batch in (1, 2, 5):
            result = cowboys_sample(
                self.feasible_target(),
                np.zeros(2),
                batch_size=batch,
                chains=2,
                steps=50,
                settings=PcnSettings(),
                rng=derive_stream(58, 2),
            )
            assert len(result.structures) == batch
            assert all(not s.fingerprint.is_zero for s in result.structures)
            assert len(result.latents) == batch

    def test_selected_latents_decode_to_selected_structures(self):
        target = self.feasible_target()
        result = cowboys_sample(
            target,
            np.zeros(2),
            batch_size=2,
            chains=1,
            steps=80,
            settings=PcnSettings(),
            rng=derive_stream(58, 3),
        )
        for s, z in zip(result.structures, result.latents):
            assert target.decoder.decode(z).fingerprint == s.fingerprint

    def test_worker_count_does_not_change_the_result(self):
        outs = []
        for workers in (1, 4):
            result = cowboys_sample(
                self.feasible_target(),
                np.zeros(2),
                batch_size=2,
                chains=4,
                steps=40,
                settings=PcnSettings(),
                rng=derive_stream(58, 4),
                workers=workers,
            )
            outs.append([s.fingerprint.counts for s in result.structures])
        assert outs[0] == outs[1]

    @pytest.mark.parametrize("batch", [2, 3])
    def test_selection_matches_exhaustive_subset_oracle(self, batch):
        import itertools

        target = self.feasible_target(mode="standard_pcn")
        result = cowboys_sample(
            target,
            np.zeros(2),
            batch_size=batch,
            chains=2,
            steps=120,
            settings=PcnSettings(),
            rng=derive_stream(58, 5),
            qei_mc=4096,
        )
        assert batch < len(result.candidates) <= 12

        def value(subset):
            mean, cov = target.posterior.predict_joint([s.fingerprint for s in subset])
            return mc_qei(
                mean, cov + 1e-10 * np.eye(len(subset)), target.f_star, 80_000, 3
            )

        best_val, best_se = -np.inf, 0.0
        for sub in itertools.combinations(result.candidates, batch):
            v, se = value(list(sub))
            if v > best_val:
                best_val, best_se = v, se
        got_val, got_se = value(result.structures)
        assert got_val >= best_val - 3 * np.hypot(best_se, got_se)
