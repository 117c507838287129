import numpy as np
import pytest

from cowboys.core import (
    Dataset,
    Evaluation,
    Fingerprint,
    RunConfig,
    Structure,
    dataset_best,
    derive_stream,
)


def ev(counts, y, iteration=1, batch_index=0):
    return Evaluation(Structure(Fingerprint(counts)), y, iteration, batch_index)


class TestFingerprint:
    def test_counts_are_normalised_ints(self):
        fp = Fingerprint((1, np.int64(2), 0))
        assert fp.counts == (1, 2, 0)
        assert all(type(c) is int for c in fp.counts)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Fingerprint((1, -1))

    def test_zero_detection(self):
        assert Fingerprint((0, 0)).is_zero
        assert not Fingerprint((0, 1)).is_zero

    def test_array_roundtrip(self):
        fp = Fingerprint.from_array(np.array([3, 0, 1]))
        assert fp.counts == (3, 0, 1)
        assert fp.as_array().dtype == np.int64


class TestStructure:
    def test_equality_ignores_label(self):
        a = Structure(Fingerprint((1, 2)), label="a")
        b = Structure(Fingerprint((1, 2)), label="b")
        c = Structure(Fingerprint((2, 1)))
        assert a == b and hash(a) == hash(b)
        assert a != c


class TestDatasetBest:
    def test_max_of_list(self):
        data = [ev((1, 0), 1.0), ev((0, 1), 3.5), ev((1, 1), 2.0)]
        assert dataset_best(data) == 3.5

    def test_singleton(self):
        assert dataset_best([ev((1, 0), -2.0)]) == -2.0

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="no incumbent"):
            dataset_best([])


class TestDataset:
    def test_rejects_zero_fingerprint(self):
        with pytest.raises(ValueError, match="zero fingerprint"):
            Dataset().append(ev((0, 0), 1.0))

    def test_duplicates_allowed(self):
        ds = Dataset()
        ds.append(ev((1, 0), 1.0))
        ds.append(ev((1, 0), 1.0))
        assert len(ds) == 2

    def test_best_monotone_under_appends(self):
        gen = derive_stream(5, 0).generator()
        ds = Dataset()
        best = -np.inf
        for i in range(50):
            ds.append(ev((1, int(gen.integers(0, 4))), float(gen.standard_normal())))
            best = max(best, ds[-1].y)
            assert ds.best() == best

    def test_non_finite_y_rejected(self):
        with pytest.raises(ValueError):
            ev((1, 0), float("nan"))
        with pytest.raises(ValueError):
            ev((1, 0), float("inf"))


class TestStreams:
    def test_distinct_ids_differ(self):
        a = derive_stream(42, 0).generator().standard_normal(4)
        b = derive_stream(42, 1).generator().standard_normal(4)
        assert not np.allclose(a, b)

    def test_replay_identical(self):
        a = derive_stream(42, 0).generator().standard_normal(1000)
        b = derive_stream(42, 0).generator().standard_normal(1000)
        assert np.array_equal(a, b)

    def test_master_seed_sensitivity(self):
        a = derive_stream(42, 7).generator().standard_normal(8)
        b = derive_stream(43, 7).generator().standard_normal(8)
        assert not np.allclose(a, b)

    def test_derivation_is_independent_and_stable(self):
        base = derive_stream(1, 2)
        x = base.derive(3).generator().standard_normal(8)
        y = base.derive(4).generator().standard_normal(8)
        assert not np.allclose(x, y)
        assert np.array_equal(x, base.derive(3).generator().standard_normal(8))


class TestRunConfig:
    def kwargs(self, **over):
        base = dict(
            seed=0, latent_dim=4, fingerprint_len=8, budget=10, init_size=3
        )
        base.update(over)
        return base

    def test_chain_defaults_follow_batch_size(self):
        assert RunConfig(**self.kwargs(batch_size=1)).resolved_chains == 1
        assert RunConfig(**self.kwargs(batch_size=6)).resolved_chains == 50
        assert RunConfig(**self.kwargs(batch_size=6, chains=7)).resolved_chains == 7

    def test_adaptation_defaults(self):
        cfg = RunConfig(**self.kwargs())
        assert (cfg.beta_init, cfg.target_accept, cfg.adapt_gain) == (0.1, 0.243, 0.1)
        assert cfg.steps == 100

    @pytest.mark.parametrize(
        "bad",
        [
            dict(init_size=0),
            dict(init_size=11),
            dict(batch_size=0),
            dict(acceptance_mode="bogus"),
            dict(beta_init=0.0),
            dict(beta_init=1.0),
            dict(target_accept=1.5),
            dict(adapt_gain=0.0),
            dict(perturb_prob=1.5),
            dict(workers=0),
        ],
    )
    def test_invalid_configs_rejected(self, bad):
        with pytest.raises(ValueError):
            RunConfig(**self.kwargs(**bad))

    def test_budget_equal_to_init_allowed(self):
        # degenerate budget: optimisation phase empty, pure prior sampling
        cfg = RunConfig(**self.kwargs(init_size=10))
        assert cfg.init_size == cfg.budget
