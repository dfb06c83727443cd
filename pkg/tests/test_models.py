import numpy as np
import pytest

from aspire_ease.errors import InputError
from aspire_ease.models import (
    LabeledDataset,
    ModelParams,
    ModelSpec,
    init_params,
    local_grad,
    local_loss,
    sample_batch,
    softmax_cross_entropy,
)

from oracles import finite_difference, rel_err

LN2 = 0.6931471805599453
LN3 = 1.0986122886681098


def random_dataset(rng, n=8, d=4, c=3, worker=0):
    feats = rng.normal(size=(n, d))
    labels = rng.integers(0, c, size=n)
    return LabeledDataset(feats, labels, worker_id=worker)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_ln_c(self):
        assert softmax_cross_entropy(np.zeros(3), 0) == pytest.approx(LN3, abs=1e-12)

    def test_saturated_correct_class(self):
        assert softmax_cross_entropy(np.array([100.0, 0.0, 0.0]), 0) <= 1e-6

    def test_known_value(self):
        # -log(e^3 / (e^1 + e^2 + e^3)), evaluated at 50 digits and frozen
        got = softmax_cross_entropy(np.array([1.0, 2.0, 3.0]), 2)
        assert got == pytest.approx(0.4076059644443803, abs=1e-14)

    def test_label_out_of_range(self):
        with pytest.raises(InputError):
            softmax_cross_entropy(np.zeros(3), 3)

    def test_stability_for_large_logits(self):
        val = softmax_cross_entropy(np.array([1e4, 0.0]), 1)
        assert np.isfinite(val) and val >= 0


class TestLocalLoss:
    def test_zero_weights_binary_single_sample(self):
        spec = ModelSpec("logistic", 2, 2)
        data = LabeledDataset(np.array([[0.3, -0.1]]), np.array([1]))
        assert local_loss(np.zeros(spec.param_count), spec, data) == pytest.approx(
            LN2, abs=1e-12
        )

    def test_duplication_invariance(self):
        rng = np.random.default_rng(0)
        spec = ModelSpec("logistic", 4, 3)
        data = random_dataset(rng)
        params = init_params(spec, rng)
        doubled = LabeledDataset(
            np.concatenate([data.features, data.features]),
            np.concatenate([data.labels, data.labels]),
        )
        assert local_loss(params, spec, data) == pytest.approx(
            local_loss(params, spec, doubled), abs=1e-12
        )

    def test_mean_of_per_sample_losses(self):
        rng = np.random.default_rng(1)
        spec = ModelSpec("logistic", 4, 3)
        data = random_dataset(rng, n=5)
        params = init_params(spec, rng)
        per_sample = [
            local_loss(params, spec, data, batch=[i]) for i in range(5)
        ]
        assert local_loss(params, spec, data) == pytest.approx(
            float(np.mean(per_sample)), abs=1e-12
        )

    def test_shape_mismatch(self):
        spec = ModelSpec("logistic", 4, 3)
        data = LabeledDataset(np.zeros((2, 3)), np.array([0, 1]))
        with pytest.raises(InputError):
            local_loss(np.zeros(spec.param_count), spec, data)

    def test_nonnegative_and_finite(self):
        rng = np.random.default_rng(2)
        spec = ModelSpec("mlp", 4, 3, hidden=(6,))
        data = random_dataset(rng)
        for _ in range(20):
            params = init_params(spec, rng, scale=2.0)
            val = local_loss(params, spec, data)
            assert np.isfinite(val) and val >= 0


class TestLocalGrad:
    @pytest.mark.parametrize("kind,hidden", [("logistic", ()), ("mlp", (6, 5))])
    def test_matches_finite_differences(self, kind, hidden):
        rng = np.random.default_rng(3)
        spec = ModelSpec(kind, 4, 3, hidden=hidden)
        for _ in range(10):
            data = random_dataset(rng, n=6)
            params = init_params(spec, rng, scale=0.5)
            analytic = local_grad(params, spec, data)
            fd = finite_difference(lambda v: local_loss(v, spec, data), params)
            assert rel_err(analytic, fd) <= 1e-4

    def test_single_sample_equals_batch_of_one(self):
        rng = np.random.default_rng(4)
        spec = ModelSpec("logistic", 4, 3)
        data = random_dataset(rng, n=1)
        params = init_params(spec, rng)
        full = local_grad(params, spec, data)
        batched = local_grad(params, spec, data, batch=[0])
        np.testing.assert_array_equal(full, batched)

    def test_disjoint_batches_average_to_full(self):
        rng = np.random.default_rng(5)
        spec = ModelSpec("logistic", 4, 3)
        data = random_dataset(rng, n=8)
        params = init_params(spec, rng)
        parts = [
            local_grad(params, spec, data, batch=list(range(i, i + 2)))
            for i in range(0, 8, 2)
        ]
        np.testing.assert_allclose(
            np.mean(parts, axis=0), local_grad(params, spec, data), atol=1e-12
        )

    def test_empty_batch_rejected(self):
        rng = np.random.default_rng(6)
        spec = ModelSpec("logistic", 4, 3)
        data = random_dataset(rng)
        with pytest.raises(InputError):
            local_grad(np.zeros(spec.param_count), spec, data, batch=[])


def test_minibatch_unbiasedness_exact():
    # mean over every m-subset of the subset losses equals the full loss
    from itertools import combinations

    rng = np.random.default_rng(7)
    spec = ModelSpec("logistic", 3, 2)
    data = random_dataset(rng, n=5, d=3, c=2)
    params = init_params(spec, rng)
    subsets = list(combinations(range(5), 2))
    mean_sub = np.mean([
        local_loss(params, spec, data, batch=list(s)) for s in subsets
    ])
    assert mean_sub == pytest.approx(local_loss(params, spec, data), abs=1e-12)


class TestSampleBatch:
    def test_full_batch_is_identity_set(self):
        idx = sample_batch(5, 5, 0)
        assert sorted(idx) == [0, 1, 2, 3, 4]

    def test_same_seed_same_draw(self):
        np.testing.assert_array_equal(sample_batch(10, 4, 123), sample_batch(10, 4, 123))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(8)
        counts = np.zeros(4)
        draws = 100_000
        for _ in range(draws):
            counts[sample_batch(4, 2, rng)] += 1
        freqs = counts / draws
        assert np.all(np.abs(freqs - 0.5) <= 0.01)

    def test_oversized_batch_rejected(self):
        with pytest.raises(InputError):
            sample_batch(3, 4, 0)


class TestTypes:
    def test_dataset_invariants(self):
        with pytest.raises(InputError):
            LabeledDataset(np.zeros((0, 3)), np.zeros(0, dtype=int))
        with pytest.raises(InputError):
            LabeledDataset(np.array([[np.inf, 0.0]]), np.array([0]))
        with pytest.raises(InputError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, -1]))

    def test_model_spec_invariants(self):
        with pytest.raises(InputError):
            ModelSpec("logistic", 4, 3, hidden=(5,))
        with pytest.raises(InputError):
            ModelSpec("mlp", 4, 3)
        with pytest.raises(InputError):
            ModelSpec("logistic", 4, 1)

    def test_params_length_checked(self):
        spec = ModelSpec("logistic", 4, 3)
        ModelParams(np.zeros(spec.param_count), spec)
        with pytest.raises(InputError):
            ModelParams(np.zeros(spec.param_count + 1), spec)
        with pytest.raises(InputError):
            ModelParams(np.full(spec.param_count, np.nan), spec)

    def test_param_count(self):
        assert ModelSpec("logistic", 4, 3).param_count == 4 * 3 + 3
        assert ModelSpec("mlp", 4, 3, hidden=(6,)).param_count == (4 * 6 + 6) + (6 * 3 + 3)
