"""
Unit tests for triplet sampling, the three-term loss, its gradient and training.
"""

import math

import numpy as np
import pytest

from augmanifold.encoder import EncoderParams, encode, forward, init_params, zero_params
from augmanifold.errors import ConfigurationError, TrainingError
from augmanifold.manifolds import generate_dataset, torus
from augmanifold.objective import (
    TRAJECTORY_COLUMNS,
    LossConfig,
    TripletBatch,
    default_architecture,
    epoch_batches,
    gram_singular_values,
    invariance_ratio,
    loss,
    loss_gradient,
    sample_triplets,
    train,
)


def oracle_loss(params: EncoderParams, batch: TripletBatch, lambda1: float, lambda2: float) -> float:
    def represent(x):
        h = (np.asarray(x) - params.input_shift) / params.input_scale
        for layer, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
            h = w @ h + b
            if layer < len(params.weights) - 1:
                h = np.tanh(h)
        return h * params.output_scale

    za = [represent(x) for x in batch.anchors]
    zp = [represent(x) for x in batch.positives]
    zn = [represent(x) for x in batch.negatives]
    scale = batch.sample_scale
    unsup = scale * sum(w * float(np.sum((a - n) ** 2)) for w, a, n in zip(batch.neg_weights, za, zn, strict=True))
    selfsup = lambda1 * scale * sum(float(np.sum((a - p) ** 2)) for a, p in zip(za, zp, strict=True))
    dim = len(za[0])
    reg = 0.0
    for l1 in range(dim):
        for l2 in range(l1, dim):
            gram = scale * sum(z[l1] * z[l2] for z in za)
            reg += (gram - (1.0 if l1 == l2 else 0.0)) ** 2
    return unsup + selfsup + lambda2 * reg


def random_batch(rng, size: int, dim: int, sample_scale: float = 1.0) -> TripletBatch:
    return TripletBatch(
        anchors=rng.normal(size=(size, dim)),
        positives=rng.normal(size=(size, dim)),
        negatives=rng.normal(size=(size, dim)),
        neg_weights=rng.uniform(0.1, 1.0, size),
        sample_scale=sample_scale,
    )


def finite_difference_check(params, batch, cfg, components, rng, coordinates=100):
    analytic = loss_gradient(params, batch, cfg, components).flat()
    base = params.flat()
    picked = rng.choice(len(base), size=min(coordinates, len(base)), replace=False)

    def value(vector):
        parts = loss(params.with_flat(vector), batch, cfg)
        return sum(getattr(parts, name) for name in components)

    h = 1e-5
    numeric = np.empty(len(picked))
    for slot, i in enumerate(picked):
        step = np.zeros_like(base)
        step[i] = h
        numeric[slot] = (value(base + step) - value(base - step)) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    np.testing.assert_allclose(analytic[picked], numeric, rtol=1e-5, atol=1e-7 * scale)


class TestSampleTriplets:
    """Seeded triplet sub-sampling"""

    def test_two_samples(self):
        """With m=2 the negative is always the other sample"""
        dataset = generate_dataset(torus(), 2, 2, seed=0)
        for epoch in range(5):
            for batch in epoch_batches(dataset, 2, 10.0, seed=1, epoch=epoch):
                np.testing.assert_array_equal(batch.negative_index, 1 - batch.anchor_index)

    def test_epoch_covers_each_anchor_once(self, small_torus):
        """One sweep uses every sample exactly once as anchor"""
        anchors = np.concatenate([b.anchor_index for b in epoch_batches(small_torus, 16, 20.0, seed=2)])
        np.testing.assert_array_equal(np.sort(anchors), np.arange(small_torus.m))

    def test_remainder_joins_last_batch(self, small_torus):
        """60 samples in batches of 16 give 16, 16 and 28 anchors, each scaled by its own size"""
        batches = list(epoch_batches(small_torus, 16, 20.0, seed=2))
        assert [b.size for b in batches] == [16, 16, 28]
        assert [b.sample_scale for b in batches] == [60 / 16, 60 / 16, 60 / 28]

    def test_batch_larger_than_sample(self, small_torus):
        """A batch size above m gives one batch holding every sample"""
        batches = list(epoch_batches(small_torus, 100, 20.0, seed=2))
        assert [b.size for b in batches] == [60]
        assert batches[0].sample_scale == 1.0

    def test_views_and_weights(self, small_torus):
        """Positives are other views; negative weights follow the Gaussian kernel"""
        batch = sample_triplets(small_torus, 30, 20.0, seed=3)
        assert not np.any(np.all(batch.anchors == batch.positives, axis=1))
        assert np.all(batch.negative_index != batch.anchor_index)
        expected = np.exp(-np.sum((batch.anchors - batch.negatives) ** 2, axis=1) / 20.0)
        np.testing.assert_allclose(batch.neg_weights, expected, rtol=1e-14)
        assert batch.sample_scale == small_torus.m / 30

    def test_deterministic(self, small_torus):
        """Same seed gives the same triplets"""
        a = sample_triplets(small_torus, 10, 20.0, seed=4)
        b = sample_triplets(small_torus, 10, 20.0, seed=4)
        np.testing.assert_array_equal(a.anchors, b.anchors)
        np.testing.assert_array_equal(a.negatives, b.negatives)

    def test_negative_weight_mean(self):
        """Mean sampled weight matches the exhaustive off-diagonal view average"""
        dataset = generate_dataset(torus(), 50, 3, seed=8)
        t = 40.0
        draws = np.concatenate(
            [b.neg_weights for epoch in range(200) for b in epoch_batches(dataset, 50, t, seed=9, epoch=epoch)]
        )
        assert len(draws) == 10_000
        flat = dataset.points.reshape(-1, 3)
        sq = np.sum((flat[:, None, :] - flat[None, :, :]) ** 2, axis=-1)
        owner = np.repeat(np.arange(50), 3)
        exhaustive = np.exp(-sq / t)[owner[:, None] != owner[None, :]].mean()
        sigma = np.std(draws) / math.sqrt(len(draws))
        assert abs(draws.mean() - exhaustive) < 3 * sigma

    def test_needs_two_views(self):
        """n < 2 names the self-supervised term"""
        dataset = generate_dataset(torus(), 10, 1, seed=0)
        with pytest.raises(ConfigurationError, match="self-supervised"):
            sample_triplets(dataset, 4, 1.0, seed=0)

    def test_batch_too_large(self, small_torus):
        """A batch cannot exceed the sample count"""
        with pytest.raises(ConfigurationError):
            sample_triplets(small_torus, 61, 1.0, seed=0)


class TestLoss:
    """Three-term objective"""

    def test_constant_map(self, rng):
        """A constant encoder with lambda2 = 0 has zero loss"""
        params = zero_params((3, 4, 2))
        params = params.with_flat(np.concatenate([np.zeros(params.size - 2), [0.3, -0.2]]))
        value = loss(params, random_batch(rng, 5, 3), LossConfig(lambda2=0.0))
        assert value.total == 0.0

    def test_identity_gram(self):
        """A batch whose scaled Gram is the identity has no regularization"""
        params = EncoderParams((2, 2), (np.eye(2),), (np.zeros(2),), np.zeros(2), activation="identity")
        eye = np.eye(2)
        batch = TripletBatch(anchors=eye, positives=eye, negatives=eye[::-1], neg_weights=np.ones(2))
        assert loss(params, batch, LossConfig()).reg == 0.0

    def test_matches_oracle(self, rng):
        """Equals a straight-line evaluation of the three sums"""
        params = init_params((3, 6, 2), seed=11)
        batch = random_batch(rng, 5, 3, sample_scale=4.0)
        cfg = LossConfig(lambda1=2.5, lambda2=0.75)
        assert loss(params, batch, cfg).total == pytest.approx(oracle_loss(params, batch, 2.5, 0.75), rel=1e-12)

    def test_components_add_up(self, rng):
        """Total is the sum of non-negative components"""
        params = init_params((3, 6, 2), seed=12)
        value = loss(params, random_batch(rng, 8, 3), LossConfig())
        assert min(value.unsup, value.selfsup, value.reg) >= 0
        assert value.total == pytest.approx(value.unsup + value.selfsup + value.reg, abs=1e-12)
        assert set(value.as_row()) == {"total", "unsup", "selfsup", "reg"}

    def test_halves_estimate_the_whole(self, rng):
        """Two half batches scaled by 2 average to the distance terms of the whole batch"""
        params = init_params((3, 6, 2), seed=14)
        whole = random_batch(rng, 8, 3)

        def half(rows):
            return TripletBatch(
                anchors=whole.anchors[rows],
                positives=whole.positives[rows],
                negatives=whole.negatives[rows],
                neg_weights=whole.neg_weights[rows],
                sample_scale=2.0,
            )

        cfg = LossConfig()
        parts = [loss(params, half(rows), cfg) for rows in (slice(0, 4), slice(4, 8))]
        full = loss(params, whole, cfg)
        assert np.mean([p.unsup for p in parts]) == pytest.approx(full.unsup, rel=1e-12)
        assert np.mean([p.selfsup for p in parts]) == pytest.approx(full.selfsup, rel=1e-12)

    def test_encode_matches_loss_internals(self, rng):
        """The forward pass used by the loss is the public encoder"""
        params = init_params((3, 6, 2), seed=13)
        batch = random_batch(rng, 4, 3)
        stacked, _ = forward(params, np.concatenate([batch.anchors, batch.positives, batch.negatives]))
        np.testing.assert_allclose(stacked[:4], encode(params, batch.anchors), rtol=1e-14)


class TestLossGradient:
    """Analytic gradient"""

    @pytest.mark.parametrize("component", ["unsup", "selfsup", "reg"])
    def test_each_component(self, rng, component):
        """Each component matches central finite differences"""
        params = init_params((3, 8, 8, 2), seed=21, output_scale=0.5)
        batch = random_batch(rng, 4, 3, sample_scale=2.0)
        finite_difference_check(params, batch, LossConfig(lambda1=1.5, lambda2=0.5), (component,), rng)

    @pytest.mark.parametrize("seed", range(5))
    def test_total_at_default_weights(self, rng, seed):
        """The full loss with default lambdas matches finite differences"""
        params = init_params((3, 8, 8, 2), seed=seed, output_scale=0.3)
        batch = random_batch(rng, 4, 3, sample_scale=1.5)
        finite_difference_check(params, batch, LossConfig(), ("unsup", "selfsup", "reg"), rng)

    def test_additivity(self, rng):
        """Component gradients sum to the full gradient"""
        params = init_params((3, 5, 2), seed=22)
        batch = random_batch(rng, 6, 3)
        cfg = LossConfig()
        parts = [loss_gradient(params, batch, cfg, (name,)).flat() for name in ("unsup", "selfsup", "reg")]
        np.testing.assert_allclose(sum(parts), loss_gradient(params, batch, cfg).flat(), rtol=1e-10, atol=1e-12)

    def test_zero_lambdas(self, rng):
        """lambda1 = lambda2 = 0 leaves the unsupervised gradient"""
        params = init_params((3, 5, 2), seed=23)
        batch = random_batch(rng, 6, 3)
        cfg = LossConfig(lambda1=0.0, lambda2=0.0)
        np.testing.assert_allclose(
            loss_gradient(params, batch, cfg).flat(), loss_gradient(params, batch, cfg, ("unsup",)).flat(), rtol=1e-14
        )

    def test_zero_network(self, rng):
        """All-zero weights give a zero gradient"""
        params = zero_params((3, 4, 2))
        np.testing.assert_array_equal(loss_gradient(params, random_batch(rng, 5, 3), LossConfig()).flat(), 0.0)

    def test_unknown_component(self, rng):
        """Unknown component names are rejected"""
        with pytest.raises(ConfigurationError):
            loss_gradient(zero_params((3, 2)), random_batch(rng, 2, 3), LossConfig(), ("contrastive",))


class TestTrain:
    """Mini-batch SGD"""

    @pytest.fixture(scope="class")
    def dataset(self):
        return generate_dataset(torus(), 40, 3, seed=31)

    def test_zero_learning_rate(self, dataset):
        """No step size leaves the initial parameters"""
        cfg = LossConfig(bandwidth_t=20.0, batch_size=10, learning_rate=0.0, epochs=3)
        arch = default_architecture(3, 2, (8,))
        result = train(dataset, arch, cfg)
        initial = train(dataset, arch, LossConfig(bandwidth_t=20.0, batch_size=10, learning_rate=0.0, epochs=0))
        np.testing.assert_array_equal(result.params.flat(), initial.params.flat())

    def test_deterministic(self, dataset):
        """Same seed gives identical final parameters"""
        cfg = LossConfig(bandwidth_t=20.0, batch_size=10, epochs=3, seed=5)
        arch = default_architecture(3, 2, (8,))
        np.testing.assert_array_equal(train(dataset, arch, cfg).params.flat(), train(dataset, arch, cfg).params.flat())

    def test_trajectory(self, dataset):
        """One row for the initial loss plus one per epoch"""
        cfg = LossConfig(bandwidth_t=20.0, batch_size=10, epochs=4)
        trajectory = train(dataset, default_architecture(3, 2, (8,)), cfg).trajectory
        assert list(trajectory.columns) == TRAJECTORY_COLUMNS
        assert trajectory["epoch"].tolist() == [0, 1, 2, 3, 4]
        np.testing.assert_allclose(
            trajectory["total"], trajectory[["unsup", "selfsup", "reg"]].sum(axis=1), rtol=1e-12
        )

    def test_divergence(self, dataset):
        """An absurd learning rate raises a training error with its epoch"""
        cfg = LossConfig(bandwidth_t=20.0, batch_size=10, learning_rate=1e6, epochs=20)
        with pytest.raises(TrainingError) as excinfo:
            train(dataset, default_architecture(3, 2, (8,)), cfg)
        assert excinfo.value.epoch >= 1

    def test_default_rate_is_stable(self):
        """The default learning rate lowers the loss of the default torus encoder"""
        dataset = generate_dataset(torus(), 200, 3, seed=33)
        cfg = LossConfig(bandwidth_t=25.0, epochs=5, seed=34)
        trajectory = train(dataset, default_architecture(3, 2), cfg).trajectory
        assert np.all(np.isfinite(trajectory["total"]))
        assert trajectory["total"].iloc[-1] < trajectory["total"].iloc[0]

    def test_architecture_must_match(self, dataset):
        """The first layer must take the ambient dimension"""
        with pytest.raises(ConfigurationError):
            train(dataset, (4, 8, 2), LossConfig(epochs=1))

    @pytest.mark.parametrize(
        "kwargs", [{"lambda1": -1.0}, {"batch_size": 0}, {"epochs": -1}, {"lr_decay": 0.0}, {"bandwidth_t": 0.0}]
    )
    def test_config_validation(self, kwargs):
        """Out-of-range settings are rejected"""
        with pytest.raises(ConfigurationError):
            LossConfig(**kwargs)


@pytest.mark.slow
class TestTorusTraining:
    """Encoder behaviour on the torus protocol"""

    def test_invariance_pressure(self):
        """Default training reaches a held-out invariance ratio below 0.3 without collapse"""
        dataset = generate_dataset(torus(), 400, 3, seed=41)
        held_out = generate_dataset(torus(), 400, 3, seed=42)
        cfg = LossConfig(bandwidth_t=25.0, epochs=200, seed=43)
        arch = default_architecture(3, 2)
        batch = sample_triplets(held_out, 400, cfg.bandwidth_t, seed=44)

        result = train(dataset, arch, cfg)
        start = train(dataset, arch, LossConfig(bandwidth_t=25.0, epochs=0, seed=43)).params

        assert result.trajectory["total"].iloc[-1] < result.trajectory["total"].iloc[0]
        trained = invariance_ratio(result.params, batch)
        assert trained < invariance_ratio(start, batch)
        assert trained < 0.3
        assert gram_singular_values(result.params, batch.anchors, held_out.m).min() >= 0.1
