import numpy as np
import pytest

from oracles import conv2d_naive, maxpool_naive

from prunekit import archspec
from prunekit.archspec import LayerDef, assemble
from prunekit.errors import BoundsError, StructureError, TrainingDiverged
from prunekit.nncore import (
    Network,
    TrainConfig,
    evaluate,
    gradient_check,
    lr_for_epoch,
    softmax,
    train,
)
from prunekit.nncore.layers import BatchNorm, Conv, MaxPool
from prunekit.nncore.model import cross_entropy


def small_conv_template(**kwargs):
    defs = [
        LayerDef("conv", out_channels=2, kernel=3, padding=1),
        LayerDef("batchnorm"),
        LayerDef("activation"),
        LayerDef("pool", kernel=2, stride=2),
        LayerDef("classifier-head"),
    ]
    return assemble("small", (1, 4, 4), 3, defs, **kwargs)


def separable_toy_set(n=200, seed=0):
    """Two well-separated constant-offset classes; linearly separable."""
    rng = np.random.default_rng(seed)
    images = np.zeros((n, 1, 4, 4), dtype=np.float32)
    labels = (np.arange(n) % 2).astype(np.int64)
    offsets = np.where(labels == 0, -1.5, 1.5)
    images += offsets[:, None, None, None]
    images += 0.3 * rng.normal(size=images.shape).astype(np.float32)
    return images, labels


def toy_template():
    return assemble("toy", (1, 4, 4), 2, [
        LayerDef("conv", out_channels=4, kernel=3, padding=1),
        LayerDef("activation"),
        LayerDef("pool", kernel=2, stride=2),
        LayerDef("classifier-head"),
    ])


class TestForward:
    def test_zero_weights_give_zero_logits(self):
        t = toy_template()
        net = Network(t, seed=0)
        for arr in net.params().values():
            arr[...] = 0.0
        x = np.random.default_rng(0).normal(size=(3, 1, 4, 4)).astype(np.float32)
        assert np.all(net.forward(x) == 0.0)

    def test_identity_one_by_one_conv(self):
        defs = [LayerDef("conv", out_channels=1, kernel=1, bias=False)]
        t = assemble("id", (1, 3, 3), 2, defs, prunable_slots=())
        net = Network(t, seed=0)
        net.params()["layer00.weight"][...] = 1.0
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        out = net.forward(x)
        assert np.array_equal(out, x)

    def test_matches_naive_conv_pool_oracle(self):
        t = assemble("c", (2, 6, 6), 3, [
            LayerDef("conv", out_channels=3, kernel=3, stride=1, padding=1),
            LayerDef("pool", kernel=2, stride=2),
            LayerDef("classifier-head", bias=False),
        ])
        net = Network(t, seed=5).astype(np.float64)
        x = np.random.default_rng(2).normal(size=(2, 2, 6, 6))
        w = net.params()["layer00.weight"]
        b = net.params()["layer00.bias"]
        ref = conv2d_naive(x, w, b, stride=1, padding=1)
        ref = maxpool_naive(ref, kernel=2, stride=2)
        ref = ref.reshape(2, -1) @ net.params()["layer02.weight"].T
        got = net.forward(x)
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-12)

    def test_shape_mismatch_raises(self):
        net = Network(toy_template(), seed=0)
        with pytest.raises(StructureError):
            net.forward(np.zeros((2, 3, 4, 4), dtype=np.float32))

    def test_capture_returns_post_activation_maps(self):
        t = archspec.tiny4(num_classes=4)
        net = Network(t, seed=0)
        x = np.random.default_rng(0).normal(size=(2, 3, 16, 16)).astype(np.float32)
        _, captured = net.forward(x, capture=True)
        assert sorted(captured) == list(t.prunable_slots)
        for slot in t.prunable_slots:
            assert captured[slot].shape[1] == t.layers[slot].out_channels
            assert captured[slot].min() >= 0.0  # ReLU output


class TestSoftmaxAndLoss:
    def test_probabilities_sum_to_one(self):
        logits = np.random.default_rng(0).normal(size=(64, 10)) * 5
        p = softmax(logits)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_cross_entropy_of_uniform_logits(self):
        logits = np.zeros((4, 10))
        labels = np.array([0, 3, 5, 9])
        loss, grad = cross_entropy(logits, labels)
        assert loss == pytest.approx(np.log(10))
        assert grad.shape == (4, 10)


class TestEvaluate:
    def test_constant_predictor_on_balanced_set(self):
        t = toy_template()
        net = Network(t, seed=0)
        for arr in net.params().values():
            arr[...] = 0.0  # argmax ties resolve to class 0
        n = 50
        images = np.random.default_rng(0).normal(size=(n, 1, 4, 4)).astype(np.float32)
        labels = (np.arange(n) % 2).astype(np.int64)
        assert evaluate(net, images, labels) == pytest.approx(0.5)

    def test_two_of_three_correct(self):
        class Stub:
            def predict_logits(self, x, batch_size=256):
                return np.array([[1.0, 0], [1.0, 0], [0, 1.0]])
        acc = evaluate(Stub(), np.zeros((3, 1, 1, 1)), np.array([0, 0, 0]))
        assert acc == pytest.approx(2 / 3)

    def test_empty_set_rejected(self):
        net = Network(toy_template(), seed=0)
        with pytest.raises(ValueError):
            evaluate(net, np.zeros((0, 1, 4, 4), dtype=np.float32), np.zeros(0, dtype=np.int64))


class TestTrainConfig:
    def test_rejects_fraction_at_one(self):
        with pytest.raises(BoundsError):
            TrainConfig(lr_drops=((1.0, 10.0),))

    def test_rejects_non_increasing_fractions(self):
        with pytest.raises(BoundsError):
            TrainConfig(lr_drops=((0.5, 10.0), (0.5, 10.0)))

    def test_rejects_factor_of_one(self):
        with pytest.raises(BoundsError):
            TrainConfig(lr_drops=((0.5, 1.0),))

    def test_lr_drops_at_half_and_three_quarters(self):
        cfg = TrainConfig(epochs=160, initial_lr=0.1)
        assert lr_for_epoch(cfg, 0) == 0.1
        assert lr_for_epoch(cfg, 79) == 0.1
        assert lr_for_epoch(cfg, 80) == pytest.approx(0.01)
        assert lr_for_epoch(cfg, 119) == pytest.approx(0.01)
        assert lr_for_epoch(cfg, 120) == pytest.approx(0.001)

    def test_short_horizon_starts_at_initial_rate(self):
        cfg = TrainConfig(epochs=1, initial_lr=0.1)
        assert lr_for_epoch(cfg, 0) == 0.1


class TestTrain:
    def test_zero_epochs_leave_model_unchanged(self):
        images, labels = separable_toy_set()
        net = Network(toy_template(), seed=1)
        before = {k: v.copy() for k, v in net.params().items()}
        history = train(net, images, labels, images, labels,
                        TrainConfig(epochs=0, seed=0))
        assert history == []
        for k, v in net.params().items():
            assert np.array_equal(v, before[k])

    def test_separable_set_reaches_high_accuracy(self):
        images, labels = separable_toy_set()
        net = Network(toy_template(), seed=11)
        cfg = TrainConfig(epochs=20, batch_size=32, initial_lr=0.05,
                          lr_drops=(), weight_decay=0.0, seed=0)
        history = train(net, images, labels, images, labels, cfg)
        assert history[-1].test_accuracy >= 0.95

    def test_pure_decay_step_scales_weights(self):
        # zero input makes the data gradient of a bias-free linear layer
        # exactly zero, so a single step applies only the decay term:
        # w <- w * (1 - lr * lam)
        defs = [LayerDef("classifier-head", bias=False)]
        t = assemble("lin", (1, 1, 1), 2, defs)
        net = Network(t, seed=3)
        w0 = net.params()["layer00.weight"].copy()
        lr, lam = 0.1, 0.01
        images = np.zeros((4, 1, 1, 1), dtype=np.float32)
        labels = np.zeros(4, dtype=np.int64)
        cfg = TrainConfig(epochs=1, batch_size=4, initial_lr=lr, lr_drops=(),
                          momentum=0.0, weight_decay=lam, seed=0, loss="mse")
        train(net, images, labels, images, labels, cfg)
        np.testing.assert_allclose(net.params()["layer00.weight"],
                                   w0 * (1 - lr * lam), rtol=1e-6)

    def test_loss_decreases_over_first_five_full_batch_steps(self):
        images, labels = separable_toy_set(n=64)
        net = Network(toy_template(), seed=5)
        cfg = TrainConfig(epochs=5, batch_size=64, initial_lr=0.01,
                          lr_drops=(), weight_decay=0.0, seed=0)
        history = train(net, images, labels, images, labels, cfg)
        losses = [h.train_loss for h in history]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_identical_seeds_give_bitwise_identical_traces(self):
        images, labels = separable_toy_set()
        cfg = TrainConfig(epochs=6, batch_size=32, seed=42)
        runs = []
        for _ in range(2):
            net = Network(toy_template(), seed=7)
            runs.append(train(net, images, labels, images, labels, cfg))
        a, b = runs
        assert [(s.train_loss, s.test_accuracy) for s in a] == \
               [(s.train_loss, s.test_accuracy) for s in b]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss_aborts_with_batch_index(self):
        images, labels = separable_toy_set(n=64)
        net = Network(toy_template(), seed=2)
        # absurd lr forces divergence within a few batches
        cfg = TrainConfig(epochs=50, batch_size=16, initial_lr=1e6,
                          lr_drops=(), seed=0)
        with pytest.raises(TrainingDiverged) as err:
            train(net, images, labels, images, labels, cfg)
        assert err.value.batch_index >= 0

    def test_trace_csv_has_header_and_rows(self, tmp_path):
        images, labels = separable_toy_set(n=64)
        net = Network(toy_template(), seed=2)
        path = tmp_path / "trace.csv"
        cfg = TrainConfig(epochs=3, batch_size=32, seed=0)
        train(net, images, labels, images, labels, cfg, trace_path=str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,train_loss,test_accuracy"
        assert len(lines) == 4


class TestGradientCheck:
    def test_linear_layer_quadratic_loss_is_exact(self):
        defs = [LayerDef("classifier-head")]
        t = assemble("lin", (1, 2, 2), 2, defs)
        net = Network(t, seed=5).astype(np.float64)
        x = np.random.default_rng(3).normal(size=(4, 1, 2, 2))
        y = np.array([0, 1, 0, 1])
        assert gradient_check(net, x, y, loss="mse") < 1e-7

    def test_two_conv_net_under_threshold(self):
        defs = [
            LayerDef("conv", out_channels=3, kernel=3, padding=1),
            LayerDef("activation"),
            LayerDef("conv", out_channels=2, kernel=3, padding=1),
            LayerDef("activation"),
            LayerDef("classifier-head"),
        ]
        t = assemble("gc2", (2, 5, 5), 3, defs)
        net = Network(t, seed=7).astype(np.float64)
        x = np.random.default_rng(2).normal(size=(3, 2, 5, 5))
        y = np.array([0, 1, 2])
        assert gradient_check(net, x, y) < 1e-4

    def test_all_layer_kinds_under_threshold(self):
        t = small_conv_template()
        net = Network(t, seed=3).astype(np.float64)
        x = np.random.default_rng(1).normal(size=(4, 1, 4, 4))
        y = np.array([0, 1, 2, 0])
        assert gradient_check(net, x, y) < 1e-4

    def test_zero_epsilon_rejected(self):
        net = Network(toy_template(), seed=0).astype(np.float64)
        x = np.zeros((2, 1, 4, 4))
        with pytest.raises(BoundsError):
            gradient_check(net, x, np.array([0, 1]), epsilon=0)

    def test_single_precision_model_rejected(self):
        net = Network(toy_template(), seed=0)
        with pytest.raises(ValueError):
            gradient_check(net, np.zeros((2, 1, 4, 4)), np.array([0, 1]))


class TestBatchNormSemantics:
    def test_eval_uses_running_statistics(self):
        bn = BatchNorm(3, np.float32)
        rng = np.random.default_rng(0)
        for _ in range(20):
            bn.forward(rng.normal(2.0, 3.0, size=(8, 3, 4, 4)).astype(np.float32), train=True)
        x = rng.normal(2.0, 3.0, size=(64, 3, 4, 4)).astype(np.float32)
        out = bn.forward(x, train=False)
        assert abs(float(out.mean())) < 0.3
        assert abs(float(out.std()) - 1.0) < 0.3

    def test_frozen_stats_mode_does_not_update(self):
        bn = BatchNorm(2, np.float64)
        before = bn.state()["running_mean"].copy()
        bn.forward(np.random.default_rng(0).normal(size=(4, 2, 3, 3)), train=True,
                   update_stats=False)
        assert np.array_equal(bn.state()["running_mean"], before)


class TestDeterministicInit:
    def test_same_seed_same_weights(self):
        t = toy_template()
        a, b = Network(t, seed=9), Network(t, seed=9)
        for ka, kb in zip(a.params().values(), b.params().values()):
            assert np.array_equal(ka, kb)

    def test_different_seed_different_weights(self):
        t = toy_template()
        a, b = Network(t, seed=9), Network(t, seed=10)
        assert any(not np.array_equal(x, y)
                   for x, y in zip(a.params().values(), b.params().values()))
