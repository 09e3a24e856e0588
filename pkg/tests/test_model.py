import numpy as np
import pytest

from iottrust.errors import ContractError, ModelLoadError, TrainingError, TrustDomainError
from iottrust.model import (
    NetworkParameters,
    TrainConfig,
    TrustAssessment,
    TrustLevel,
    assess,
    assess_batch,
    attribute_significance,
    build_network,
    forward,
    input_jacobian,
    load_model,
    loss_and_gradients,
    prune_attributes,
    save_model,
    softmax,
    train,
)

import oracles


def zero_net(sizes):
    return NetworkParameters(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                             [np.zeros(b) for b in sizes[1:]])


def separable_set(n=500, seed=0):
    """Five classes split by the sum of two coordinates."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, 4))
    s = X[:, 0] + X[:, 1]
    y = np.minimum((s / 2 * 5).astype(int), 4)
    return X, y


class TestBuild:
    def test_deterministic(self):
        a, b = build_network([7, 32, 32, 5], 1), build_network([7, 32, 32, 5], 1)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_shapes(self):
        net = build_network([7, 32, 32, 5])
        assert [w.shape for w in net.weights] == [(7, 32), (32, 32), (32, 5)]
        assert [b.shape for b in net.biases] == [(32,), (32,), (5,)]

    @pytest.mark.parametrize("sizes", [[7, 5], [7, 32, 4], [7, 0, 5]])
    def test_rejects(self, sizes):
        with pytest.raises(TrustDomainError):
            build_network(sizes)

    def test_inconsistent_parameters(self):
        with pytest.raises(TrustDomainError):
            NetworkParameters([3, 4, 5], [np.zeros((3, 4)), np.zeros((3, 5))], [np.zeros(4), np.zeros(5)])


class TestForward:
    def test_zero_net_uniform(self):
        np.testing.assert_allclose(forward(zero_net([7, 32, 32, 5]), np.ones(7)), [0.2] * 5)

    def test_three_class_head(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        for seed in range(10):
            net = build_network([7, 32, 32, 5], seed)
            for b in net.biases:
                b[:] = rng.normal(0, 0.2, b.shape)
            x = rng.random(7)
            expected = oracles.forward([w.tolist() for w in net.weights],
                                       [b.tolist() for b in net.biases], x.tolist())
            np.testing.assert_allclose(forward(net, x), expected, rtol=0, atol=1e-12)

    def test_arity(self):
        with pytest.raises(ContractError):
            forward(build_network([7, 8, 5]), np.ones(6))

    def test_batch_matches_single(self):
        net = build_network([4, 8, 5], 2)
        X = np.random.default_rng(0).random((6, 4))
        np.testing.assert_allclose(forward(net, X)[2], forward(net, X[2]), atol=1e-15)


class TestAssess:
    def test_example_probabilities(self):
        a = TrustAssessment.from_probabilities([0.8, 0.15, 0.05, 0.0, 0.0])
        assert a.level is TrustLevel.NotTrusted
        assert a.confidence == 0.8

    def test_uniform_tie_picks_lowest(self):
        a = assess(zero_net([3, 4, 5]), [0.1, 0.2, 0.3])
        assert a.level == 0 and a.confidence == pytest.approx(0.2)
        assert sum(a.probabilities) == pytest.approx(1.0, abs=1e-9)

    def test_confidence_near_one_at_large_gap(self):
        net = zero_net([2, 3, 5])
        net.biases[-1][3] = 20.0
        a = assess(net, [0.0, 0.0])
        assert a.level is TrustLevel.Trusted
        # 1 / (1 + 4 e^-20)
        assert a.confidence == pytest.approx(1 / (1 + 4 * np.exp(-20)), abs=1e-15)
        assert a.confidence > 1 - 1e-8

    def test_level_is_argmax_of_logits(self):
        net = build_network([4, 8, 5], 9)
        X = np.random.default_rng(1).random((50, 4))
        levels, conf, p = assess_batch(net, X)
        z = np.maximum(X @ net.weights[0] + net.biases[0], 0) @ net.weights[1] + net.biases[1]
        np.testing.assert_array_equal(levels, z.argmax(axis=1))
        assert np.all(conf >= 0.2)


class TestGradients:
    def test_against_finite_differences(self):
        for seed in range(5):
            net = build_network([4, 8, 5], seed)
            rng = np.random.default_rng(seed)
            X, y = rng.random((8, 4)), rng.integers(0, 5, 8)
            _, gW, gb = loss_and_gradients(net, X, y)
            analytic = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(gW, gb)])
            numeric = oracles.fd_param_gradients([w.tolist() for w in net.weights],
                                                 [b.tolist() for b in net.biases],
                                                 X.tolist(), y.tolist())
            assert oracles.rel_error(analytic, numeric) < 1e-4

    def test_loss_value(self):
        net = build_network([4, 8, 5], 0)
        X, y = np.random.default_rng(0).random((5, 4)), np.array([0, 1, 2, 3, 4])
        loss, _, _ = loss_and_gradients(net, X, y)
        ref = oracles.cross_entropy([w.tolist() for w in net.weights],
                                    [b.tolist() for b in net.biases], X.tolist(), y.tolist())
        assert loss == pytest.approx(ref, abs=1e-12)


class TestTrain:
    def test_separable_reaches_95(self):
        X, y = separable_set()
        net = build_network([4, 32, 32, 5], 0)
        res = train(net, X, y, TrainConfig(tau=0.0, dropout_p=0.0, max_epochs=500))
        acc = np.mean(assess_batch(res.net, X)[0] == y)
        assert acc >= 0.95
        assert res.loss_history[-1] < res.loss_history[0]

    def test_large_tau_stops_after_one_epoch(self):
        X, y = separable_set(100)
        res = train(build_network([4, 8, 5]), X, y, TrainConfig(tau=1e9))
        assert res.epochs == 1 and res.converged

    def test_zero_tau_runs_all_epochs(self):
        X, y = separable_set(50)
        res = train(build_network([4, 8, 5]), X, y, TrainConfig(tau=0.0, max_epochs=7))
        assert res.epochs == 7 and len(res.loss_history) == 7 and not res.converged

    @pytest.mark.parametrize("p", [0.0, 0.5])
    def test_deterministic(self, p):
        X, y = separable_set(200)
        cfg = TrainConfig(dropout_p=p, max_epochs=5, seed=4)
        a = train(build_network([4, 8, 8, 5], 1), X, y, cfg)
        b = train(build_network([4, 8, 8, 5], 1), X, y, cfg)
        for wa, wb in zip(a.net.weights + a.net.biases, b.net.weights + b.net.biases):
            assert np.array_equal(wa, wb)
        assert np.all(np.isfinite(a.loss_history))

    def test_input_untouched(self):
        net = build_network([4, 8, 5], 0)
        before = net.copy()
        X, y = separable_set(40)
        train(net, X, y, TrainConfig(max_epochs=3))
        assert np.array_equal(net.weights[0], before.weights[0])

    def test_non_finite_loss(self):
        X, y = separable_set(40)
        X[0, 0] = np.nan
        with pytest.raises(TrainingError) as err:
            train(build_network([4, 8, 5]), X, y, TrainConfig(max_epochs=3))
        assert err.value.epoch == 1

    def test_bad_labels(self):
        with pytest.raises(TrustDomainError):
            train(build_network([4, 8, 5]), np.zeros((2, 4)), [0, 5])

    def test_callback_every_epoch(self):
        X, y = separable_set(40)
        seen = []
        train(build_network([4, 8, 5]), X, y, TrainConfig(tau=0, max_epochs=4),
              callback=lambda e, n: seen.append(e))
        assert seen == [1, 2, 3, 4]


class TestSignificance:
    def test_linear_softmax_case(self):
        net = NetworkParameters([2, 2], [np.eye(2)], [np.zeros(2)])
        rep = attribute_significance(net, np.zeros((1, 2)))
        # o1 (1 - o1) w11 at o = (0.5, 0.5)
        assert rep.per_level[0, 0] == pytest.approx(0.25, abs=1e-9)

    def test_dead_input(self):
        net = build_network([3, 8, 5], 0)
        net.weights[0][1] = 0.0
        rep = attribute_significance(net, np.random.default_rng(0).random((20, 3)))
        assert np.all(rep.per_level[1] == 0.0)
        assert rep.per_attribute[1] == 0.0

    def test_against_finite_differences(self):
        rng = np.random.default_rng(11)
        for seed in range(3):
            net = build_network([5, 12, 5], seed)
            X = rng.random((15, 5))
            rep = attribute_significance(net, X)
            fd = oracles.fd_input_sensitivity([w.tolist() for w in net.weights],
                                              [b.tolist() for b in net.biases], X.tolist())
            assert oracles.rel_error(rep.per_level.ravel(), np.ravel(fd)) < 1e-4

    def test_jacobian_rows_sum_to_zero(self):
        net = build_network([4, 8, 5], 3)
        J = input_jacobian(net, np.random.default_rng(0).random((10, 4)))
        np.testing.assert_allclose(J.sum(axis=1), 0.0, atol=1e-15)

    def test_duplicated_column(self):
        net = build_network([3, 8, 5], 0)
        w = net.weights[0]
        tied = NetworkParameters([4, 8, 5], [np.vstack([w, w[2:3]]), net.weights[1]],
                                 [b.copy() for b in net.biases])
        X = np.random.default_rng(2).random((30, 3))
        rep = attribute_significance(tied, np.hstack([X, X[:, 2:3]]))
        np.testing.assert_allclose(rep.per_level[3], rep.per_level[2], rtol=0, atol=1e-15)

    def test_perspectives(self):
        net = build_network([3, 8, 5], 0)
        rep = attribute_significance(net, np.random.default_rng(0).random((10, 3)),
                                     ["owner.a", "owner.b", "device.c"])
        assert rep.perspectives == ["owner", "device"]
        assert rep.per_perspective["owner"] == pytest.approx(rep.per_level[:2].max())
        assert rep.per_perspective["device"] == pytest.approx(rep.per_level[2].max())

    def test_empty(self):
        with pytest.raises(TrustDomainError):
            attribute_significance(build_network([3, 8, 5]), np.zeros((0, 3)))


class TestPrune:
    def test_threshold_zero_keeps_all(self):
        assert prune_attributes([0.0, 0.3, 0.0], 0) == [0, 1, 2]

    def test_never_empty(self):
        assert prune_attributes([0.0, 0.0, 0.0], 0.1) == [0]
        assert prune_attributes([0.01, 0.05, 0.02], 0.1) == [1]

    def test_threshold(self):
        assert prune_attributes([0.9, 0.05, 0.4], 0.1) == [0, 2]


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        net = build_network([7, 32, 32, 5], 5, metadata={"mode": "paper_verbatim"})
        net.biases[0][:] = np.random.default_rng(0).normal(size=32) / 3
        save_model(net, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        for a, b in zip(net.weights + net.biases, back.weights + back.biases):
            assert np.array_equal(a, b)
        assert back.metadata == net.metadata
        x = np.random.default_rng(1).random(7)
        assert np.array_equal(forward(back, x), forward(net, x))

    def test_truncated(self, tmp_path):
        save_model(build_network([7, 8, 5]), tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text()
        (tmp_path / "t.json").write_text(text[: len(text) // 2])
        with pytest.raises(ModelLoadError):
            load_model(tmp_path / "t.json")

    def test_version(self, tmp_path):
        save_model(build_network([7, 8, 5]), tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text().replace('"version": 1', '"version": 99')
        (tmp_path / "v.json").write_text(text)
        with pytest.raises(ModelLoadError, match="version"):
            load_model(tmp_path / "v.json")
