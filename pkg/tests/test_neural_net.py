import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clustertransfer.data_ingest import NumericTable
from clustertransfer.errors import FormatError, NumericError, ShapeError
from clustertransfer.neural_net import (
    AdamState,
    Gradients,
    Layer,
    Mlp,
    TrainConfig,
    adam_step,
    backward,
    forward,
    freeze_layers,
    init_mlp,
    load_model,
    mae_loss,
    predict,
    save_model,
    train,
)


def single_linear(w: float, b: float) -> Mlp:
    return Mlp((Layer(np.array([[w]]), np.array([b]), "linear"),), (False,), 1)


def reference_forward(mlp: Mlp, x) -> list[float]:
    """Plain-Python loops over the weights, no numpy matmul."""
    a = [float(v) for v in x]
    for layer in mlp.layers:
        z = []
        for r in range(layer.n_out):
            s = float(layer.bias[r])
            for c in range(layer.n_in):
                s += float(layer.weights[r, c]) * a[c]
            z.append(s)
        a = [max(0.0, v) for v in z] if layer.activation == "relu" else z
    return a


def finite_difference(mlp: Mlp, X, y, h: float = 1e-5) -> list[np.ndarray]:
    params = mlp.params()
    out = []
    for j, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[j][idx] += h
            minus[j][idx] -= h
            g[idx] = (mae_loss(predict(mlp.with_params(plus), X), y)
                      - mae_loss(predict(mlp.with_params(minus), X), y)) / (2 * h)
        out.append(g)
    return out


def random_small_net(rng: np.random.Generator, max_params: int = 50):
    while True:
        in_dim = int(rng.integers(1, 4))
        depth = int(rng.integers(1, 4))
        widths = [int(rng.integers(1, 5)) for _ in range(depth - 1)] + [1]
        mlp = init_mlp(in_dim, widths, seed=int(rng.integers(2**31)))
        if mlp.n_params() <= max_params:
            # random biases so relu kinks are not all at the origin
            params = [p if p.ndim == 2 else rng.normal(0, 0.5, p.shape) for p in mlp.params()]
            return mlp.with_params(params)


def assert_grads_close(analytic, numeric, rel=1e-4, floor=1e-7):
    for a, n in zip(analytic, numeric):
        diff = np.abs(a - n)
        ok = (diff <= rel * np.maximum(np.abs(a), np.abs(n))) | (diff <= floor)
        assert ok.all(), (a, n)


class TestInit:
    def test_default_param_count(self):
        mlp = init_mlp(32, seed=0)
        assert mlp.depth == 6
        assert mlp.widths == (32, 16, 8, 4, 2, 1)
        dims = [32, 32, 16, 8, 4, 2, 1]
        closed_form = sum(o * i + o for i, o in zip(dims, dims[1:]))
        assert closed_form == 1769
        assert mlp.n_params() == closed_form

    def test_activations(self):
        mlp = init_mlp(10, seed=0)
        assert [l.activation for l in mlp.layers] == ["relu"] * 5 + ["linear"]

    def test_same_seed_same_weights(self):
        a, b = init_mlp(7, seed=42), init_mlp(7, seed=42)
        for p, q in zip(a.params(), b.params()):
            assert p.tobytes() == q.tobytes()

    def test_zero_bias_and_he_range(self):
        mlp = init_mlp(12, seed=1)
        fan_in = 12
        for layer in mlp.layers:
            assert np.all(layer.bias == 0.0)
            assert np.all(np.abs(layer.weights) <= np.sqrt(6.0 / fan_in))
            fan_in = layer.n_out
        assert not any(mlp.freeze_mask)

    @pytest.mark.parametrize("widths", [(), (4, 2), (4, 0, 1)])
    def test_bad_widths(self, widths):
        with pytest.raises(ValueError):
            init_mlp(3, widths)


class TestForward:
    def test_zero_net(self):
        mlp = init_mlp(4, (3, 1), seed=0)
        mlp = mlp.with_params([np.zeros_like(p) for p in mlp.params()])
        np.testing.assert_array_equal(forward(mlp, np.ones((5, 4)) * 9), np.zeros((5, 1)))

    def test_single_linear(self):
        assert forward(single_linear(2.0, 1.0), [3.0])[0] == 7.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        mlp = init_mlp(5, (6, 4, 1), seed=seed)
        mlp = mlp.with_params([p + rng.normal(0, 0.3, p.shape) for p in mlp.params()])
        X = rng.standard_normal((8, 5))
        for row in X:
            assert abs(forward(mlp, row)[0] - reference_forward(mlp, row)[0]) < 1e-12

    def test_batch_equals_rows(self):
        rng = np.random.default_rng(3)
        mlp = init_mlp(6, seed=3)
        X = rng.standard_normal((20, 6))
        batch = forward(mlp, X)
        rows = np.array([forward(mlp, r) for r in X])
        assert np.max(np.abs(batch - rows)) < 1e-12

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            forward(init_mlp(3, seed=0), np.zeros((2, 4)))


class TestMaeLoss:
    def test_zero(self):
        assert mae_loss([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand(self):
        assert mae_loss([1.0, 3.0], [2.0, 2.0]) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=20),
           st.floats(-100, 100))
    def test_homogeneous(self, pairs, c):
        p = np.array([a for a, _ in pairs])
        t = np.array([b for _, b in pairs])
        assert mae_loss(c * p, c * t) == pytest.approx(abs(c) * mae_loss(p, t), rel=1e-9, abs=1e-9)

    def test_empty(self):
        with pytest.raises(ValueError):
            mae_loss([], [])


class TestBackward:
    def test_zero_residuals(self):
        mlp = init_mlp(3, (4, 1), seed=0)
        X = np.random.default_rng(0).standard_normal((6, 3))
        g = backward(mlp, X, predict(mlp, X))
        assert all(np.all(a == 0.0) for a in g.flat())

    def test_hand_single_layer(self):
        g = backward(single_linear(1.0, 0.0), np.array([[2.0]]), np.array([0.0]))
        assert g.weights[0][0, 0] == 2.0
        assert g.biases[0][0] == 1.0

    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        mlp = random_small_net(rng)
        X = rng.standard_normal((4, mlp.input_dim))
        y = rng.standard_normal(4)
        assert_grads_close(backward(mlp, X, y).flat(), finite_difference(mlp, X, y))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            backward(init_mlp(3, (2, 1), seed=0), np.zeros((4, 3)), np.zeros(5))


class TestAdam:
    def test_zero_gradient_no_change(self):
        mlp = init_mlp(3, (2, 1), seed=0)
        grads = Gradients(tuple(np.zeros_like(l.weights) for l in mlp.layers),
                          tuple(np.zeros_like(l.bias) for l in mlp.layers))
        new, state = adam_step(mlp, grads, AdamState.fresh(mlp))
        for p, q in zip(mlp.params(), new.params()):
            np.testing.assert_array_equal(p, q)
        assert state.t == 1

    @pytest.mark.parametrize("g", [1e-3, -0.5, 3.0, 1e4])
    def test_first_step_magnitude(self, g):
        mlp = single_linear(0.0, 0.0)
        lr = 1e-3
        grads = Gradients((np.array([[g]]),), (np.array([0.0]),))
        new, _ = adam_step(mlp, grads, AdamState.fresh(mlp, lr=lr))
        delta = abs(new.layers[0].weights[0, 0])
        assert 0.999 * lr <= delta <= lr

    def test_matches_hand_update(self):
        mlp = single_linear(1.0, 0.0)
        state = AdamState.fresh(mlp, lr=0.1)
        gs = [0.5, -0.2, 0.3]
        w, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(gs, start=1):
            mlp, state = adam_step(mlp, Gradients((np.array([[g]]),), (np.array([0.0]),)), state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert mlp.layers[0].weights[0, 0] == pytest.approx(w, rel=1e-14)

    def test_frozen_layer_untouched(self):
        mlp = freeze_layers(init_mlp(3, (4, 2, 1), seed=0), 2)
        grads = Gradients(tuple(np.ones_like(l.weights) for l in mlp.layers),
                          tuple(np.ones_like(l.bias) for l in mlp.layers))
        state = AdamState.fresh(mlp)
        new, new_state = adam_step(mlp, grads, state)
        for i in range(2):
            assert new.layers[i].weights.tobytes() == mlp.layers[i].weights.tobytes()
            assert new.layers[i].bias.tobytes() == mlp.layers[i].bias.tobytes()
            assert np.all(new_state.m[2 * i] == 0) and np.all(new_state.v[2 * i] == 0)
        assert not np.array_equal(new.layers[2].weights, mlp.layers[2].weights)

    def test_shape_mismatch(self):
        mlp = init_mlp(3, (2, 1), seed=0)
        bad = Gradients((np.zeros((1, 1)), np.zeros((1, 2))), (np.zeros(2), np.zeros(1)))
        with pytest.raises(ShapeError):
            adam_step(mlp, bad, AdamState.fresh(mlp))


class TestTrain:
    def test_constant_target_bias_fit(self):
        # With all-zero inputs only the bias matters; MAE is minimized at b = c.
        c = 2.5
        mlp = single_linear(0.0, 0.0)
        X, y = np.zeros((10, 1)), np.full(10, c)
        trained, hist = train(mlp, (X, y), TrainConfig(epochs=500, batch_size=10,
                                                       learning_rate=0.01, seed=0))
        assert hist.best_loss < 0.01
        assert trained.layers[0].bias[0] == pytest.approx(c, abs=0.01)

    def test_one_step_per_epoch(self):
        mlp = init_mlp(2, (3, 1), seed=0)
        X = np.random.default_rng(0).standard_normal((7, 2))
        _, hist = train(mlp, (X, np.zeros(7)), TrainConfig(epochs=1, batch_size=7))
        assert hist.steps == 1
        _, hist = train(mlp, (X, np.zeros(7)), TrainConfig(epochs=3, batch_size=100))
        assert hist.steps == 3

    def test_partial_last_batch(self):
        mlp = init_mlp(2, (3, 1), seed=0)
        X = np.random.default_rng(0).standard_normal((25, 2))
        _, hist = train(mlp, (X, np.zeros(25)), TrainConfig(epochs=2, batch_size=10))
        assert hist.steps == 6

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        table = NumericTable(rng.random((40, 5)), rng.random(40) * 20)
        cfg = TrainConfig(epochs=20, seed=7)
        a = train(init_mlp(5, seed=2), table, cfg)
        b = train(init_mlp(5, seed=2), table, cfg)
        assert a[1] == b[1]
        for p, q in zip(a[0].params(), b[0].params()):
            assert p.tobytes() == q.tobytes()

    def test_best_epoch_checkpoint(self):
        rng = np.random.default_rng(2)
        X, y = rng.random((30, 4)), rng.random(30) * 10
        model, hist = train(init_mlp(4, seed=0), (X, y), TrainConfig(epochs=40, seed=1))
        assert len(hist.losses) == 40
        assert hist.best_loss == min(hist.losses)
        assert mae_loss(predict(model, X), y) == hist.best_loss

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss(self):
        mlp = single_linear(1e308, 0.0)
        with pytest.raises(NumericError, match="epoch 0"):
            train(mlp, (np.full((3, 1), 1e10), np.zeros(3)), TrainConfig(epochs=2))

    def test_frozen_layers_survive_training(self):
        rng = np.random.default_rng(3)
        mlp = freeze_layers(init_mlp(6, seed=1), 3)
        trained, _ = train(mlp, (rng.random((30, 6)), rng.random(30) * 20),
                           TrainConfig(epochs=10, seed=0))
        for i in range(3):
            assert trained.layers[i].weights.tobytes() == mlp.layers[i].weights.tobytes()
            assert trained.layers[i].bias.tobytes() == mlp.layers[i].bias.tobytes()


class TestFreeze:
    def test_none(self):
        assert freeze_layers(init_mlp(3, seed=0), 0).freeze_mask == (False,) * 6

    def test_three(self):
        assert freeze_layers(init_mlp(3, seed=0), 3).freeze_mask == (True,) * 3 + (False,) * 3

    def test_all_layers_rejected(self):
        with pytest.raises(ValueError):
            freeze_layers(init_mlp(3, seed=0), 6)


class TestSerialization:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        mlp = init_mlp(9, seed=4)
        mlp = freeze_layers(mlp.with_params([p + rng.normal(0, 1, p.shape) for p in mlp.params()]), 2)
        save_model(mlp, None, None, tmp_path / "m.json")
        loaded, schema, scaler = load_model(tmp_path / "m.json")
        assert loaded.freeze_mask == mlp.freeze_mask
        for p, q in zip(mlp.params(), loaded.params()):
            assert p.tobytes() == q.tobytes()
        X = rng.standard_normal((10, 9))
        assert forward(mlp, X).tobytes() == forward(loaded, X).tobytes()

    def test_default_widths_in_file(self, tmp_path):
        save_model(init_mlp(30, seed=0), None, None, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["widths"] == [32, 16, 8, 4, 2, 1]
        assert doc["version"] == 1

    def test_truncated(self, tmp_path):
        save_model(init_mlp(5, seed=0), None, None, tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text()
        (tmp_path / "t.json").write_text(text[: len(text) // 2])
        with pytest.raises(FormatError):
            load_model(tmp_path / "t.json")

    def test_version_mismatch(self, tmp_path):
        save_model(init_mlp(5, seed=0), None, None, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="version"):
            load_model(tmp_path / "m.json")

    def test_corrupt_shapes(self, tmp_path):
        save_model(init_mlp(5, seed=0), None, None, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["layers"][1]["bias"] = [0.0]
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(FormatError):
            load_model(tmp_path / "m.json")
