import math

import numpy as np
import pytest

from lobpred.labeling import Label
from lobpred.nn import (
    ArchitectureSpec,
    DenseSpec,
    LSTMSpec,
    Model,
    NonFiniteActivation,
    ShapeMismatch,
    TrainConfig,
    deeplob_full,
    infer_shapes,
    level1,
    predict,
    preset,
    slim,
    train,
)
from lobpred.nn import checkpoint
from lobpred.nn.gradcheck import RTOL, check_layer, check_model
from lobpred.nn.layers import (
    LSTM,
    Conv2D,
    Dense,
    Dropout,
    Inception,
    LeakyReLU,
    MaxPool,
    Sequential,
    ToSequence,
)
from lobpred.nn.training import accuracy

TINY = dict(time=12, conv_filters=2, inception_filters=2, lstm_units=3, dropout=0.0)


def tiny(name="level1", width=4, seed=0, **kw):
    return Model(preset(name, width=width, **{**TINY, **kw}), seed=seed)


def zero_head(model, bias=(0.0, 0.0, 0.0)):
    dense = model.layers[-1]
    dense.weight.data[...] = 0.0
    dense.bias.data[...] = np.log(np.asarray(bias)) if any(bias) else 0.0


def test_shape_trace_full_book():
    shapes = infer_shapes(deeplob_full())
    # (1,2) stride-2 convs halve the width twice, then a (1,10) conv merges the levels
    assert shapes[0] == (100, 20, 32) and shapes[3] == (100, 10, 32) and shapes[6] == (100, 1, 32)
    assert shapes[9] == (100, 1, 192)  # three inception branches of 64
    assert shapes[-2:] == [(64,), (3,)]


def test_shape_trace_reduced_inputs():
    assert infer_shapes(level1())[3] == (100, 1, 32)
    assert infer_shapes(slim())[0] == (100, 1, 32)
    for spec in (level1(), slim(), preset("slim", width=2)):
        assert infer_shapes(spec)[-1] == (3,)


def test_bad_architectures():
    with pytest.raises(ShapeMismatch):
        infer_shapes(ArchitectureSpec("x", 10, 4, (LSTMSpec(4), DenseSpec(2))))
    with pytest.raises(ShapeMismatch):
        infer_shapes(ArchitectureSpec("x", 10, 4, (DenseSpec(3),)))
    with pytest.raises(ShapeMismatch):
        # a width-3 input cannot be halved twice by (1,2) stride-2 convolutions
        infer_shapes(level1(width=3))
    with pytest.raises(ValueError):
        preset("nope")


def test_input_shape_checked():
    model = tiny()
    with pytest.raises(ShapeMismatch):
        model.forward(np.zeros((2, 11, 4)))


def test_softmax_rows_sum_to_one():
    model = tiny()
    x = np.random.default_rng(0).standard_normal((7, 12, 4)) * 3
    p = model.forward(x)
    assert p.shape == (7, 3) and np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_zero_dense_gives_uniform_and_ln3():
    model = tiny()
    zero_head(model)
    x = np.random.default_rng(1).standard_normal((5, 12, 4))
    np.testing.assert_allclose(model.forward(x), 1 / 3, atol=1e-15)
    loss, _ = model.loss_and_gradients(x, np.array([0, 1, 2, 0, 1]))
    assert loss == pytest.approx(math.log(3), abs=1e-12)
    # exact three-way tie resolves to the first class
    assert predict(model, x[0])[0] is Label.UP


def test_argmax_picks_down():
    model = tiny()
    zero_head(model, (0.2, 0.5, 0.3))
    label, probs = predict(model, np.zeros((12, 4)))
    np.testing.assert_allclose(probs, [0.2, 0.5, 0.3])
    assert label is Label.DOWN


def test_dropout_is_identity_in_eval():
    model = tiny(dropout=0.5)
    x = np.random.default_rng(2).standard_normal((4, 12, 4))
    a = model.forward(x)
    model.forward(x, training=True)
    np.testing.assert_array_equal(model.forward(x), a)
    assert not np.allclose(model.forward(x, training=True), a)


def test_non_finite_activation_reported():
    model = tiny()
    x = np.zeros((1, 12, 4))
    x[0, 3, 1] = np.nan
    with pytest.raises(NonFiniteActivation):
        model.forward(x)


def toy_problem(n=240, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, size=n)
    shift = np.array([1.0, -1.0, 0.0])[y]
    x = rng.standard_normal((n, 12, 4)) * 0.3
    x[:, :, 0] += shift[:, None]
    x[:, :, 2] += shift[:, None]
    return x, y


def test_learns_separable_toy_problem():
    x, y = toy_problem()
    model = tiny(conv_filters=4, inception_filters=4, lstm_units=8)
    result = train(model, x, y, TrainConfig(epochs=20, batch_size=16, learning_rate=1e-2, seed=0))
    assert accuracy(model, x, y) >= 0.95
    assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_training_deterministic():
    x, y = toy_problem(n=64, seed=1)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=3)
    a, b = tiny(dropout=0.2), tiny(dropout=0.2)
    ra, rb = train(a, x, y, cfg), train(b, x, y, cfg)
    assert ra.epoch_losses == rb.epoch_losses
    np.testing.assert_array_equal(a.get_flat(), b.get_flat())
    c = tiny(dropout=0.2)
    train(c, x, y, TrainConfig(epochs=2, batch_size=16, seed=4))
    assert not np.array_equal(a.get_flat(), c.get_flat())


def test_checkpoint_round_trip(tmp_path):
    model = tiny("slim", width=2)
    x = np.random.default_rng(4).standard_normal((3, 12, 2))
    path = tmp_path / "m.ckpt"
    checkpoint.save(model, path)
    back = checkpoint.load(path)
    assert back.spec == model.spec and back.seed == model.seed
    np.testing.assert_array_equal(back.get_flat(), model.get_flat())
    np.testing.assert_array_equal(back.forward(x), model.forward(x))
    with pytest.raises(ValueError):
        checkpoint.loads(b"garbage!" + bytes(40))


def test_set_flat_rejects_wrong_size():
    model = tiny()
    with pytest.raises(ValueError):
        model.set_flat(np.zeros(3))


LAYERS = [
    ("conv 1x1", lambda r: Conv2D(2, 3, (1, 1), rng=r), (2, 6, 3, 2)),
    ("conv 1x2 stride 2", lambda r: Conv2D(1, 3, (1, 2), (1, 2), rng=r), (2, 6, 4, 1)),
    ("conv 4x1 zero pad", lambda r: Conv2D(2, 2, (4, 1), padding="zero", rng=r), (2, 7, 1, 2)),
    ("conv 1x10 valid", lambda r: Conv2D(2, 2, (1, 10), rng=r), (2, 3, 10, 2)),
    ("maxpool 3x1", lambda r: MaxPool((3, 1)), (2, 6, 1, 3)),
    ("leaky relu", lambda r: LeakyReLU(0.01), (3, 5, 2, 2)),
    ("dropout eval", lambda r: Dropout(0.3, r), (2, 4, 3)),
    ("to sequence", lambda r: ToSequence(), (2, 4, 1, 3)),
    ("lstm", lambda r: LSTM(3, 4, r), (2, 5, 3)),
    ("dense", lambda r: Dense(5, 3, r), (4, 5)),
    ("inception", lambda r: Inception([
        Sequential([Conv2D(2, 2, (1, 1), padding="zero", rng=r), LeakyReLU(),
                    Conv2D(2, 2, (3, 1), padding="zero", rng=r), LeakyReLU()]),
        Sequential([MaxPool((3, 1)), Conv2D(2, 2, (1, 1), padding="zero", rng=r), LeakyReLU()]),
    ]), (2, 6, 1, 2)),
]


@pytest.mark.parametrize("name,make,shape", LAYERS, ids=[n for n, _, _ in LAYERS])
def test_layer_gradients(name, make, shape):
    rng = np.random.default_rng(7)
    layer = make(rng)
    res = check_layer(layer, rng.standard_normal(shape), rng, name)
    assert res.ok, res
    assert res.max_rel_error <= RTOL


@pytest.mark.parametrize("seed", range(3))
def test_model_gradients(seed):
    rng = np.random.default_rng(seed)
    model = Model(level1(width=4, **TINY), seed=seed)
    x = rng.standard_normal((3, 12, 4))
    res = check_model(model, x, np.array([0, 1, 2]), rng, max_entries=20)
    assert res.ok, res
