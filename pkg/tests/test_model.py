import numpy as np
import pytest

from helpers import REL_TOL, numerical_grad, rel_error
from lbpcnn.nn import (
    ConfigError,
    ShapeError,
    TrainConfig,
    WeightsFormatError,
    WeightsShapeError,
    build_model,
    extract_activations,
    load_weights,
    parse_model_config,
    predict,
    preset,
    save_weights,
    train,
    transfer_modify,
)
from lbpcnn.nn import functional as F
from lbpcnn.nn.config import format_model_config
from lbpcnn.nn.persist import dumps_weights, loads_weights


def separable_samples(n, seed=0, size=32):
    """Noise images whose class is encoded in the mean brightness."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % 2
        x = 0.5 + 0.1 * rng.standard_normal((3, size, size)) + (0.25 if label else -0.25)
        out.append((x.astype(np.float32), label))
    return out


def weights_of(model):
    return {(layer.label, k): v.copy() for layer in model.weighted_layers() for k, v in layer.params.items()}


# --- configuration ---------------------------------------------------------------


def test_config_round_trip():
    config = preset("alexnet")
    assert parse_model_config(format_model_config(config)) == config


def test_config_line_format():
    config = parse_model_config(
        """
        # comment
        data input size=8 channels=3
        conv1 conv filters=4 kernel=3 stride=1 pad=1 groups=1  # trailing
        fc fc units=2 trainable=0
        prob softmax
        output output
        """
    )
    assert [s.kind for s in config.layers] == ["input", "conv", "fc", "softmax", "output"]
    assert config.layers[1]["filters"] == 4 and config.layers[1]["kernel"] == 3
    assert not config.layers[2].trainable
    assert config.class_count == 2 and config.input_size == 8


@pytest.mark.parametrize(
    "text",
    [
        "conv1 conv filters=4 kernel=3\nfc fc units=2\np softmax\no output",
        "d input\nfc fc units=2\no output\np softmax",
        "d input\na fc units=2\na relu\np softmax\no output",
        "d input\nc conv kernel=3\nfc fc units=2\np softmax\no output",
        "d input\nc blah\nfc fc units=2\np softmax\no output",
        "d input\nc conv filters=2 kernel=3 bogus=1\nfc fc units=2\np softmax\no output",
        "d input\nfc fc units=x\np softmax\no output",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_model_config(text)


# --- building ------------------------------------------------------------------------


def test_tiny_forward_gives_two_probabilities():
    model = build_model(preset("tiny"), seed=0)
    p = predict(model, np.random.default_rng(0).random((3, 32, 32))).probabilities
    assert p.shape == (2,) and abs(p.sum() - 1) < 1e-6


def test_same_seed_same_weights():
    a, b = build_model(preset("tiny"), seed=5), build_model(preset("tiny"), seed=5)
    for key, v in weights_of(a).items():
        assert np.array_equal(v, weights_of(b)[key])
    c = build_model(preset("tiny"), seed=6)
    assert not np.array_equal(weights_of(a)["conv1", "weight"], weights_of(c)["conv1", "weight"])


def test_he_initialisation_statistics():
    model = build_model(preset("tiny"), seed=0, dtype=np.float64)
    w = model.layer("fc3").params["weight"]
    assert abs(w.std() - np.sqrt(2 / w.shape[1])) < 0.05 * np.sqrt(2 / w.shape[1])
    assert np.all(model.layer("fc3").params["bias"] == 0)


def test_shape_error_names_both_layers():
    text = "d input size=4 channels=3\nc1 conv filters=2 kernel=7\nfc fc units=2\np softmax\no output"
    with pytest.raises(ShapeError, match="c1.*'d'"):
        build_model(parse_model_config(text))


def test_model_rejects_wrong_input_shape():
    model = build_model(preset("tiny"))
    with pytest.raises(ShapeError):
        predict(model, np.zeros((3, 16, 16)))


def test_whole_model_gradient_finite_difference():
    model = build_model(preset("tiny"), seed=3, dtype=np.float64)
    # a dropout-free copy of the chain so the loss is deterministic
    x = np.random.default_rng(1).random((2, 3, 32, 32))
    labels = np.array([0, 1])

    def loss():
        p = F.softmax(model.logits(x))
        return float(F.cross_entropy(p, labels)[0].sum())

    logits = model.logits(x)
    _, grad = F.cross_entropy(F.softmax(logits), labels)
    model.backward_logits(grad)
    for label in ("conv1", "fc4"):
        layer = model.layer(label)
        num = numerical_grad(loss, layer.params["bias"])
        assert rel_error(layer.grads["bias"], num) < REL_TOL


# --- transfer surgery ---------------------------------------------------------------


def test_transfer_redimensions_final_fc():
    base = build_model(preset("tiny", class_count=10), seed=0)
    assert base.layer("fc4").params["weight"].shape == (10, 32)
    new = transfer_modify(base, 2)
    assert new.layer("fc4").params["weight"].shape == (2, 32)
    assert new.config.class_count == 2
    for key, v in weights_of(base).items():
        if key[0] != "fc4":
            assert np.array_equal(v, weights_of(new)[key])
    assert all(s.trainable for s in new.config.layers)


def test_transfer_freeze_flags():
    new = transfer_modify(build_model(preset("tiny")), 2, freeze_before="fc-final")
    trainable = {s.label for s in new.config.layers if s.trainable}
    assert trainable == {"fc4", "prob", "output"}
    with pytest.raises(KeyError):
        transfer_modify(build_model(preset("tiny")), 2, freeze_before="nope")


def test_frozen_layers_untouched_by_training():
    model = transfer_modify(build_model(preset("tiny"), seed=1), 2, freeze_before="fc4")
    before = weights_of(model)
    train(model, separable_samples(8), TrainConfig(0.05, 0.9, 4, 1, seed=0))
    after = weights_of(model)
    for key in before:
        if key[0] == "fc4":
            assert not np.array_equal(before[key], after[key])
        else:
            assert np.array_equal(before[key], after[key])


def test_unfrozen_training_moves_every_layer():
    model = transfer_modify(build_model(preset("tiny"), seed=1), 2)
    before = weights_of(model)
    train(model, separable_samples(8), TrainConfig(0.05, 0.9, 4, 1, seed=0))
    after = weights_of(model)
    assert all(not np.array_equal(before[k], after[k]) for k in before)


# --- training and inference ----------------------------------------------------------


def test_zero_learning_rate_leaves_weights():
    model = build_model(preset("tiny"), seed=2)
    before = weights_of(model)
    _, trace = train(model, separable_samples(1), TrainConfig(0.0, 0.9, 20, 1))
    assert len(trace) == 1
    assert all(np.array_equal(v, weights_of(model)[k]) for k, v in before.items())


def test_training_is_bit_reproducible():
    runs = []
    for _ in range(2):
        model = build_model(preset("tiny"), seed=4)
        _, trace = train(model, separable_samples(10), TrainConfig(0.01, 0.9, 3, 2, seed=9))
        runs.append((weights_of(model), trace))
    assert runs[0][1] == runs[1][1]
    for key, v in runs[0][0].items():
        assert np.array_equal(v, runs[1][0][key])


def test_train_rejects_mismatched_samples():
    with pytest.raises(ShapeError):
        train(build_model(preset("tiny")), [(np.zeros((3, 8, 8)), 0)], TrainConfig())
    with pytest.raises(ValueError):
        train(build_model(preset("tiny")), [], TrainConfig())


def test_prediction_label_is_argmax_and_shift_invariant():
    model = build_model(preset("tiny"), seed=0)
    x = np.random.default_rng(3).random((3, 32, 32))
    d = predict(model, x, "R")
    assert d.stream_tag == "R" and d.label == int(np.argmax(d.probabilities))
    logits = model.logits(x)[0].astype(np.float64)
    assert np.argmax(F.softmax(logits + 123.0)) == d.label


def test_predict_uses_evaluation_mode():
    model = build_model(preset("tiny"), seed=0)
    x = np.random.default_rng(3).random((3, 32, 32))
    a, b = predict(model, x), predict(model, x)
    assert np.array_equal(a.probabilities, b.probabilities)


def test_activation_extraction():
    model = build_model(preset("tiny"), seed=0)
    x = np.random.default_rng(3).random((3, 32, 32))
    assert extract_activations(model, x, "conv1").shape == (8 * 32 * 32,)
    np.testing.assert_array_equal(extract_activations(model, x, "prob"), predict(model, x).probabilities)
    np.testing.assert_array_equal(extract_activations(model, x, "fc3"), extract_activations(model, x, "fc3"))
    with pytest.raises(KeyError):
        extract_activations(model, x, "conv9")


# --- persistence ----------------------------------------------------------------------


def test_weights_round_trip(tmp_path):
    model = build_model(preset("tiny"), seed=0)
    x = np.random.default_rng(0).random((3, 32, 32))
    save_weights(model, tmp_path / "w.bin")
    other = load_weights(build_model(preset("tiny"), seed=99), tmp_path / "w.bin")
    assert np.array_equal(predict(model, x).probabilities, predict(other, x).probabilities)


def test_weights_file_layout():
    model = build_model(preset("tiny"), seed=0)
    data = dumps_weights(model)
    assert data[:4] == b"GLCW"
    assert int.from_bytes(data[4:8], "little") == 1
    assert int.from_bytes(data[8:12], "little") == 4
    n_floats = sum(v.size for v in weights_of(model).values())
    assert len(data) > 4 * n_floats


def test_load_rejects_wrong_head_naming_layer(tmp_path):
    save_weights(build_model(preset("tiny", class_count=5)), tmp_path / "w.bin")
    with pytest.raises(WeightsShapeError, match="fc4") as info:
        load_weights(build_model(preset("tiny")), tmp_path / "w.bin")
    assert info.value.layer == "fc4"


def test_load_rejects_bad_magic_and_leaves_model(tmp_path):
    model = build_model(preset("tiny"), seed=0)
    before = weights_of(model)
    data = bytearray(dumps_weights(build_model(preset("tiny"), seed=1)))
    data[:4] = b"XXXX"
    with pytest.raises(WeightsFormatError):
        loads_weights(model, bytes(data))
    with pytest.raises(WeightsFormatError):
        loads_weights(model, dumps_weights(build_model(preset("tiny"), seed=1))[:-7])
    assert all(np.array_equal(v, weights_of(model)[k]) for k, v in before.items())
