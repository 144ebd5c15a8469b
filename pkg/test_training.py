import math

import numpy as np
import pytest

from src.augment import AugmentConfig
from src.errors import ConfigError, DatasetError, ShapeError
from src.layers import Dense, Sigmoid
from src.nn import Model, build_default_model
from src.training import (
    AdamState,
    Dataset,
    TrainConfig,
    _batch_bounds,
    adam_step,
    evaluate,
    predict,
    train,
)


def _separable(n=240, seed=0, margin=0.3):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    score = x[:, 0] + x[:, 1]
    keep = np.abs(score) >= margin
    return Dataset(x[keep], (score[keep] > 0).astype(float))


def _logistic_model(weights=None, bias=0.0):
    dense = Dense(2, 1)
    if weights is not None:
        dense.params["weights"] = np.array([weights], dtype=float)
    dense.params["bias"] = np.array([bias])
    return Model([dense, Sigmoid()], (2,))


def _images(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, 10, 10, 1)), np.arange(n) % 2, ["A" if i < n // 2 else "B" for i in range(n)])


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.zeros(2)}, AdamState.zeros(params), TrainConfig())
    assert np.array_equal(new["w"], params["w"])
    assert state.t == 1


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([0.0, 0.0])}
    config = TrainConfig(learning_rate=0.01)
    new, _ = adam_step(params, {"w": np.array([3.0, -0.5])}, AdamState.zeros(params), config)
    assert np.allclose(new["w"], [-0.01, 0.01], rtol=1e-6)


def test_adam_two_steps_match_scalar_trace():
    config = TrainConfig(learning_rate=0.1)
    g = 0.5
    p, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g * g
        m_hat = m / (1 - config.beta1 ** t)
        v_hat = v / (1 - config.beta2 ** t)
        p = p - config.learning_rate * m_hat / (math.sqrt(v_hat) + config.epsilon_adam)

    params = {"p": np.array(1.0)}
    state = AdamState.zeros(params)
    for _ in range(2):
        params, state = adam_step(params, {"p": np.array(g)}, state, config)
    assert float(params["p"]) == pytest.approx(p, abs=1e-15)
    assert state.t == 2


def test_adam_rejects_mismatched_shapes():
    params = {"w": np.zeros(3)}
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(2)}, AdamState.zeros(params), TrainConfig())


def test_batch_bounds_merge_trailing_single_sample():
    assert _batch_bounds(5, 2) == [(0, 2), (2, 5)]
    assert _batch_bounds(4, 2) == [(0, 2), (2, 4)]
    assert _batch_bounds(1, 4) == [(0, 1)]
    assert _batch_bounds(7, 3) == [(0, 3), (3, 7)]


def test_train_separates_linear_data():
    data = _separable()
    model, history = train(_logistic_model(), data, TrainConfig(learning_rate=0.05, batch_size=16, epochs=40))
    assert list(history.columns) == ["epoch", "loss", "accuracy"]
    assert len(history) == 40
    assert history["loss"].iloc[-1] < history["loss"].iloc[0]
    assert evaluate(model, data)["accuracy"] >= 0.95


def test_train_is_reproducible():
    data = _images()
    config = TrainConfig(epochs=2, batch_size=4, rng_seed=9)
    runs = []
    for _ in range(2):
        model, history = train(build_default_model((10, 10, 1), seed=9), data, config, AugmentConfig(rng_seed=10))
        runs.append((model.parameters(), history))
    for key, value in runs[0][0].items():
        assert value.tobytes() == runs[1][0][key].tobytes()
    assert runs[0][1].equals(runs[1][1])


def test_zero_learning_rate_keeps_parameters():
    model = build_default_model((10, 10, 1), seed=2)
    before = {k: v.copy() for k, v in model.parameters().items()}
    model, _ = train(model, _images(), TrainConfig(learning_rate=0.0, epochs=3, batch_size=5))
    for key, value in model.parameters().items():
        assert np.array_equal(value, before[key])


def test_train_records_validation_metrics():
    data = _images()
    _, history = train(build_default_model((10, 10, 1), seed=1), data,
                       TrainConfig(epochs=2, batch_size=6), validation=_images(seed=1))
    assert list(history.columns) == ["epoch", "loss", "accuracy", "val_loss", "val_accuracy"]
    assert history["epoch"].tolist() == [1, 2]


def test_train_rejects_bad_inputs():
    empty = Dataset(np.zeros((0, 2)), [])
    with pytest.raises(DatasetError):
        train(_logistic_model(), empty, TrainConfig(epochs=1))
    with pytest.raises(DatasetError):
        train(_logistic_model(), Dataset(np.zeros((2, 2)), [0, 2]), TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        train(_logistic_model(), _separable(), TrainConfig(batch_size=0))


def test_evaluate_threshold_rule_and_perfect_model():
    data = _separable()
    half = evaluate(_logistic_model([0.0, 0.0]), data)
    assert half["accuracy"] == pytest.approx(float(np.mean(data.labels == 1)))
    assert half["mean_bce"] == pytest.approx(math.log(2.0))

    balanced = Dataset(np.zeros((4, 2)), [0, 1, 0, 1])
    assert evaluate(_logistic_model([0.0, 0.0]), balanced)["accuracy"] == 0.5

    perfect = evaluate(_logistic_model([100.0, 100.0]), data)
    assert perfect["accuracy"] == 1.0
    assert perfect["mean_bce"] < 1e-9
    assert perfect["count"] == len(data)

    with pytest.raises(DatasetError):
        evaluate(_logistic_model(), Dataset(np.zeros((0, 2)), []))


def test_random_model_on_random_labels_is_chance():
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(10_000, 2)), rng.integers(0, 2, size=10_000))
    assert abs(evaluate(_logistic_model([0.7, -1.3], 0.2), data)["accuracy"] - 0.5) <= 0.02


def test_predict_is_batch_size_independent():
    model = build_default_model((10, 10, 1), seed=4)
    images = _images(n=7).images
    assert np.allclose(predict(model, images, batch_size=2), predict(model, images), atol=1e-12)
    assert model.mode == "inference"


def test_dataset_subset_and_shape_checks():
    data = _images()
    subset = data.subset([tag == "B" for tag in data.tags])
    assert len(subset) == 6 and set(subset.tags) == {"B"}
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), [0, 1])


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(beta1=1.0).validate()
    assert TrainConfig().to_dict()["batch_size"] == 32
