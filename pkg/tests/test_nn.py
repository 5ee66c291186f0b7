import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cogload.errors import ConfigError, DataValidationError, NumericalError
from cogload.nn import (
    PROB_EPS,
    AdamState,
    NetworkConfig,
    NetworkParams,
    adam_step,
    backward,
    forward,
    init_network,
    l2_penalty,
    load_checkpoint,
    loss,
    predict,
    save_checkpoint,
    train,
)
from oracles import gradient_check

TINY = NetworkConfig(input_dim=4, hidden_sizes=(3,))


def zero_params(config=TINY):
    p = init_network(config)
    for a in p.arrays():
        a[:] = 0
    return p


def test_default_shape_chain():
    params = init_network(NetworkConfig())
    assert params.shape_chain() == [(20, 64), (64, 64), (64, 64), (64, 128), (128, 128), (128, 128),
                                     (128, 256), (256, 1), (256, 1)]


def test_init_is_seeded():
    a, b = init_network(NetworkConfig(seed=3)), init_network(NetworkConfig(seed=3))
    assert a.equals(b)
    assert not a.equals(init_network(NetworkConfig(seed=4)))


@pytest.mark.parametrize("scheme, bound", [("glorot_uniform", math.sqrt(6 / 84)), ("he_uniform", math.sqrt(6 / 20))])
def test_init_bounds(scheme, bound):
    w = init_network(NetworkConfig(init_scheme=scheme)).weights[0]
    assert np.all(np.abs(w) <= bound) and np.max(np.abs(w)) > 0.9 * bound


@pytest.mark.parametrize("bad", [{"dropout_rate": 1.0}, {"learning_rate": 0}, {"hidden_sizes": ()},
                                 {"l2_coeff": -1}, {"init_scheme": "orthogonal"}, {"epochs": 0}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        NetworkConfig(**bad)


def test_zero_params_give_half():
    probs, _ = forward(zero_params(), np.random.default_rng(0).normal(size=(5, 4)))
    assert np.all(probs == 0.5)
    probs, _ = predict(zero_params(), np.ones((1, 4)))
    assert probs.tolist() == [[0.5, 0.5]]


def test_eval_mode_is_deterministic():
    p = init_network(NetworkConfig())
    x = np.random.default_rng(1).normal(size=(8, 20))
    assert np.array_equal(forward(p, x)[0], forward(p, x)[0])


def test_train_mode_masks_are_seeded():
    p = init_network(NetworkConfig())
    x = np.random.default_rng(1).normal(size=(8, 20))
    a = forward(p, x, "train", mask_seed=11)[0]
    assert np.array_equal(a, forward(p, x, "train", mask_seed=11)[0])
    assert not np.array_equal(a, forward(p, x, "train", mask_seed=12)[0])


def test_forward_rejects_bad_input():
    with pytest.raises(DataValidationError):
        forward(zero_params(), np.ones((2, 5)))
    with pytest.raises(DataValidationError):
        forward(zero_params(), np.ones((2, 4)), mode="test")


def test_dropout_preserves_expected_preactivation():
    config = NetworkConfig(input_dim=3, hidden_sizes=(6, 5), seed=2)
    params = init_network(config)
    x = np.array([[0.4, -1.2, 0.9]])
    _, eval_cache = forward(params, x)
    _, train_cache = forward(params, np.repeat(x, 40000, axis=0), "train", mask_seed=0)
    want = eval_cache.pre_activations[1][0]
    got = train_cache.pre_activations[1].mean(axis=0)
    assert np.linalg.norm(got - want) <= 0.01 * np.linalg.norm(want)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_probabilities_stay_inside_clip(seed, scale):
    params = init_network(NetworkConfig(input_dim=4, hidden_sizes=(8, 8), seed=seed))
    x = np.random.default_rng(seed).normal(size=(10, 4)) * scale * 100
    probs, _ = forward(params, x)
    assert np.all((probs >= PROB_EPS) & (probs <= 1 - PROB_EPS))


def test_near_perfect_prediction_has_near_zero_loss():
    lb = loss([[1 - 1e-7, 1 - 1e-7]], [[1, 1]])
    assert lb.l_expertise < 1e-6 and lb.l_cognitive_load < 1e-6


def test_half_probability_gives_ln2():
    lb = loss(np.full((6, 2), 0.5), np.array([[1, 0]] * 3 + [[0, 1]] * 3))
    assert abs(lb.l_expertise - math.log(2)) <= 1e-12
    assert abs(lb.l_cognitive_load - math.log(2)) <= 1e-12
    assert lb.l_total == pytest.approx(2 * math.log(2), abs=1e-12)


def test_l2_shifts_total_by_coefficient_times_squared_weights():
    params = init_network(NetworkConfig(input_dim=4, hidden_sizes=(5,), seed=1))
    probs = np.full((3, 2), 0.3)
    y = np.ones((3, 2))
    sq = sum(float(np.sum(w.ravel() ** 2)) for w in params.weights)
    diff = loss(probs, y, params, 0.1).l_total - loss(probs, y, params, 0.0).l_total
    assert diff == pytest.approx(0.1 * sq, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_loss_additivity(seed, l2):
    rng = np.random.default_rng(seed)
    params = init_network(NetworkConfig(input_dim=3, hidden_sizes=(4,), seed=seed))
    lb = loss(rng.uniform(0.01, 0.99, (5, 2)), rng.integers(0, 2, (5, 2)), params, l2)
    assert lb.l_total == lb.l_expertise + lb.l_cognitive_load + lb.l2_penalty
    assert lb.l_total - lb.l2_penalty == pytest.approx(lb.l_expertise + lb.l_cognitive_load, rel=1e-15, abs=1e-15)
    assert lb.l2_penalty == l2_penalty(params, l2)


def test_gradient_check_toy_net():
    params = init_network(NetworkConfig(input_dim=4, hidden_sizes=(3,), seed=5))
    assert params.shape_chain() == [(4, 3), (3, 1), (3, 1)]
    assert gradient_check(5) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_with_l2(seed):
    assert gradient_check(100 + seed, l2_coeff=0.05) < 1e-4


def test_zero_input_gives_zero_first_layer_gradient():
    params = init_network(NetworkConfig(input_dim=4, hidden_sizes=(3, 3), seed=0))
    _, cache = forward(params, np.zeros((5, 4)))
    grads = backward(cache, np.ones((5, 2)))
    assert np.all(grads.weights[0] == 0)


def _scalar_params(value):
    return NetworkParams([np.array([[value]]), np.zeros((1, 1)), np.zeros((1, 1))],
                         [np.zeros(1), np.zeros(1), np.zeros(1)], np.zeros(1), np.ones(1))


def test_adam_first_step_by_hand():
    p = _scalar_params(1.0)
    g = _scalar_params(0.5)
    new, state = adam_step(p, g, AdamState.zeros_like(p), lr=0.001)
    m_hat = (0.1 * 0.5) / (1 - 0.9)
    v_hat = (0.001 * 0.25) / (1 - 0.999)
    expected = -0.001 * m_hat / (math.sqrt(v_hat) + 1e-8)
    assert new.weights[0][0, 0] - 1.0 == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(-0.001, rel=1e-7)
    assert state.t == 1
    assert p.weights[0][0, 0] == 1.0  # input untouched


def test_adam_zero_gradient():
    p = init_network(TINY)
    zero = p.with_arrays([np.zeros_like(a) for a in p.arrays()])
    new, state = adam_step(p, zero, AdamState.zeros_like(p))
    assert new.equals(p) and state.t == 1


def test_adam_is_pure():
    p = init_network(TINY)
    g = p.with_arrays([np.full_like(a, 0.3) for a in p.arrays()])
    s = AdamState.zeros_like(p)
    a1, s1 = adam_step(p, g, s)
    a2, s2 = adam_step(p, g, s)
    assert a1.equals(a2) and s.t == 0 and all(np.all(m == 0) for m in s.m)


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, (n, 2))
    x = rng.normal(0, 0.3, (n, 20))
    x[:, 0] += 3 * (2 * y[:, 0] - 1)
    x[:, 1] += 3 * (2 * y[:, 1] - 1)
    return x, y


def test_trains_separable_data():
    x, y = _separable()
    result = train(x, y, NetworkConfig(seed=1))
    _, decisions = predict(result.params, x)
    assert np.mean(decisions == y, axis=0).min() >= 0.99


def test_training_is_deterministic():
    x, y = _separable(64)
    config = NetworkConfig(hidden_sizes=(16, 16), epochs=5, seed=7)
    a, b = train(x, y, config), train(x, y, config)
    assert a.loss_curves == b.loss_curves and a.params.equals(b.params)


def test_overfits_without_regularisation():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(12, 20))
    y = rng.integers(0, 2, (12, 2))
    config = NetworkConfig(hidden_sizes=(32, 32), dropout_rate=0.0, l2_coeff=0.0, epochs=600,
                           learning_rate=3e-3, seed=0)
    assert train(x, y, config).loss_curves["l_total"][-1] < 1e-2


def test_train_rejects_bad_labels():
    with pytest.raises(DataValidationError):
        train(np.zeros((3, 20)), np.full((3, 2), 2), NetworkConfig(epochs=1))


def test_non_finite_loss_raises_numerical_error(monkeypatch):
    import cogload.nn as nn

    real = nn.loss

    def poisoned(*args, **kwargs):
        lb = real(*args, **kwargs)
        return nn.LossBreakdown(lb.l_expertise, lb.l_cognitive_load, float("nan"), lb.l2_penalty)

    monkeypatch.setattr(nn, "loss", poisoned)
    x, y = _separable(32)
    with pytest.raises(NumericalError):
        train(x, y, NetworkConfig(hidden_sizes=(4,), epochs=2))


def test_checkpoint_round_trip(tmp_path):
    config = NetworkConfig(hidden_sizes=(8, 4), seed=9)
    params = init_network(config)
    save_checkpoint(tmp_path / "m.json", params, config)
    loaded, loaded_config = load_checkpoint(tmp_path / "m.json")
    assert loaded.equals(params) and loaded_config == config


def test_checkpoint_shape_mismatch(tmp_path):
    import json

    config = NetworkConfig(hidden_sizes=(8, 4))
    save_checkpoint(tmp_path / "m.json", init_network(config), config)
    payload = json.loads((tmp_path / "m.json").read_text())
    payload["config"]["hidden_sizes"] = [8, 5]
    (tmp_path / "m.json").write_text(json.dumps(payload))
    with pytest.raises(DataValidationError):
        load_checkpoint(tmp_path / "m.json")
