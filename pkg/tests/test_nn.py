import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstm_ensemble.nn import (AdamState, CellState, DropoutMasks, Gradients, HyperParams,
                              InitializerScheme, LstmParameters, adam_step, backward,
                              backward_batch, batch_loss, bce_loss, cell_step, forward,
                              forward_batch, gradient_check, init_parameters, param_count,
                              sigmoid, total_param_count)
from lstm_ensemble.nn.params import BLOCK_NAMES, LSTM_BLOCKS

import oracles


def random_params(m, n, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return LstmParameters(**{k: scale * rng.standard_normal(v.shape)
                             for k, v in LstmParameters.zeros(m, n).blocks().items()})


def as_lists(params):
    return {k: v.tolist() for k, v in params.blocks().items()}


# --- sigmoid and loss --------------------------------------------------------

def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    with np.errstate(over="raise"):
        assert abs(sigmoid(-1e3)) < 1e-12
        assert sigmoid(1e3) == 1.0


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_sigmoid_monotone(a, b):
    if a < b:
        assert sigmoid(a) <= sigmoid(b)


def test_bce_values():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
    assert bce_loss(1 - 1e-7, 1) == pytest.approx(0.0, abs=1e-6)
    assert bce_loss(0.25, 0) == pytest.approx(-math.log(0.75), abs=1e-12)
    # clamped: no infinities at the edges
    assert math.isfinite(bce_loss(0.0, 1)) and math.isfinite(bce_loss(1.0, 0))


# --- parameter counting and containers --------------------------------------

def test_param_count_examples():
    assert param_count(3, 1) == 60
    assert param_count(1, 1) == 12
    assert param_count(2, 3) == 48
    assert total_param_count(3, 1) == 64


@pytest.mark.parametrize("m", range(1, 9))
@pytest.mark.parametrize("n", range(1, 9))
def test_param_count_matches_enumeration(m, n):
    params = LstmParameters.zeros(m, n)
    assert param_count(m, n) == sum(params.blocks()[b].size for b in LSTM_BLOCKS)
    assert param_count(m, n) == oracles.count_blocks_entries(m, n)
    assert total_param_count(m, n) == params.size()


def test_param_count_rejects_nonpositive():
    with pytest.raises(ValueError):
        param_count(0, 1)


def test_parameters_validate_shapes():
    blocks = LstmParameters.zeros(3, 1).blocks()
    blocks["u_input"] = np.zeros((3, 2))
    with pytest.raises(ValueError, match="u_input"):
        LstmParameters(**blocks)


def test_hyperparams_defaults_and_validation():
    h = HyperParams()
    assert (h.hidden_units, h.learning_rate, h.dropout, h.recurrent_dropout, h.batch_size, h.seq_len) == \
        (3, 0.0075, 0.06, 0.14, 6800, 240)
    for bad in ({"dropout": 1.0}, {"recurrent_dropout": -0.1}, {"learning_rate": 0.0}, {"seq_len": 0}):
        with pytest.raises(ValueError):
            HyperParams(**bad)


# --- cell step ---------------------------------------------------------------

def test_cell_step_zero_params():
    p = LstmParameters.zeros(3, 1)
    state, gates = cell_step(p, np.array([0.7]), CellState.zeros(3), return_gates=True)
    for g in (gates.forget, gates.input, gates.output):
        np.testing.assert_array_equal(g, 0.5)
    np.testing.assert_array_equal(state.s, 0.0)
    np.testing.assert_array_equal(state.h, 0.0)


def test_cell_step_saturated_gates_preserve_memory():
    p = LstmParameters.zeros(3, 1)
    p.b_forget[:] = 20.0
    p.b_input[:] = -20.0
    v = np.array([0.3, -1.2, 2.5])
    state = cell_step(p, np.array([1.0]), CellState(v.copy(), np.zeros(3)))
    np.testing.assert_allclose(state.s, v, atol=1e-8)


def test_cell_step_scalar_oracle():
    # m = n = 1, every weight and bias 0.1, x = 1, zero state: the five equations by hand.
    p = LstmParameters(**{k: np.full(v.shape, 0.1) for k, v in LstmParameters.zeros(1, 1).blocks().items()})
    state = cell_step(p, np.array([1.0]), CellState.zeros(1))
    z = 0.1 * 1.0 + 0.1 * 0.0 + 0.1
    f = i = o = 1 / (1 + math.exp(-z))
    g = math.tanh(z)
    s = f * 0.0 + i * g
    h = o * math.tanh(s)
    assert abs(state.s[0] - s) < 1e-12
    assert abs(state.h[0] - h) < 1e-12


def test_cell_step_dimension_mismatch():
    p = LstmParameters.zeros(3, 1)
    with pytest.raises(ValueError):
        cell_step(p, np.array([1.0, 2.0]), CellState.zeros(3))
    with pytest.raises(ValueError):
        cell_step(p, np.array([1.0]), CellState.zeros(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 10_000),
       st.floats(0.1, 4.0), st.floats(-5, 5))
def test_cell_state_bounds(m, n, seed, scale, x):
    p = random_params(m, n, seed, scale)
    rng = np.random.default_rng(seed)
    prev = CellState(rng.standard_normal(m) * 3, np.tanh(rng.standard_normal(m)))
    state, gates = cell_step(p, np.full(n, x), prev, return_gates=True)
    assert np.all(np.abs(state.h) <= 1.0)
    for g in (gates.forget, gates.input, gates.output):
        assert np.all((g >= 0) & (g <= 1))


# --- forward -----------------------------------------------------------------

def test_forward_zero_params_gives_half():
    p = LstmParameters.zeros(3, 1)
    pred, _ = forward(p, np.random.default_rng(0).standard_normal(17))
    assert pred == 0.5


def test_forward_single_step_is_cell_plus_output():
    p = random_params(3, 1, 4)
    state = cell_step(p, np.array([0.8]), CellState.zeros(3))
    pred, _ = forward(p, [0.8])
    assert pred == pytest.approx(float(sigmoid(p.w_out @ state.h + p.b_out)), abs=1e-15)


def test_forward_matches_stepwise_and_scalar_oracle():
    p = random_params(3, 1, 11)
    seq = np.random.default_rng(12).standard_normal(5)
    state = CellState.zeros(3)
    for x in seq:
        state = cell_step(p, np.array([x]), state)
    stepwise = float(sigmoid(p.w_out @ state.h + p.b_out))
    pred, _ = forward(p, seq)
    assert abs(pred - stepwise) < 1e-14
    assert abs(pred - oracles.lstm_predict(as_lists(p), seq.tolist())) < 1e-14


def test_forward_with_masks_matches_oracle():
    p = random_params(4, 2, 3)
    seq = np.random.default_rng(5).standard_normal((6, 2))
    masks = DropoutMasks(np.array([1 / 0.94, 0.0]), np.array([0.0, 1 / 0.86, 1 / 0.86, 0.0]))
    pred, _ = forward(p, seq, masks)
    ref = oracles.lstm_predict(as_lists(p), seq.tolist(), masks.input_mask.tolist(),
                               masks.recurrent_mask.tolist())
    assert abs(pred - ref) < 1e-14


def test_forward_batch_matches_single_and_float32_is_close():
    p = random_params(3, 1, 8)
    X = np.random.default_rng(9).standard_normal((7, 30))
    preds, _ = forward_batch(p, X)
    singles = [forward(p, x)[0] for x in X]
    np.testing.assert_allclose(preds, singles, rtol=0, atol=1e-14)
    p32, _ = forward_batch(p, X, dtype=np.float32)
    np.testing.assert_allclose(p32, preds, atol=1e-5)


def test_forward_rejects_empty_sequence():
    with pytest.raises(ValueError):
        forward(LstmParameters.zeros(3, 1), np.empty(0))


def test_zero_dropout_ignores_mask_seed():
    p = random_params(3, 1, 2)
    X = np.random.default_rng(0).standard_normal((4, 12))
    outs = []
    for seed in (0, 1, 99):
        masks = DropoutMasks.sample(np.random.default_rng(seed), 1, 3, 0.0, 0.0, batch=4)
        outs.append(forward_batch(p, X, masks)[0])
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_array_equal(outs[0], outs[2])


def test_dropout_mask_values():
    masks = DropoutMasks.sample(np.random.default_rng(0), 1, 3, 0.06, 0.14, batch=5000)
    assert set(np.unique(masks.input_mask)) <= {0.0, 1 / 0.94}
    assert set(np.unique(masks.recurrent_mask)) <= {0.0, 1 / 0.86}
    assert abs(np.mean(masks.recurrent_mask == 0) - 0.14) < 0.01
    ones = DropoutMasks.ones(1, 3)
    np.testing.assert_array_equal(ones.recurrent_mask, 1.0)


def test_inverted_dropout_expectation():
    # Small weights keep the network near-linear, where the mask mean of one
    # makes the expected prediction equal the undropped one.
    p = random_params(3, 1, 0, scale=0.01)
    x = np.random.default_rng(1).standard_normal(8)
    base, _ = forward(p, x)
    B = 20_000
    masks = DropoutMasks.sample(np.random.default_rng(2), 1, 3, 0.06, 0.14, batch=B)
    preds, _ = forward_batch(p, np.broadcast_to(x[None, :, None], (B, 8, 1)), masks)
    se = preds.std(ddof=1) / math.sqrt(B)
    assert abs(preds.mean() - base) < 3 * se


# --- backward ----------------------------------------------------------------

def test_gradient_check_example_seed_42():
    rng = np.random.default_rng(42)
    p = random_params(3, 1, 42)
    report = gradient_check(p, rng.standard_normal(10), 1.0)
    assert report.passed, report.max_rel_error
    assert report.worst < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 12), st.integers(0, 2**31), st.sampled_from([0, 1]))
def test_gradient_check_random_instances(m, T, seed, label):
    rng = np.random.default_rng(seed)
    p = random_params(m, 1, seed)
    report = gradient_check(p, rng.standard_normal(T), float(label))
    assert report.worst < 1e-4, report.max_rel_error


def test_gradient_check_zero_params_and_zero_tolerance():
    p = LstmParameters.zeros(3, 1)
    assert gradient_check(p, np.ones(4), 1.0).passed
    report = gradient_check(random_params(3, 1, 0), np.ones(4), 1.0, tolerance=0.0)
    assert not report.passed and report.flagged


def test_output_bias_gradient_is_prediction_minus_label():
    p = LstmParameters.zeros(3, 1)
    seq = np.random.default_rng(0).standard_normal(9)
    for y in (0.0, 1.0):
        pred, cache = forward(p, seq)
        g = backward(p, seq, y, None, cache)
        assert float(g.b_out) == pytest.approx(pred - y, abs=1e-15) == 0.5 - y


def test_forget_gradient_structural_zero():
    p = random_params(3, 1, 7)
    pred, cache = forward(p, [0.4])
    g = backward(p, [0.4], 1.0, None, cache)
    np.testing.assert_array_equal(g.w_forget, 0.0)
    np.testing.assert_array_equal(g.u_forget, 0.0)
    np.testing.assert_array_equal(g.b_forget, 0.0)


def test_backward_rejects_mismatched_cache():
    p = random_params(3, 1, 7)
    _, cache = forward(p, np.ones(5))
    with pytest.raises(ValueError):
        backward(p, np.ones(6), 1.0, None, cache)


def test_batch_gradient_is_mean_of_single_gradients():
    p = random_params(3, 1, 5)
    rng = np.random.default_rng(6)
    X = rng.standard_normal((4, 9))
    y = np.array([0.0, 1.0, 1.0, 0.0])
    masks = DropoutMasks.sample(np.random.default_rng(1), 1, 3, 0.06, 0.14, batch=4)
    _, cache = forward_batch(p, X, masks)
    g = backward_batch(p, X, y, cache)
    singles = []
    for b in range(4):
        mb = DropoutMasks(masks.input_mask[b], masks.recurrent_mask[b])
        _, c = forward(p, X[b], mb)
        singles.append(backward(p, X[b], y[b], mb, c))
    for name in BLOCK_NAMES:
        np.testing.assert_allclose(g.blocks()[name], np.mean([s.blocks()[name] for s in singles], axis=0),
                                   atol=1e-15)


def test_masked_gradients_match_finite_differences():
    p = random_params(3, 1, 13)
    rng = np.random.default_rng(14)
    X = rng.standard_normal((3, 7))
    y = np.array([1.0, 0.0, 1.0])
    masks = DropoutMasks.sample(np.random.default_rng(3), 1, 3, 0.3, 0.3, batch=3)
    _, cache = forward_batch(p, X, masks)
    g = backward_batch(p, X, y, cache)
    eps = 1e-6
    for name in ("w_input", "u_output", "b_candidate", "w_out"):
        arr = getattr(p, name)
        for idx in np.ndindex(arr.shape):
            hi, lo = p.copy(), p.copy()
            getattr(hi, name)[idx] += eps
            getattr(lo, name)[idx] -= eps
            num = (batch_loss(hi, X, y, masks) - batch_loss(lo, X, y, masks)) / (2 * eps)
            assert abs(num - getattr(g, name)[idx]) < 1e-7 + 1e-5 * abs(num)


def test_float32_forward_gradients_close_to_float64():
    p = random_params(3, 1, 1, scale=0.3)
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 60))
    y = (rng.random(50) > 0.5).astype(float)
    g64 = backward_batch(p, X, y, forward_batch(p, X)[1])
    g32 = backward_batch(p, X, y, forward_batch(p, X, dtype=np.float32)[1])
    for name in BLOCK_NAMES:
        np.testing.assert_allclose(g32.blocks()[name], g64.blocks()[name], atol=1e-6)


# --- Adam --------------------------------------------------------------------

def zero_grads(m=3, n=1):
    return Gradients(**LstmParameters.zeros(m, n).blocks())


def test_adam_zero_gradient_is_fixed_point():
    p = random_params(3, 1, 0)
    new, state = adam_step(p, zero_grads(), AdamState.for_params(p), 0.0075)
    for name in BLOCK_NAMES:
        np.testing.assert_array_equal(new.blocks()[name], p.blocks()[name])
    assert state.step == 1


def test_adam_first_step_is_lr_times_sign():
    p = LstmParameters.zeros(3, 1)
    g = zero_grads()
    g.b_out = np.array(-2.5)
    g.w_input[:] = 1e-3
    new, _ = adam_step(p, g, AdamState.for_params(p), 0.01)
    assert float(new.b_out) == pytest.approx(0.01, rel=1e-6)
    np.testing.assert_allclose(new.w_input, -0.01, rtol=1e-4)


def test_adam_matches_scalar_oracle_and_steps_shrink():
    p = LstmParameters.zeros(1, 1)
    state = AdamState.for_params(p)
    m = v = 0.0
    w = 0.0
    updates = []
    for t in range(1, 4):
        g = zero_grads(1, 1)
        g.b_out = np.array(0.3)
        before = float(p.b_out)
        p, state = adam_step(p, g, state, 0.1)
        m = 0.9 * m + 0.1 * 0.3
        v = 0.999 * v + 0.001 * 0.09
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert float(p.b_out) == pytest.approx(w, abs=1e-15)
        updates.append(abs(float(p.b_out) - before))
    assert updates[1] <= updates[0] + 1e-9
    assert np.all(state.second["b_out"] >= 0)


def test_adam_rejects_nonfinite_gradient_by_name():
    p = LstmParameters.zeros(3, 1)
    g = zero_grads()
    g.u_candidate[1, 2] = np.nan
    with pytest.raises(ValueError, match="u_candidate"):
        adam_step(p, g, AdamState.for_params(p), 0.01)
    with pytest.raises(ValueError):
        adam_step(p, zero_grads(), AdamState.for_params(p), 0.0)


# --- initializers ------------------------------------------------------------

WEIGHTS = [b for b in BLOCK_NAMES if b[0] in "wu" and b != "w_out"]


def test_zeros_and_constant_schemes():
    p = init_parameters(InitializerScheme.ZEROS, 3, 1, seed=5)
    for name in WEIGHTS:
        assert np.all(getattr(p, name) == 0.0)
    c = init_parameters(InitializerScheme.CONSTANT, 2, 1, seed=5)
    for name in WEIGHTS:
        assert np.all(getattr(c, name) == 0.05)
    o = init_parameters(InitializerScheme.ONES, 2, 1, seed=5)
    for name in WEIGHTS:
        assert np.all(getattr(o, name) == 1.0)


def test_biases_are_zero_for_every_scheme():
    for scheme in InitializerScheme:
        p = init_parameters(scheme, 3, 1, seed=1)
        for name in ("b_forget", "b_input", "b_output", "b_candidate", "b_out"):
            assert np.all(getattr(p, name) == 0.0), (scheme, name)


def test_orthogonal_recurrent_blocks():
    p = init_parameters(InitializerScheme.ORTHOGONAL, 4, 1, seed=7)
    for name in ("u_forget", "u_input", "u_output", "u_candidate"):
        q = getattr(p, name)
        np.testing.assert_allclose(q.T @ q, np.eye(4), atol=1e-10)


def test_identity_scheme_falls_back_on_input_blocks():
    p = init_parameters(InitializerScheme.IDENTITY, 3, 1, seed=2)
    for name in ("u_forget", "u_input", "u_output", "u_candidate"):
        np.testing.assert_array_equal(getattr(p, name), np.eye(3))
    limit = math.sqrt(6 / (3 + 1))
    for name in ("w_forget", "w_input", "w_output", "w_candidate"):
        w = getattr(p, name)
        assert np.all(np.abs(w) <= limit) and np.any(w != 0)


def test_distribution_scales():
    big = 200
    rn = init_parameters(InitializerScheme.RANDOM_NORMAL, big, 1, seed=0).u_input
    assert abs(rn.std() - 0.05) < 0.002
    ru = init_parameters(InitializerScheme.RANDOM_UNIFORM, big, 1, seed=0).u_input
    assert np.all(np.abs(ru) <= 0.05) and ru.max() > 0.049
    tn = init_parameters(InitializerScheme.TRUNCATED_NORMAL, big, 1, seed=0).u_input
    assert np.all(np.abs(tn) <= 0.1)
    gn = init_parameters(InitializerScheme.GLOROT_NORMAL, big, 1, seed=0).u_input
    assert abs(gn.std() - math.sqrt(2 / (2 * big))) < 0.003
    vs = init_parameters(InitializerScheme.VARIANCE_SCALING, big, 1, seed=0).u_input
    assert np.all(np.abs(vs) <= 2 * math.sqrt(1 / big) + 1e-12)


@given(st.sampled_from(list(InitializerScheme)), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_init_is_deterministic(scheme, m, seed):
    a = init_parameters(scheme, m, 1, seed)
    b = init_parameters(scheme, m, 1, seed)
    for name in BLOCK_NAMES:
        np.testing.assert_array_equal(a.blocks()[name], b.blocks()[name])
    assert a.is_finite()


def test_scheme_parsing():
    assert InitializerScheme.parse("glorotuniform") is InitializerScheme.GLOROT_UNIFORM
    assert len(list(InitializerScheme)) == 11
    with pytest.raises(ValueError, match="GlorotUniform"):
        InitializerScheme.parse("He")
