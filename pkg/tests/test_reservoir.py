import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.stats import binom

from hetero_esn.errors import ConfigError, EmptyInputError, NumericalError, ShapeError
from hetero_esn.reservoir import (
    DelayBuffer,
    Layer,
    LayerConfig,
    LayerWeights,
    ReservoirModel,
    SubGroupPartition,
    build_model,
    init_layer,
    layer_seed,
    run_sequence,
    step_deep,
    step_hetero_deep,
    step_hetero_shallow,
    step_shallow,
    trainable_parameters,
)


def scalar_weights(w, w_in, theta=0.0):
    return LayerWeights(sparse.csr_matrix([[w]]), np.array([[w_in]]), np.array([theta]))


def make_layer(n, n_in, seed, delay=0, rho=0.3, leak=0.5, conn=0.2, bias=0.0):
    cfg = LayerConfig(size=n, spectral_radius=rho, leak_rate=leak, input_scale=0.5,
                      bias_scale=bias, connectivity=conn, delay=delay, seed=seed)
    return Layer(cfg, init_layer(cfg, n_in))


class TestScalarOracle:
    # x = 0.2, u = 1, w = 0.3, w_in = 0.1, a = 0.5: pre-activation 0.16
    def test_leak_on_activation(self):
        x = step_shallow(np.array([0.2]), np.array([1.0]), scalar_weights(0.3, 0.1), 0.5)
        expected = 0.5 * 0.2 + 0.5 * math.tanh(0.16)
        assert x[0] == pytest.approx(expected, abs=1e-15)
        assert x[0] == pytest.approx(0.17932, abs=1e-5)

    def test_plain_activation(self):
        x = step_shallow(np.array([0.2]), np.array([1.0]), scalar_weights(0.3, 0.1), 0.5,
                         leak_on_activation=False)
        assert x[0] == pytest.approx(0.5 * 0.2 + math.tanh(0.16), abs=1e-15)
        assert x[0] == pytest.approx(0.25865, abs=1e-5)

    def test_leak_one_is_plain_esn(self):
        w = scalar_weights(0.3, 0.1, 0.05)
        x = step_shallow(np.array([0.2]), np.array([1.0]), w, 1.0)
        assert x[0] == pytest.approx(math.tanh(0.21), abs=1e-15)


class TestInit:
    def test_deterministic(self):
        cfg = LayerConfig(size=50, connectivity=0.1, seed=7, bias_scale=0.1)
        a, b = init_layer(cfg, 3), init_layer(cfg, 3)
        assert (a.W != b.W).nnz == 0
        np.testing.assert_array_equal(a.W_in, b.W_in)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_seeds_differ(self):
        a = init_layer(LayerConfig(size=50, seed=1), 3)
        b = init_layer(LayerConfig(size=50, seed=2), 3)
        assert not np.array_equal(a.W_in, b.W_in)

    @pytest.mark.parametrize("rho", [0.1, 0.3, 0.9, 1.2])
    def test_spectral_radius_enforced(self, rho):
        w = init_layer(LayerConfig(size=80, spectral_radius=rho, connectivity=0.1, seed=3), 2)
        assert np.max(np.abs(np.linalg.eigvals(w.W.toarray()))) == pytest.approx(rho, abs=1e-9)

    def test_input_and_bias_ranges(self):
        w = init_layer(LayerConfig(size=200, input_scale=0.1, bias_scale=0.05, seed=0), 4)
        assert np.abs(w.W_in).max() <= 0.1 and np.abs(w.W_in).max() > 0.09
        assert np.abs(w.theta).max() <= 0.05
        w0 = init_layer(LayerConfig(size=20, bias_scale=0.0, seed=0), 4)
        np.testing.assert_array_equal(w0.theta, 0.0)

    def test_nonzero_count_binomial(self):
        n, p = 300, 0.1
        w = init_layer(LayerConfig(size=n, connectivity=p, seed=11), 1)
        lo, hi = binom.ppf([0.0005, 0.9995], n * n, p)
        assert lo <= w.W.nnz <= hi

    def test_weights_are_read_only(self):
        w = init_layer(LayerConfig(size=10, seed=0), 2)
        with pytest.raises(ValueError):
            w.W_in[0, 0] = 1.0
        with pytest.raises(ValueError):
            w.W.data[0] = 1.0

    def test_layer_seed_distinct(self):
        seeds = {layer_seed(m, i) for m in range(5) for i in range(4)}
        assert len(seeds) == 20

    @pytest.mark.parametrize("kwargs", [
        dict(size=0), dict(spectral_radius=-0.1), dict(leak_rate=0.0), dict(leak_rate=1.5),
        dict(connectivity=0.0), dict(connectivity=1.1), dict(input_scale=-1.0), dict(delay=-1),
    ])
    def test_invalid_config(self, kwargs):
        base = dict(size=10)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            LayerConfig(**base)


class TestStructure:
    def test_partition(self):
        p = SubGroupPartition.equal(10, (1, 3, 5))
        assert p.group_sizes == (4, 3, 3)
        assert p.size == 10 and p.max_delay == 5
        assert [(s.start, s.stop) for s in p.slices()] == [(0, 4), (4, 7), (7, 10)]
        with pytest.raises(ConfigError):
            SubGroupPartition((2, 0), (0, 1))
        with pytest.raises(ConfigError):
            SubGroupPartition((2, 2), (0,))

    def test_delay_buffer(self):
        buf = DelayBuffer(2, 3)
        np.testing.assert_array_equal(buf.read(0), [0, 0])
        for k in range(1, 5):
            buf.push(np.array([k, -k], dtype=float))
        assert len(buf) == 3
        np.testing.assert_array_equal(buf.read(0), [4, -4])
        np.testing.assert_array_equal(buf.read(2), [2, -2])
        with pytest.raises(ConfigError):
            buf.read(3)
        buf.clear()
        assert len(buf) == 0
        np.testing.assert_array_equal(buf.read(1), [0, 0])

    def test_model_validation(self):
        l1 = make_layer(5, 2, 0)
        with pytest.raises(ConfigError):
            ReservoirModel("shallow", (l1, l1))
        with pytest.raises(ConfigError):
            ReservoirModel("hetero_shallow", (l1,))
        with pytest.raises(ShapeError):
            ReservoirModel("hetero_shallow", (l1,), SubGroupPartition((2, 2), (0, 1)))
        with pytest.raises(ShapeError):
            ReservoirModel("deep", (l1, make_layer(5, 3, 1)))
        with pytest.raises(ConfigError):
            ReservoirModel("bogus", (l1,))

    def test_parameter_count(self):
        model = build_model("shallow", 252, [LayerConfig(size=2000, seed=0, connectivity=0.01)])
        assert trainable_parameters(model, 35) == 35 * (252 + 2000)


class TestHeteroOracles:
    def test_four_neuron_subgroups(self):
        # groups {0,1} with tau=0 and {2,3} with tau=1, three input steps
        rng = np.random.default_rng(5)
        Wd = rng.uniform(-0.4, 0.4, (4, 4))
        Win = rng.uniform(-1, 1, (4, 1))
        a = 0.6
        w = LayerWeights(sparse.csr_matrix(Wd), Win, np.zeros(4))
        model = ReservoirModel("hetero_shallow", (Layer(LayerConfig(size=4, leak_rate=a), w),),
                               SubGroupPartition((2, 2), (0, 1)))
        us = [0.5, -1.0, 0.25]

        hist = {-1: [0.0] * 4, -2: [0.0] * 4}
        rows = []
        for t, u in enumerate(us):
            xd = [hist[t - 1][0], hist[t - 1][1], hist[t - 2][2], hist[t - 2][3]]
            new = []
            for i in range(4):
                pre = Win[i, 0] * u + sum(Wd[i, j] * xd[j] for j in range(4))
                new.append((1 - a) * xd[i] + a * math.tanh(pre))
            hist[t] = new
            rows.append([new[0], new[1], hist[t - 1][2], hist[t - 1][3]])

        got = run_sequence(model, np.array(us)[:, None])
        np.testing.assert_allclose(got, rows, rtol=0, atol=1e-14)

        buf = DelayBuffer(4, 2)
        for t, u in enumerate(us):
            x = step_hetero_shallow(buf, np.array([u]), w, a, model.partition)
            np.testing.assert_allclose(x, hist[t], atol=1e-14)

    def test_two_layer_scalar_delays(self):
        # layer 1 tau=0, layer 2 tau=1, scalar units
        w1, v1, w2, v2, a = 0.3, 0.8, -0.5, 1.2, 0.5
        l1 = Layer(LayerConfig(size=1, leak_rate=a, delay=0), scalar_weights(w1, v1))
        l2 = Layer(LayerConfig(size=1, leak_rate=a, delay=1), scalar_weights(w2, v2))
        model = ReservoirModel("hetero_deep", (l1, l2))
        us = [1.0, -0.5, 0.3, 0.9]

        x1 = {-1: 0.0}
        x2 = {-1: 0.0, -2: 0.0}
        expected = []
        for t, u in enumerate(us):
            x1[t] = (1 - a) * x1[t - 1] + a * math.tanh(v1 * u + w1 * x1[t - 1])
            x2[t] = (1 - a) * x2[t - 2] + a * math.tanh(v2 * x1[t] + w2 * x2[t - 2])
            expected.append([x1[t], x2[t - 1]])

        np.testing.assert_allclose(run_sequence(model, np.array(us)[:, None]), expected, atol=1e-15)

        bufs = [DelayBuffer(1, 1), DelayBuffer(1, 2)]
        for t, u in enumerate(us):
            s = step_hetero_deep(bufs, np.array([u]), model.layers)
            assert s[0][0] == pytest.approx(x1[t], abs=1e-15)
            assert s[1][0] == pytest.approx(x2[t], abs=1e-15)


def test_zero_input_fixed_point():
    model = build_model("deep", 3, [LayerConfig(size=20, seed=s, bias_scale=0.0) for s in range(2)])
    np.testing.assert_array_equal(run_sequence(model, np.zeros((30, 3))), 0.0)


def test_step_deep_matches_run_sequence():
    layers = (make_layer(12, 2, 1, bias=0.1), make_layer(9, 12, 2, bias=0.1))
    model = ReservoirModel("deep", layers)
    U = np.random.default_rng(0).standard_normal((25, 2))
    states = [np.zeros(12), np.zeros(9)]
    rows = []
    for u in U:
        states = step_deep(states, u, layers)
        rows.append(np.concatenate(states))
    np.testing.assert_allclose(run_sequence(model, U), rows, atol=1e-14)


def test_washout_drops_leading_rows():
    model = ReservoirModel("shallow", (make_layer(10, 1, 0),))
    U = np.random.default_rng(0).standard_normal((40, 1))
    np.testing.assert_array_equal(run_sequence(model, U, washout=15), run_sequence(model, U)[15:])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), rho=st.floats(0.05, 1.5), leak=st.floats(0.05, 1.0))
def test_states_bounded(seed, rho, leak):
    cfg = LayerConfig(size=30, spectral_radius=rho, leak_rate=leak, input_scale=5.0, seed=seed)
    model = build_model("shallow", 2, [cfg])
    U = np.random.default_rng(seed).uniform(-10, 10, (60, 2))
    assert np.abs(run_sequence(model, U)).max() <= 1.0


def test_relabeling_equivariance():
    rng = np.random.default_rng(3)
    n = 15
    layer = make_layer(n, 2, 4, bias=0.1)
    w = layer.weights
    P = rng.permutation(n)
    Wp = sparse.csr_matrix(w.W.toarray()[np.ix_(P, P)])
    permuted = Layer(layer.config, LayerWeights(Wp, w.W_in[P], w.theta[P]))
    U = rng.standard_normal((50, 2))
    a = run_sequence(ReservoirModel("shallow", (layer,)), U)
    b = run_sequence(ReservoirModel("shallow", (permuted,)), U)
    np.testing.assert_allclose(b, a[:, P], atol=1e-14)


def test_contractivity_forgets_initial_state():
    model = ReservoirModel("shallow", (make_layer(50, 3, 9, rho=0.3, leak=0.5),))
    U = np.random.default_rng(0).standard_normal((200, 3))
    rng = np.random.default_rng(1)
    x1 = run_sequence(model, U, initial_states=[rng.uniform(-1, 1, 50)])
    x2 = run_sequence(model, U, initial_states=[rng.uniform(-1, 1, 50)])
    assert np.abs(x1[-1] - x2[-1]).max() < 1e-6


def test_input_validation():
    model = ReservoirModel("shallow", (make_layer(5, 2, 0),))
    with pytest.raises(EmptyInputError):
        run_sequence(model, np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        run_sequence(model, np.zeros((4, 3)))
    with pytest.raises(ConfigError):
        run_sequence(model, np.zeros((4, 2)), washout=4)
    bad = np.zeros((6, 2))
    bad[3, 1] = np.nan
    with pytest.raises(NumericalError, match="step 3"):
        run_sequence(model, bad)


def test_overflowing_state_reported():
    w = LayerWeights(sparse.csr_matrix([[0.0]]), np.array([[1.0]]), np.zeros(1))
    with pytest.raises(NumericalError):
        step_shallow(np.array([np.inf]), np.array([0.0]), w, 0.5)
