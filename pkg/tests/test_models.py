import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntkalign.core import ShiftOperator, stack
from ntkalign.models import (
    ACTIVATIONS,
    FilterParams,
    InitConfig,
    MimoGnnParams,
    TwoLayerGnnParams,
    filter_forward,
    filter_jacobian,
    flatten_params,
    get_activation,
    gnn2_forward,
    gnn2_jacobian,
    init_filter,
    init_gnn2,
    init_mimo,
    load_params,
    mimo_forward,
    save_params,
    unflatten_params,
)


def random_shift(rng, n):
    a = rng.standard_normal((n, n))
    s = (a + a.T) / 2.0
    return ShiftOperator(s / np.linalg.norm(s))


def fd_jacobian(fn, params, step=1e-5):
    """Central finite differences of fn(params) along the flat layout."""
    flat = flatten_params(params)
    cols = []
    for j in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[j] += step
        lo[j] -= step
        cols.append((fn(unflatten_params(hi, params)) - fn(unflatten_params(lo, params))) / (2 * step))
    return np.column_stack(cols)


class TestActivations:
    def test_registry_names(self):
        assert set(ACTIVATIONS) == {"tanh", "identity", "sigmoid", "relu", "leaky_relu"}

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            get_activation("swish")

    @pytest.mark.parametrize("name", ["tanh", "sigmoid"])
    def test_smooth_derivative_matches_fd(self, name):
        act = get_activation(name)
        u = np.linspace(-4, 4, 41)
        fd = (act.fn(u + 1e-6) - act.fn(u - 1e-6)) / 2e-6
        assert np.allclose(act.deriv(u), fd, atol=1e-7)

    def test_relu_kink_convention(self):
        act = get_activation("relu")
        assert act.deriv(np.array([0.0]))[0] == 0.0
        leaky = get_activation("leaky_relu")
        assert leaky.fn(np.array([-2.0]))[0] == pytest.approx(-0.02)

    def test_sigmoid_stable_at_extremes(self):
        act = get_activation("sigmoid")
        out = act.fn(np.array([-800.0, 800.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0, abs=1e-300)
        assert out[1] == pytest.approx(1.0)

    def test_analytic_ntk_flags(self):
        assert get_activation("tanh").analytic_ntk
        assert get_activation("identity").analytic_ntk
        assert not get_activation("relu").analytic_ntk


class TestFilterForward:
    def test_identity_filter(self):
        rng = np.random.default_rng(0)
        s = random_shift(rng, 5)
        x = rng.standard_normal(5)
        out = filter_forward(s, FilterParams(np.array([1.0, 0.0, 0.0])), x)
        assert np.allclose(out, x)

    def test_zero_shift_keeps_first_tap(self):
        s = ShiftOperator(np.zeros((4, 4)))
        x = np.arange(4.0)
        out = filter_forward(s, FilterParams(np.array([2.0, 5.0, -1.0])), x)
        assert np.allclose(out, 2.0 * x)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_matches_dense_polynomial(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, 5))
        s = random_shift(rng, n)
        taps = rng.standard_normal(k)
        x = rng.standard_normal((n, 3))
        dense = sum(taps[j] * np.linalg.matrix_power(s.matrix, j) for j in range(k))
        assert np.allclose(filter_forward(s, FilterParams(taps), x), dense @ x, atol=1e-12)

    def test_shape_mismatch(self):
        s = ShiftOperator(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            filter_forward(s, FilterParams(np.ones(2)), np.ones(5))


class TestFilterJacobian:
    def test_single_tap_is_signal(self):
        rng = np.random.default_rng(1)
        s = random_shift(rng, 4)
        x = rng.standard_normal(4)
        assert np.allclose(filter_jacobian(s, x, 1), x[:, None])

    def test_identity_shift_repeats_columns(self):
        x = np.arange(3.0)
        jac = filter_jacobian(ShiftOperator(np.eye(3)), x, 4)
        assert np.allclose(jac, np.tile(x[:, None], (1, 4)))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        s = random_shift(rng, 5)
        x = rng.standard_normal(5)
        params = FilterParams(rng.standard_normal(3))
        jac = filter_jacobian(s, x, 3)
        fd = fd_jacobian(lambda p: filter_forward(s, p, x), params)
        assert np.linalg.norm(jac - fd) <= 1e-7 * max(np.linalg.norm(fd), 1.0)

    def test_stacked_rows_are_sample_major(self):
        rng = np.random.default_rng(3)
        s = random_shift(rng, 4)
        x = rng.standard_normal((4, 3))
        jac = filter_jacobian(s, x, 2)
        assert jac.shape == (12, 2)
        for i in range(3):
            assert np.allclose(jac[i * 4 : (i + 1) * 4], filter_jacobian(s, x[:, i], 2))


class TestGnn2Forward:
    def test_zero_params(self):
        rng = np.random.default_rng(4)
        s = random_shift(rng, 4)
        params = TwoLayerGnnParams(np.zeros((3, 2)), np.zeros((3, 2)))
        assert np.allclose(gnn2_forward(s, params, rng.standard_normal(4)), 0.0)

    def test_two_identity_filters(self):
        rng = np.random.default_rng(5)
        s = random_shift(rng, 5)
        x = rng.standard_normal(5)
        e0 = np.array([[1.0, 0.0]])
        params = TwoLayerGnnParams(e0, e0, "identity")
        assert np.allclose(gnn2_forward(s, params, x), x, atol=1e-14)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_identity_activation_collapses_to_tap_convolution(self, seed):
        rng = np.random.default_rng(seed)
        n, width, k = int(rng.integers(2, 6)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        s = random_shift(rng, n)
        g = rng.standard_normal((width, k))
        h = rng.standard_normal((width, k))
        x = rng.standard_normal(n)
        params = TwoLayerGnnParams(g, h, "identity")
        eff = sum(np.convolve(g[f], h[f]) for f in range(width)) / np.sqrt(width)
        expected = filter_forward(s, FilterParams(eff), x)
        assert np.allclose(gnn2_forward(s, params, x), expected, atol=1e-10)

    def test_one_homogeneous_in_second_layer(self):
        rng = np.random.default_rng(6)
        s = random_shift(rng, 4)
        x = rng.standard_normal((4, 2))
        params = init_gnn2(3, 2, InitConfig(kappa=0.7, seed=11))
        scaled = TwoLayerGnnParams(params.g, 3.5 * params.h, params.activation)
        assert np.allclose(gnn2_forward(s, scaled, x), 3.5 * gnn2_forward(s, params, x))

    def test_matrix_input_matches_per_column(self):
        rng = np.random.default_rng(7)
        s = random_shift(rng, 4)
        x = rng.standard_normal((4, 3))
        params = init_gnn2(2, 3, InitConfig(kappa=1.0, seed=8))
        out = gnn2_forward(s, params, x)
        for i in range(3):
            assert np.allclose(out[:, i], gnn2_forward(s, params, x[:, i]))


class TestGnn2Jacobian:
    def test_second_layer_identity_passthrough(self):
        # sigma = identity with g = e0 makes every feature equal to x
        rng = np.random.default_rng(8)
        s = random_shift(rng, 4)
        x = rng.standard_normal(4)
        width, k = 3, 2
        g = np.tile([1.0, 0.0], (width, 1))
        params = TwoLayerGnnParams(g, rng.standard_normal((width, k)), "identity")
        jac = gnn2_jacobian(s, params, x, which_layer="second")
        powers = s.powers_applied(x, k)
        for f in range(width):
            for j in range(k):
                assert np.allclose(jac[:, f * k + j], powers[j] / np.sqrt(width))

    def test_first_layer_vanishes_without_readout(self):
        rng = np.random.default_rng(9)
        s = random_shift(rng, 5)
        params = TwoLayerGnnParams(rng.standard_normal((3, 2)), np.zeros((3, 2)))
        jac = gnn2_jacobian(s, params, rng.standard_normal(5), which_layer="first")
        assert np.allclose(jac, 0.0)

    def test_tanh_against_finite_differences(self):
        rng = np.random.default_rng(10)
        s = random_shift(rng, 4)
        x = rng.standard_normal(4)
        params = init_gnn2(3, 2, InitConfig(kappa=0.9, seed=21))
        jac = gnn2_jacobian(s, params, x)
        fd = fd_jacobian(lambda p: gnn2_forward(s, p, x), params)
        assert np.linalg.norm(jac - fd) <= 1e-5 * np.linalg.norm(fd)

    @pytest.mark.parametrize("activation", ["tanh", "identity", "sigmoid"])
    def test_smooth_activations_fifty_instances(self, activation):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            width = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            s = random_shift(rng, n)
            x = rng.standard_normal(n)
            params = TwoLayerGnnParams(
                rng.standard_normal((width, k)), rng.standard_normal((width, k)), activation
            )
            jac = gnn2_jacobian(s, params, x)
            fd = fd_jacobian(lambda p: gnn2_forward(s, p, x), params)
            assert np.linalg.norm(jac - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-12)

    def test_both_is_first_then_second(self):
        rng = np.random.default_rng(12)
        s = random_shift(rng, 4)
        x = rng.standard_normal((4, 2))
        params = init_gnn2(2, 2, InitConfig(kappa=1.1, seed=3))
        both = gnn2_jacobian(s, params, x, which_layer="both")
        first = gnn2_jacobian(s, params, x, which_layer="first")
        second = gnn2_jacobian(s, params, x, which_layer="second")
        assert np.allclose(both, np.hstack([first, second]))

    def test_stacked_rows_match_stack_convention(self):
        rng = np.random.default_rng(13)
        s = random_shift(rng, 3)
        x = rng.standard_normal((3, 4))
        params = init_gnn2(2, 2, InitConfig(kappa=0.8, seed=5))
        jac = gnn2_jacobian(s, params, x)
        fd = fd_jacobian(lambda p: stack(gnn2_forward(s, p, x)), params)
        assert np.linalg.norm(jac - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_rejects_unknown_layer_choice(self):
        s = ShiftOperator(np.zeros((2, 2)))
        params = init_gnn2(1, 1, InitConfig(kappa=1.0, seed=0))
        with pytest.raises(ValueError):
            gnn2_jacobian(s, params, np.ones(2), which_layer="third")


class TestInit:
    def test_deterministic_given_seed(self):
        cfg = InitConfig(kappa=0.5, seed=42)
        a = init_gnn2(4, 3, cfg)
        b = init_gnn2(4, 3, cfg)
        assert np.array_equal(a.g, b.g) and np.array_equal(a.h, b.h)

    def test_sample_variance_near_kappa_squared(self):
        params = init_gnn2(250, 200, InitConfig(kappa=0.7, seed=1))
        draws = np.concatenate([params.g.ravel(), params.h.ravel()])
        assert draws.size == 100_000
        assert abs(draws.var() - 0.49) <= 0.02 * 0.49

    def test_small_kappa_shrinks_output(self):
        rng = np.random.default_rng(14)
        s = random_shift(rng, 4)
        x = rng.standard_normal(4)
        out = gnn2_forward(s, init_gnn2(3, 2, InitConfig(kappa=1e-8, seed=2)), x)
        assert np.linalg.norm(out) < 1e-12

    def test_rejects_bad_kappa(self):
        with pytest.raises(ValueError):
            InitConfig(kappa=0.0, seed=1)

    def test_filter_and_mimo_shapes(self):
        assert init_filter(4, InitConfig(kappa=1.0, seed=0)).num_taps == 4
        mimo = init_mimo([1, 3, 2, 1], 2, InitConfig(kappa=1.0, seed=0))
        assert [w.shape for w in mimo.layers] == [(3, 1, 2), (2, 3, 2), (1, 2, 2)]


class TestMimo:
    def test_two_layer_config_collapses_to_gnn2(self):
        rng = np.random.default_rng(15)
        s = random_shift(rng, 5)
        x = rng.standard_normal((5, 3))
        params = init_gnn2(4, 2, InitConfig(kappa=0.9, seed=7))
        # mimo has no width scaling, so fold 1/sqrt(F) into the readout taps
        layers = (params.g[:, None, :], (params.h / np.sqrt(4))[None, :, :])
        mimo = MimoGnnParams(layers, params.activation)
        assert np.allclose(mimo_forward(s, mimo, x), gnn2_forward(s, params, x), atol=1e-12)

    def test_zero_taps(self):
        rng = np.random.default_rng(16)
        s = random_shift(rng, 3)
        mimo = MimoGnnParams((np.zeros((2, 1, 2)), np.zeros((1, 2, 2))))
        assert np.allclose(mimo_forward(s, mimo, rng.standard_normal(3)), 0.0)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_identity_activation_matches_block_polynomial(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        k = int(rng.integers(1, 3))
        sizes = [1, int(rng.integers(1, 4)), int(rng.integers(1, 4)), 1]
        s = random_shift(rng, n)
        mimo = init_mimo(sizes, k, InitConfig(kappa=1.0, seed=seed), "identity")
        x = rng.standard_normal(n)
        total = np.eye(n)
        for w in mimo.layers:
            block = sum(
                np.kron(w[:, :, j], np.linalg.matrix_power(s.matrix, j))
                for j in range(w.shape[2])
            )
            total = block @ total
        assert np.allclose(mimo_forward(s, mimo, x), total @ x, atol=1e-10)

    def test_rejects_broken_feature_chain(self):
        with pytest.raises(ValueError):
            MimoGnnParams((np.zeros((3, 1, 2)), np.zeros((1, 4, 2))))

    def test_rejects_multi_feature_ends(self):
        with pytest.raises(ValueError):
            MimoGnnParams((np.zeros((3, 2, 2)), np.zeros((1, 3, 2))))
        with pytest.raises(ValueError):
            MimoGnnParams((np.zeros((3, 1, 2)), np.zeros((2, 3, 2))))


class TestSerialization:
    @pytest.mark.parametrize("make", [
        lambda: init_filter(3, InitConfig(kappa=1.2, seed=30)),
        lambda: init_gnn2(3, 2, InitConfig(kappa=0.4, seed=31), "sigmoid"),
        lambda: init_mimo([1, 2, 1], 3, InitConfig(kappa=0.8, seed=32), "relu"),
    ])
    def test_round_trip(self, make, tmp_path):
        params = make()
        path = tmp_path / "params.csv"
        save_params(path, params)
        loaded = load_params(path)
        assert type(loaded) is type(params)
        assert np.array_equal(flatten_params(loaded), flatten_params(params))
        if hasattr(params, "activation"):
            assert loaded.activation == params.activation

    def test_flatten_round_trip_preserves_layout(self):
        params = init_gnn2(2, 3, InitConfig(kappa=1.0, seed=33))
        flat = flatten_params(params)
        rebuilt = unflatten_params(flat, params)
        assert np.array_equal(rebuilt.g, params.g)
        assert np.array_equal(rebuilt.h, params.h)
        # layer 1 occupies the leading block
        assert np.array_equal(flat[: params.g.size], params.g.ravel())

    def test_unflatten_rejects_wrong_length(self):
        params = init_filter(3, InitConfig(kappa=1.0, seed=34))
        with pytest.raises(ValueError):
            unflatten_params(np.zeros(4), params)

    def test_load_rejects_unknown_schema(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text('{"schema_version": 99, "kind": "filter", "num_taps": 1}\n1.0\n')
        with pytest.raises(ValueError):
            load_params(path)
