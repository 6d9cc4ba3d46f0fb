"""Numeric core: forward values against independent oracles, gradients
against central finite differences, and the optimizer update formulas."""

import numpy as np
import pytest

import gatdst.autodiff as ad
from gatdst.errors import DimensionError, InvariantError
from gatdst.optim import AdamWState, ParameterGroup, adamw_step, linear_decay_lr


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop reference implementation."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestMatmul:
    def test_identity(self):
        x = np.arange(9.0).reshape(3, 3)
        out = ad.matmul(ad.constant(np.eye(3)), ad.constant(x))
        np.testing.assert_array_equal(out.data, x)

    def test_projection(self):
        out = ad.matmul(ad.constant([[1, 0], [0, 0]]), ad.constant([[2], [3]]))
        np.testing.assert_array_equal(out.data, [[2], [0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(3, 2))
        out = ad.matmul(ad.constant(a), ad.constant(b))
        np.testing.assert_allclose(out.data, naive_matmul(a, b), atol=1e-12)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 2))))


class TestLeakyRelu:
    @pytest.mark.parametrize(
        "x,slope,expected", [(5.0, 0.2, 5.0), (-1.0, 0.2, -0.2), (-3.0, 1.0, -3.0), (7.0, 1.0, 7.0)]
    )
    def test_values(self, x, slope, expected):
        out = ad.leaky_relu(ad.constant([[x]]), slope)
        assert out.item() == pytest.approx(expected)

    def test_slope_one_is_identity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4))
        out = ad.leaky_relu(ad.constant(x), 1.0)
        np.testing.assert_array_equal(out.data, x)

    def test_subgradient_at_zero_is_slope(self):
        x = ad.parameter([[0.0]], "x")
        loss = ad.sum_all(ad.leaky_relu(x, 0.2))
        ad.backward(loss)
        assert x.grad[0, 0] == pytest.approx(0.2)


class TestMaskedRowSoftmax:
    def test_uniform_over_two_unmasked(self):
        scores = ad.constant(np.zeros((1, 3)))
        out = ad.masked_row_softmax(scores, np.array([[1.0, 1.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5, 0.0]])

    def test_all_zero_mask_row_gives_zeros(self):
        scores = ad.constant(np.ones((2, 2)))
        mask = np.array([[0.0, 0.0], [1.0, 1.0]])
        out = ad.masked_row_softmax(scores, mask)
        np.testing.assert_array_equal(out.data[0], [0.0, 0.0])
        np.testing.assert_allclose(out.data[1].sum(), 1.0)

    def test_matches_direct_formula_oracle(self):
        rng = np.random.default_rng(2)
        scores = rng.normal(size=(5, 5))
        mask = (rng.random((5, 5)) < 0.6).astype(float)
        out = ad.masked_row_softmax(ad.constant(scores), mask)
        # Direct exp/sum per row over the unmasked entries.
        expected = np.zeros((5, 5))
        for i in range(5):
            cols = [j for j in range(5) if mask[i, j] == 1.0]
            if not cols:
                continue
            e = np.exp([scores[i, j] for j in cols])
            for j, val in zip(cols, e / e.sum()):
                expected[i, j] = val
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_rows_sum_to_one_and_masked_exactly_zero(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            scores = rng.normal(size=(6, 6)) * 5
            mask = (rng.random((6, 6)) < 0.5).astype(float)
            out = ad.masked_row_softmax(ad.constant(scores), mask).data
            assert np.all(out[mask == 0.0] == 0.0)
            nonempty = mask.sum(axis=1) > 0
            np.testing.assert_allclose(out[nonempty].sum(axis=1), 1.0, atol=1e-9)

    def test_rejects_non_binary_mask(self):
        with pytest.raises(InvariantError):
            ad.masked_row_softmax(ad.constant(np.zeros((1, 2))), np.array([[0.5, 1.0]]))


class TestConcatFeatures:
    def test_row_stack(self):
        a, b = ad.constant(np.ones((2, 4))), ad.constant(np.zeros((3, 4)))
        assert ad.concat_features(a, b, "rows").shape == (5, 4)

    def test_zero_tail_vector(self):
        h = ad.constant([[1.0, 2.0, 3.0]])
        out = ad.concat_features(h, ad.constant(np.zeros((1, 3))), "cols")
        np.testing.assert_array_equal(out.data, [[1, 2, 3, 0, 0, 0]])

    def test_round_trip_split(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 5))
        joined = ad.concat_features(ad.constant(a), ad.constant(b), "cols")
        np.testing.assert_array_equal(joined.data[:, :3], a)
        np.testing.assert_array_equal(joined.data[:, 3:], b)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            ad.concat_features(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 4))), "rows")


class TestBackward:
    def test_scalar_leaf_gradient_is_one(self):
        x = ad.parameter([[3.0]], "x")
        ad.backward(ad.sum_all(x))
        assert x.grad[0, 0] == 1.0

    def test_constant_loss_gives_zero_grads(self):
        x = ad.parameter([[3.0]], "x")
        loss = ad.mul(ad.sum_all(x), ad.constant([[0.0]]))
        ad.backward(loss)
        assert x.grad[0, 0] == 0.0

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(InvariantError):
            ad.backward(ad.constant(np.ones((2, 2))))

    def test_matmul_sum_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        a = ad.parameter(rng.normal(size=(3, 4)), "a")
        b = ad.parameter(rng.normal(size=(4, 2)), "b")
        report = ad.gradient_check(lambda: ad.sum_all(ad.matmul(a, b)), [a, b], step=1e-5, tol=1e-6)
        assert report.passed, report.summary()

    def test_shared_subexpression_accumulates(self):
        # loss = sum(x @ x): gradient flows through both uses of x.
        rng = np.random.default_rng(6)
        x = ad.parameter(rng.normal(size=(3, 3)), "x")
        report = ad.gradient_check(lambda: ad.sum_all(ad.matmul(x, x)), [x], tol=1e-6)
        assert report.passed, report.summary()


OPS_FOR_GRADCHECK = [
    ("leaky_relu", lambda x: ad.sum_all(ad.leaky_relu(x, 0.2)), (3, 4)),
    ("gelu", lambda x: ad.sum_all(ad.gelu(x)), (3, 4)),
    ("transpose", lambda x: ad.sum_all(ad.matmul(ad.transpose(x), x)), (3, 4)),
    ("mean_all", lambda x: ad.mean_all(ad.mul(x, x)), (3, 4)),
    ("slice_rows", lambda x: ad.sum_all(ad.slice_rows(ad.matmul(x, ad.transpose(x)), 1, 3)), (4, 2)),
    ("scale", lambda x: ad.sum_all(ad.scale(x, -2.5)), (2, 3)),
]


class TestOpGradients:
    """Every differentiable op passes the finite-difference check at 1e-4."""

    @pytest.mark.parametrize("name,fn,shape", OPS_FOR_GRADCHECK, ids=[o[0] for o in OPS_FOR_GRADCHECK])
    def test_unary_ops(self, name, fn, shape):
        rng = np.random.default_rng(hash(name) % 2**31)
        x = ad.parameter(rng.normal(size=shape) + 0.05, name)
        report = ad.gradient_check(lambda: fn(x), [x], step=1e-5, tol=1e-4)
        assert report.passed, f"{name}: {report.summary()}"

    def test_masked_softmax_gradient(self):
        rng = np.random.default_rng(7)
        x = ad.parameter(rng.normal(size=(4, 4)), "scores")
        mask = (rng.random((4, 4)) < 0.7).astype(float)
        w = rng.normal(size=(4, 4))

        def f():
            return ad.sum_all(ad.mul(ad.masked_row_softmax(x, mask), ad.constant(w)))

        report = ad.gradient_check(f, [x], tol=1e-4)
        assert report.passed, report.summary()

    def test_layer_norm_gradient(self):
        rng = np.random.default_rng(8)
        x = ad.parameter(rng.normal(size=(3, 6)), "x")
        gain = ad.parameter(rng.normal(size=(1, 6)), "gain")
        bias = ad.parameter(rng.normal(size=(1, 6)), "bias")
        w = rng.normal(size=(3, 6))

        def f():
            return ad.sum_all(ad.mul(ad.layer_norm(x, gain, bias), ad.constant(w)))

        report = ad.gradient_check(f, [x, gain, bias], tol=1e-4)
        assert report.passed, report.summary()

    def test_gather_and_bias_gradient(self):
        rng = np.random.default_rng(9)
        table = ad.parameter(rng.normal(size=(5, 3)), "table")
        bias = ad.parameter(rng.normal(size=(1, 3)), "bias")
        idx = np.array([0, 2, 2, 4])

        def f():
            return ad.sum_all(ad.gelu(ad.add_row_bias(ad.gather_rows(table, idx), bias)))

        report = ad.gradient_check(f, [table, bias], tol=1e-4)
        assert report.passed, report.summary()

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(10)
        logits = ad.parameter(rng.normal(size=(4, 6)), "logits")
        targets = np.array([1, 0, 5, 2])
        report = ad.gradient_check(lambda: ad.cross_entropy(logits, targets), [logits], tol=1e-4)
        assert report.passed, report.summary()

    def test_concat_gradient_splits(self):
        rng = np.random.default_rng(11)
        a = ad.parameter(rng.normal(size=(2, 3)), "a")
        b = ad.parameter(rng.normal(size=(2, 2)), "b")
        w = rng.normal(size=(2, 5))

        def f():
            return ad.sum_all(ad.mul(ad.concat_features(a, b, "cols"), ad.constant(w)))

        report = ad.gradient_check(f, [a, b], tol=1e-4)
        assert report.passed, report.summary()


class TestMatrixContracts:
    def test_row_major_values(self):
        m = ad.constant([[1.0, 2.0], [3.0, 4.0]])
        assert m.rows == 2 and m.cols == 2
        np.testing.assert_array_equal(m.values, [1.0, 2.0, 3.0, 4.0])

    def test_parameter_flagging(self):
        p = ad.parameter([[1.0]], "w")
        c = ad.constant([[1.0]])
        assert p.is_param and not c.is_param

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionError):
            ad.constant([1.0, 2.0])

    def test_finite_outputs_on_extreme_finite_inputs(self):
        """Forward ops stay finite even for large-magnitude finite inputs."""
        big = ad.constant(np.array([[700.0, -700.0, 500.0]]))
        mask = np.array([[1.0, 1.0, 1.0]])
        assert np.all(np.isfinite(ad.masked_row_softmax(big, mask).data))
        logits = ad.constant(np.array([[800.0, -800.0], [0.0, 0.0]]))
        assert np.isfinite(ad.cross_entropy(logits, np.array([1, 0])).item())
        assert np.all(np.isfinite(ad.gelu(big).data))
        gain = ad.constant(np.ones((1, 3)))
        bias = ad.constant(np.zeros((1, 3)))
        assert np.all(np.isfinite(ad.layer_norm(big, gain, bias).data))


class TestGradientCheckHarness:
    def test_square_function_passes(self):
        x = ad.parameter([[3.0]], "x")
        report = ad.gradient_check(lambda: ad.mul(x, x), [x], tol=1e-4)
        assert report.passed
        assert report.max_rel_error < 1e-6

    def test_constant_function_has_zero_error(self):
        x = ad.parameter([[2.0]], "x")
        report = ad.gradient_check(lambda: ad.constant([[1.0]]), [x], tol=1e-4)
        assert report.passed
        assert report.max_rel_error == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_reported_with_location(self):
        x = ad.parameter([[0.0]], "x")

        def matrix_log(m):
            # log of the negative perturbation produces NaN on purpose.
            with np.errstate(all="ignore"):
                return ad.Matrix(np.log(m.data), (m,), lambda g: m.accumulate_grad(g / m.data))

        report = ad.gradient_check(lambda: matrix_log(x), [x], tol=1e-4)
        assert not report.passed
        assert any("x[0,0]" in msg for msg in report.failures)


class TestAdamW:
    def _group(self, value):
        p = ad.parameter(value, "p")
        return p, ParameterGroup("g", [p], learning_rate=0.1)

    def test_zero_grad_zero_decay_leaves_params(self):
        p, group = self._group([[1.0, -2.0]])
        state = AdamWState(weight_decay=0.0)
        adamw_step(group, state, [np.zeros((1, 2))])
        np.testing.assert_array_equal(p.data, [[1.0, -2.0]])
        assert state.step == 1

    def test_first_step_matches_hand_evaluation(self):
        # m-hat = 1, v-hat = 1 => delta = lr / (1 + eps) ~ 0.1.
        p, group = self._group([[1.0]])
        state = AdamWState(beta1=0.9, beta2=0.999, epsilon=1e-8, weight_decay=0.0)
        adamw_step(group, state, [np.array([[1.0]])])
        delta = 1.0 - p.data[0, 0]
        assert abs(delta - 0.1) < 1e-7

    def test_decoupled_decay_shrinks_by_lr_wd(self):
        p, group = self._group([[4.0]])
        state = AdamWState(weight_decay=0.5)
        adamw_step(group, state, [np.zeros((1, 1))])
        assert p.data[0, 0] == pytest.approx(4.0 * (1 - 0.1 * 0.5))

    def test_shape_mismatch_rejected(self):
        _, group = self._group([[1.0]])
        with pytest.raises(DimensionError):
            adamw_step(group, AdamWState(), [np.zeros((2, 2))])


class TestLinearDecay:
    def test_endpoints_and_midpoint(self):
        assert linear_decay_lr(0.5, 0, 100) == pytest.approx(0.5)
        assert linear_decay_lr(0.5, 50, 100) == pytest.approx(0.25)
        assert linear_decay_lr(0.5, 100, 100) == 0.0

    def test_clamps_past_the_end(self):
        assert linear_decay_lr(0.5, 150, 100) == 0.0

    def test_monotone_non_increasing(self):
        values = [linear_decay_lr(1.0, s, 37) for s in range(0, 38)]
        assert all(a >= b for a, b in zip(values, values[1:]))
