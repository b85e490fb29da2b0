from __future__ import annotations

import math

import numpy as np
import pytest

from units.errors import ContractError, DimensionError
from units.tensor import Tape, Tensor, check_gradients, ops


def _param(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=float), requires_grad=True)


class TestMatmul:
    def test_identity_left(self) -> None:
        """Multiplying by the identity returns the other operand."""
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        out = ops.matmul(Tensor(np.eye(2)), b)
        np.testing.assert_array_equal(out.data, b.data)

    def test_hand_example(self) -> None:
        """[[1,2],[3,4]] times a column of ones gives row sums."""
        out = ops.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_matches_triple_loop(self) -> None:
        """A random 3x4 by 4x2 product equals the loop reference."""
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        ref = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    ref[i, j] += a[i, k] * b[k, j]
        out = ops.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self) -> None:
        """Inner extents that disagree raise a dimension error."""
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestSoftmax:
    def test_uniform(self) -> None:
        """Equal logits give equal probabilities."""
        out = ops.softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3])

    def test_analytic(self) -> None:
        """[ln 2, 0] maps to [2/3, 1/3]."""
        out = ops.softmax(Tensor([math.log(2.0), 0.0]))
        np.testing.assert_allclose(out.data, [2 / 3, 1 / 3])

    def test_large_values_do_not_overflow(self) -> None:
        """Max subtraction keeps [1000, 1000] finite."""
        out = ops.softmax(Tensor([1000.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_rows_sum_to_one(self) -> None:
        """Every slice along the axis sums to one."""
        x = Tensor(np.random.default_rng(1).normal(size=(4, 5)))
        np.testing.assert_allclose(ops.softmax(x, axis=0).data.sum(axis=0), np.ones(5))

    def test_bad_axis(self) -> None:
        """An axis beyond the rank is rejected."""
        with pytest.raises(DimensionError):
            ops.softmax(Tensor([1.0, 2.0]), axis=3)


class TestBilinearResize:
    def test_same_shape_is_identity(self) -> None:
        """Resizing 4x4 to 4x4 returns the matrix exactly."""
        w = np.random.default_rng(2).normal(size=(4, 4))
        np.testing.assert_array_equal(ops.bilinear_resize(Tensor(w), 4, 4).data, w)

    def test_corner_aligned_upsample(self) -> None:
        """A 2x2 ramp resized to 3x3 interpolates half steps."""
        out = ops.bilinear_resize(Tensor([[0.0, 1.0], [2.0, 3.0]]), 3, 3)
        np.testing.assert_allclose(
            out.data, [[0.0, 0.5, 1.0], [1.0, 1.5, 2.0], [2.0, 2.5, 3.0]]
        )

    def test_constant_stays_constant(self) -> None:
        """A constant matrix resizes to the same constant."""
        out = ops.bilinear_resize(Tensor(np.full((3, 5), 2.5)), 7, 2)
        np.testing.assert_allclose(out.data, np.full((7, 2), 2.5))

    def test_single_extent_broadcasts(self) -> None:
        """A 1-extent axis repeats its only value."""
        out = ops.bilinear_resize(Tensor([[1.0, 3.0]]), 3, 2)
        np.testing.assert_allclose(out.data, [[1.0, 3.0]] * 3)

    def test_zero_extent(self) -> None:
        """Zero target extents raise a dimension error."""
        with pytest.raises(DimensionError):
            ops.bilinear_resize(Tensor(np.ones((2, 2))), 0, 2)

    def test_gradient(self) -> None:
        """The resize gradient matches finite differences."""
        w = _param(np.random.default_rng(3).normal(size=(3, 4)))
        target = Tensor(np.random.default_rng(4).normal(size=(5, 2)))
        reports = check_gradients(lambda: ops.mse(ops.bilinear_resize(w, 5, 2), target), [w])
        assert reports[0].max_relative_error < 1e-4


class TestPointwise:
    def test_sigmoid_zero(self) -> None:
        """sigmoid(0) is one half."""
        assert ops.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_mse_of_identical_is_zero(self) -> None:
        """mse(x, x) vanishes."""
        x = Tensor(np.random.default_rng(5).normal(size=(3, 4)))
        assert ops.mse(x, x).item() == 0.0

    def test_conv_delta_kernel_is_identity(self) -> None:
        """A centre-tap identity kernel with zero side taps copies its input."""
        x = Tensor(np.random.default_rng(6).normal(size=(2, 5, 3)))
        w = np.zeros((3, 3, 3))
        w[1] = np.eye(3)
        out = ops.conv1d_k3(x, Tensor(w), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_conv_zero_padding(self) -> None:
        """The previous-step tap reads zero before the first step."""
        x = Tensor(np.arange(1.0, 4.0).reshape(3, 1))
        w = np.zeros((3, 1, 1))
        w[0, 0, 0] = 1.0
        out = ops.conv1d_k3(x, Tensor(w), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data[:, 0], [0.0, 1.0, 2.0])

    def test_layer_norm_normalizes_last_axis(self) -> None:
        """Unit gain and zero bias give zero mean and unit variance rows."""
        x = Tensor(np.random.default_rng(7).normal(3.0, 2.0, size=(4, 8)))
        out = ops.layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8)))
        np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.data.var(axis=-1), 1.0, atol=1e-4)

    def test_add_requires_equal_shapes(self) -> None:
        """There is no implicit broadcasting."""
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))

    def test_concat_split_inverse(self) -> None:
        """Splitting a concatenation returns the pieces."""
        a, b = Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 3)))
        first, second = ops.split(ops.concat([a, b], axis=1), 1, [1, 3])
        np.testing.assert_array_equal(first.data, a.data)
        np.testing.assert_array_equal(second.data, b.data)

    def test_masked_mse_counts_only_selected(self) -> None:
        """Unselected entries contribute nothing."""
        a = Tensor([[1.0, 5.0]])
        b = Tensor([[0.0, 0.0]])
        assert ops.masked_mse(a, b, np.array([[True, False]])).item() == 1.0

    def test_masked_mse_empty_mask(self) -> None:
        """An empty mask is a contract error."""
        with pytest.raises(ContractError):
            ops.masked_mse(Tensor([1.0]), Tensor([1.0]), np.array([False]))

    def test_cross_entropy_uniform(self) -> None:
        """Uniform logits over C classes cost log C."""
        loss = ops.cross_entropy(Tensor(np.zeros((2, 4))), [0, 3])
        assert loss.item() == pytest.approx(math.log(4.0))

    def test_cross_entropy_label_range(self) -> None:
        """Labels outside the class range are rejected."""
        with pytest.raises(ContractError):
            ops.cross_entropy(Tensor(np.zeros((1, 2))), [2])

    def test_cross_entropy_empty_batch(self) -> None:
        with pytest.raises(DimensionError, match="empty"):
            ops.cross_entropy(Tensor(np.zeros((0, 3))), np.array([], dtype=int))


class TestGradients:
    def test_softmax_cross_entropy(self) -> None:
        """softmax + cross-entropy gradients match central differences."""
        logits = _param(np.random.default_rng(8).normal(size=(3, 4)))
        weights = Tensor(np.random.default_rng(9).normal(size=(4, 4)))

        def loss() -> Tensor:
            return ops.cross_entropy(ops.matmul(ops.softmax(logits), weights), [0, 1, 3])

        assert check_gradients(loss, [logits])[0].max_relative_error < 1e-4

    def test_matmul_mse_chain(self) -> None:
        """matmul -> mse gradients match central differences."""
        rng = np.random.default_rng(10)
        a, b = _param(rng.normal(size=(3, 4))), _param(rng.normal(size=(4, 2)))
        target = Tensor(rng.normal(size=(3, 2)))
        reports = check_gradients(lambda: ops.mse(ops.matmul(a, b), target), [a, b])
        assert max(r.max_relative_error for r in reports) < 1e-4

    @pytest.mark.parametrize(
        "fn",
        [
            lambda x: ops.gelu(x),
            lambda x: ops.sigmoid(x),
            lambda x: ops.layer_norm(x, Tensor(np.full(4, 1.5)), Tensor(np.full(4, 0.1))),
            lambda x: ops.softmax(x, axis=0),
            lambda x: ops.broadcast_to(ops.mean(x, axis=0, keepdims=True), (3, 4)),
            lambda x: ops.swap_last(ops.reshape(x, (2, 3, 2))),
        ],
    )
    def test_unary_ops(self, fn) -> None:
        """Each unary op's backward rule matches finite differences."""
        rng = np.random.default_rng(11)
        x = _param(rng.normal(size=(3, 4)))
        sample_out = fn(Tensor(x.data))
        target = Tensor(rng.normal(size=sample_out.shape))
        assert check_gradients(lambda: ops.mse(fn(x), target), [x])[0].max_relative_error < 1e-4

    def test_conv_gradient(self) -> None:
        """conv1d_k3 gradients for input, weight and bias match finite differences."""
        rng = np.random.default_rng(12)
        x = _param(rng.normal(size=(2, 5, 3)))
        w = _param(rng.normal(size=(3, 3, 2)))
        b = _param(rng.normal(size=2))
        target = Tensor(rng.normal(size=(2, 5, 2)))
        reports = check_gradients(lambda: ops.mse(ops.conv1d_k3(x, w, b), target), [x, w, b])
        assert max(r.max_relative_error for r in reports) < 1e-4

    def test_nothing_recorded_outside_tape(self) -> None:
        """Without an active tape operations leave no record."""
        x = _param([1.0, 2.0])
        with Tape() as tape:
            pass
        ops.add(x, x)
        assert len(tape) == 0
