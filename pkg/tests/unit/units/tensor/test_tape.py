from __future__ import annotations

import numpy as np
import pytest

from units.errors import ContractError, TapeStateError
from units.tensor import Tape, Tensor, backward, ops


class TestBackward:
    def test_sum_of_squares(self) -> None:
        """d/dx sum(x*x) is 2x."""
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            loss = ops.reduce_sum(ops.mul(x, x))
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])

    def test_reused_input_accumulates(self) -> None:
        """A tensor used twice receives both contributions."""
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = ops.reduce_sum(ops.add(x, ops.scale(x, 2.0)))
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, [3.0])

    def test_frozen_inputs_get_no_grad(self) -> None:
        """Inputs without requires_grad are left untouched."""
        w = Tensor([2.0], requires_grad=True)
        c = Tensor([5.0])
        with Tape() as tape:
            loss = ops.reduce_sum(ops.mul(w, c))
            tape.backward(loss)
        assert c.grad is None
        np.testing.assert_allclose(w.grad, [5.0])

    def test_module_level_backward_uses_active_tape(self) -> None:
        """`backward` without a tape argument replays the active one."""
        x = Tensor([1.0, -1.0], requires_grad=True)
        with Tape():
            backward(ops.mean(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad, [1.0, -1.0])

    def test_gradients_are_reproducible(self) -> None:
        """Two replays of the same computation give identical bits."""
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        grads = []
        for _ in range(2):
            wa = Tensor(a.copy(), requires_grad=True)
            with Tape() as tape:
                tape.backward(ops.mse(ops.matmul(wa, Tensor(b)), Tensor(np.zeros((4, 3)))))
            grads.append(wa.grad)
        assert grads[0].tobytes() == grads[1].tobytes()


class TestTapeState:
    def test_double_backward(self) -> None:
        """A tape replays once; the second backward raises."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            loss = ops.reduce_sum(ops.mul(x, x))
            tape.backward(loss)
            with pytest.raises(TapeStateError):
                tape.backward(loss)

    def test_record_after_backward(self) -> None:
        """Recording on a consumed tape raises until reset."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.reduce_sum(ops.mul(x, x)))
            with pytest.raises(TapeStateError):
                ops.mul(x, x)
            tape.reset()
            ops.mul(x, x)
        assert len(tape) == 1

    def test_empty_tape(self) -> None:
        """Backward on a tape with no records raises."""
        with Tape() as tape:
            with pytest.raises(TapeStateError):
                tape.backward(Tensor([1.0]))

    def test_non_scalar_loss(self) -> None:
        """Only single-element losses can be differentiated."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.mul(x, x)
            with pytest.raises(ContractError):
                tape.backward(y)

    def test_no_active_tape(self) -> None:
        """The module-level backward needs an active tape."""
        with pytest.raises(TapeStateError):
            backward(Tensor([1.0]))

    def test_nested_tapes_restore(self) -> None:
        """Leaving an inner tape reactivates the outer one."""
        x = Tensor([1.0], requires_grad=True)
        with Tape() as outer:
            with Tape() as inner:
                ops.mul(x, x)
            ops.mul(x, x)
        assert len(inner) == 1
        assert len(outer) == 1
