"""Tests for the Q-network: forward pass, TD loss gradients, SGD and snapshots."""
import numpy as np
import pytest

from pourl.dqn import Transition
from pourl.errors import DimensionMismatch, DumpFormatError, EmptyBatch, ShapeMismatch
from pourl.mlp import (
    Layer,
    NetworkParams,
    copy_params,
    forward,
    init_params,
    loss_and_gradients,
    params_equal,
    params_from_snapshot,
    sgd_step,
    snapshot_bytes,
)


def _make_batch(rng: np.random.Generator, size: int, dim: int = 2, actions: int = 4):
    return [
        Transition(
            s=tuple(rng.uniform(-2, 2, size=dim)),
            a=int(rng.integers(actions)),
            r=float(rng.normal()),
            s_next=tuple(rng.uniform(-2, 2, size=dim)),
            terminal=bool(rng.random() < 0.3),
        )
        for _ in range(size)
    ]


def _perturbed(params: NetworkParams, layer: int, kind: str, index, delta: float) -> NetworkParams:
    layers = list(params.layers)
    weights, bias = layers[layer].weights.copy(), layers[layer].bias.copy()
    target = weights if kind == "weights" else bias
    target[index] += delta
    layers[layer] = Layer(weights=weights, bias=bias)
    return NetworkParams(tuple(layers))


def _assert_matches_numeric(params: NetworkParams, target: NetworkParams, batch, grads: NetworkParams) -> None:
    eps = 1e-6
    for i, layer in enumerate(params.layers):
        for kind in ("weights", "bias"):
            values = getattr(layer, kind)
            numeric = np.zeros_like(values)
            for index in np.ndindex(values.shape):
                up, _ = loss_and_gradients(_perturbed(params, i, kind, index, eps), target, batch, 0.9)
                down, _ = loss_and_gradients(_perturbed(params, i, kind, index, -eps), target, batch, 0.9)
                numeric[index] = (up - down) / (2 * eps)
            np.testing.assert_allclose(getattr(grads.layers[i], kind), numeric, rtol=1e-5, atol=1e-7)


class TestForward:
    def test_shapes(self):
        params = init_params(2, [8], 4, seed=0)
        assert params.shapes() == [((8, 2), (8,)), ((4, 8), (4,))]
        assert forward(params, (0.0, 1.0)).shape == (4,)
        assert forward(params, np.zeros((3, 2))).shape == (3, 4)

    def test_dimension_mismatch(self):
        params = init_params(2, [8], 4, seed=0)
        with pytest.raises(DimensionMismatch):
            forward(params, (0.0, 1.0, 2.0))

    def test_init_is_seeded(self):
        assert params_equal(init_params(2, [8, 8], 4, seed=5), init_params(2, [8, 8], 4, seed=5))
        assert not params_equal(init_params(2, [8, 8], 4, seed=5), init_params(2, [8, 8], 4, seed=6))

    def test_zero_bias_at_init(self):
        params = init_params(3, [5], 2, seed=1)
        assert all(not layer.bias.any() for layer in params.layers)

    def test_identity_layer(self):
        params = NetworkParams((Layer(weights=np.eye(2), bias=np.zeros(2)),))
        np.testing.assert_array_equal(forward(params, (1.0, 2.0)), [1.0, 2.0])


class TestLossAndGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1234)
        for case in range(100):
            input_dim, output_dim = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            hidden = [int(h) for h in rng.integers(1, 9, size=int(rng.integers(0, 3)))]
            params = init_params(input_dim, hidden, output_dim, seed=case)
            target = init_params(input_dim, hidden, output_dim, seed=10_000 + case)
            batch = _make_batch(rng, int(rng.integers(1, 5)), dim=input_dim, actions=output_dim)
            _, grads = loss_and_gradients(params, target, batch, 0.9)
            _assert_matches_numeric(params, target, batch, grads)

    def test_target_shift_changes_loss_only(self):
        params = init_params(2, [6], 4, seed=0)
        target = init_params(2, [6], 4, seed=1)
        last = target.layers[-1]
        shifted = NetworkParams(target.layers[:-1] + (Layer(last.weights, last.bias + 0.5),))
        batch = [Transition(t.s, t.a, t.r, t.s_next, False) for t in _make_batch(np.random.default_rng(7), 4)]
        before, _ = loss_and_gradients(params, target, batch, 0.9)
        after, grads = loss_and_gradients(params, shifted, batch, 0.9)
        assert after != pytest.approx(before)
        _assert_matches_numeric(params, shifted, batch, grads)

    def test_worked_example(self):
        # target max Q(S') = 2.0, prediction Q(S, A) = 0.5
        params = NetworkParams((Layer(weights=np.zeros((2, 1)), bias=np.array([0.5, 0.0])),))
        target = NetworkParams((Layer(weights=np.zeros((2, 1)), bias=np.array([2.0, 0.0])),))
        loss, _ = loss_and_gradients(params, target, [Transition((0.0,), 0, 1.0, (1.0,), False)], 0.9)
        assert loss == pytest.approx(5.29)

    def test_zero_residual(self):
        params = NetworkParams((Layer(weights=np.zeros((2, 1)), bias=np.array([1.0, 0.0])),))
        loss, grads = loss_and_gradients(params, params, [Transition((0.0,), 0, 0.1, (0.0,), False)], 0.9)
        assert loss == pytest.approx(0.0)
        assert np.allclose(grads.layers[0].bias, 0.0)

    def test_terminal_has_no_bootstrap(self):
        params = init_params(2, [4], 3, seed=0)
        batch = [Transition((0.5, 0.5), 1, 1.0, (1.0, 1.0), True)]
        expected = (forward(params, (0.5, 0.5))[1] - 1.0) ** 2
        for seed in (1, 2):
            loss, _ = loss_and_gradients(params, init_params(2, [4], 3, seed=seed), batch, 0.9)
            assert loss == pytest.approx(expected)

    def test_only_taken_action_gets_output_error(self):
        params = init_params(2, [4], 3, seed=0)
        batch = [Transition((0.5, -0.5), 2, -0.04, (1.0, 0.0), False)]
        _, grads = loss_and_gradients(params, params, batch, 0.9)
        last = grads.layers[-1]
        assert not last.weights[0].any() and not last.weights[1].any()
        assert last.bias[0] == 0.0 and last.bias[1] == 0.0

    def test_empty_batch(self):
        params = init_params(2, [4], 3, seed=0)
        with pytest.raises(EmptyBatch):
            loss_and_gradients(params, params, [], 0.9)

    def test_action_out_of_range(self):
        params = init_params(2, [4], 3, seed=0)
        with pytest.raises(DimensionMismatch):
            loss_and_gradients(params, params, [Transition((0.0, 0.0), 3, 0.0, (0.0, 0.0), False)], 0.9)


class TestSgdStep:
    def test_does_not_mutate_input(self):
        params = init_params(2, [4], 3, seed=0)
        before = copy_params(params)
        _, grads = loss_and_gradients(params, params, [Transition((1.0, 0.0), 0, 1.0, (0.0, 1.0), False)], 0.9)
        updated = sgd_step(params, grads, 0.1)
        assert params_equal(params, before)
        assert not params_equal(updated, params)

    def test_lowers_loss_for_small_step(self):
        params = init_params(2, [8], 4, seed=3)
        target = copy_params(params)
        batch = _make_batch(np.random.default_rng(0), 16)
        loss, grads = loss_and_gradients(params, target, batch, 0.9)
        new_loss, _ = loss_and_gradients(sgd_step(params, grads, 1e-3), target, batch, 0.9)
        assert new_loss < loss

    def test_repeated_steps_descend_on_linear_net(self):
        params = init_params(2, [], 4, seed=3)
        target = init_params(2, [], 4, seed=4)
        batch = _make_batch(np.random.default_rng(0), 16)
        losses = []
        for _ in range(50):
            loss, grads = loss_and_gradients(params, target, batch, 0.9)
            losses.append(loss)
            params = sgd_step(params, grads, 0.01)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sgd_step(init_params(2, [4], 3, seed=0), init_params(2, [5], 3, seed=0), 0.1)


class TestSnapshot:
    def test_round_trip(self):
        params = init_params(2, [32, 32], 4, seed=9)
        assert params_equal(params_from_snapshot(snapshot_bytes(params)), params)

    def test_bad_magic(self):
        with pytest.raises(DumpFormatError):
            params_from_snapshot(b"XXXX" + snapshot_bytes(init_params(2, [4], 3, seed=0))[4:])

    def test_trailing_bytes(self):
        with pytest.raises(DumpFormatError):
            params_from_snapshot(snapshot_bytes(init_params(2, [4], 3, seed=0)) + b"\x00")

    def test_truncated(self):
        with pytest.raises(DumpFormatError):
            params_from_snapshot(snapshot_bytes(init_params(2, [4], 3, seed=0))[:-5])
