"""Tests for the mining agent and the tabular reference learner."""
from dataclasses import replace

import numpy as np
import pytest

from pourl.config import LearningConfig
from pourl.dqn import (
    ReplayBuffer,
    Transition,
    chain_transitions,
    create_agent,
    greedy_action,
    mine_one_block,
    q_table_distance,
    rebuild_replay_from_chain,
    select_action,
    tabular_q_update,
    train_tabular,
)
from pourl.environment import GridWorld, value_iteration_oracle
from pourl.errors import InvalidChain, UnknownState
from pourl.hashchain import Chain, append_block, build_chain, genesis_chain, hash_block
from pourl.mlp import Layer, NetworkParams, params_equal


def _make_transition(i: int) -> Transition:
    return Transition((float(i), 0.0), 0, -0.04, (float(i + 1), 0.0), False)


def _make_agent(node_id: int = 0, **overrides):
    config = replace(LearningConfig(hidden_sizes=(16,)), **overrides)
    return create_agent(GridWorld().spec, config, node_id)


def _mine(agent, oracle, chain, count: int, author: int = 0):
    for _ in range(count):
        payload = f"tx:{author}:{chain.height + 1}".encode()
        block, agent = mine_one_block(agent, oracle, chain.tip, payload, author)
        chain = append_block(chain, block, oracle)
    return chain, agent


class TestReplayBuffer:
    def test_evicts_oldest(self):
        buffer = ReplayBuffer(3)
        for i in range(5):
            buffer.push(_make_transition(i))
        assert len(buffer) == 3
        assert buffer.inserted == 5
        assert [t.s[0] for t in buffer.ordered()] == [2.0, 3.0, 4.0]

    def test_sample_is_seeded(self):
        buffer = ReplayBuffer(10)
        for i in range(10):
            buffer.push(_make_transition(i))
        a = buffer.sample(5, np.random.default_rng(1))
        b = buffer.sample(5, np.random.default_rng(1))
        assert a == b

    def test_copy_is_independent(self):
        buffer = ReplayBuffer(4)
        buffer.push(_make_transition(0))
        clone = buffer.copy()
        clone.push(_make_transition(1))
        assert len(buffer) == 1 and len(clone) == 2

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)

    def test_eviction_forgets_key(self):
        buffer = ReplayBuffer(2)
        for i in range(3):
            buffer.push(_make_transition(i), key=bytes([i]) * 32)
        assert not buffer.holds(bytes([0]) * 32)
        assert buffer.holds(bytes([1]) * 32) and buffer.holds(bytes([2]) * 32)
        assert buffer.held_keys == 2

    def test_copy_keeps_keys_apart(self):
        buffer = ReplayBuffer(1)
        buffer.push(_make_transition(0), key=b"a" * 32)
        clone = buffer.copy()
        clone.push(_make_transition(1), key=b"b" * 32)
        assert buffer.holds(b"a" * 32) and not buffer.holds(b"b" * 32)
        assert clone.holds(b"b" * 32) and not clone.holds(b"a" * 32)


class TestAgent:
    def test_seeded_per_node(self):
        assert params_equal(_make_agent(0).prediction_params, _make_agent(0).prediction_params)
        assert not params_equal(_make_agent(0).prediction_params, _make_agent(1).prediction_params)

    def test_target_starts_as_copy(self):
        agent = _make_agent()
        assert params_equal(agent.target_params, agent.prediction_params)

    def test_zero_epsilon_is_greedy(self):
        agent = _make_agent(epsilon=0.0)
        expected = greedy_action(agent.prediction_params, (1.0, 2.0))
        assert all(select_action(agent, (1.0, 2.0)) == expected for _ in range(20))

    def test_full_exploration_is_uniform(self):
        agent = _make_agent(epsilon=1.0)
        draws = np.array([select_action(agent, (0.0, 0.0)) for _ in range(10_000)])
        frequencies = np.bincount(draws, minlength=4) / len(draws)
        assert np.all(np.abs(frequencies - 0.25) <= 0.02)

    @pytest.mark.parametrize("bias, expected", [
        ([0.5, 0.5, 0.1, 0.1], 0),
        ([0.1, 0.9, 0.3, 0.2], 1),
        ([0.2, 0.1, 0.7, 0.7], 2),
    ])
    def test_greedy_picks_lowest_best_action(self, bias, expected):
        params = NetworkParams((Layer(weights=np.zeros((4, 2)), bias=np.array(bias)),))
        agent = replace(_make_agent(epsilon=0.0), prediction_params=params)
        assert select_action(agent, (1.0, 2.0)) == expected

    def test_positive_output_scale_keeps_choice(self):
        agent = _make_agent(epsilon=0.0)
        params = agent.prediction_params
        last = params.layers[-1]
        states = [(float(x), float(y)) for x in range(4) for y in range(4)]
        for scale in (0.5, 2.0, 4.0):
            scaled = NetworkParams(params.layers[:-1] + (Layer(last.weights * scale, last.bias * scale),))
            for state in states:
                assert greedy_action(scaled, state) == greedy_action(params, state)

    def test_exploration_depends_on_seed(self):
        oracle = GridWorld()
        actions = []
        for seed in (1, 2):
            chain, _ = _mine(_make_agent(seed=seed, epsilon=0.1), oracle, genesis_chain(oracle), 100)
            actions.append([b.action for b in chain.blocks[1:]])
        assert actions[0] != actions[1]


class TestMineOneBlock:
    def test_block_extends_tip(self):
        oracle = GridWorld()
        chain = genesis_chain(oracle)
        agent = _make_agent()
        block, mined = mine_one_block(agent, oracle, chain.tip, b"tx", 4)
        assert block.height == 1
        assert block.prev_hash == hash_block(chain.tip)
        assert block.author == 4
        assert len(append_block(chain, block, oracle)) == len(chain) + 1
        assert mined.iteration_count == 1
        assert len(mined.replay) == 1

    def test_input_agent_untouched(self):
        oracle = GridWorld()
        agent = _make_agent()
        mine_one_block(agent, oracle, genesis_chain(oracle).tip, b"tx", 0)
        assert agent.iteration_count == 0
        assert len(agent.replay) == 0

    def test_gradient_step_waits_for_batch(self):
        oracle = GridWorld()
        _, agent = _mine(_make_agent(batch_size=2), oracle, genesis_chain(oracle), 1)
        assert agent.gradient_steps == 0
        assert agent.last_loss is None
        _, agent = _mine(agent, oracle, build_chain(oracle, [1]), 1)
        assert agent.gradient_steps == 1
        assert agent.last_loss is not None

    def test_target_sync_every_c(self):
        oracle = GridWorld()
        chain, agent = _mine(_make_agent(batch_size=1, sync_interval_C=3), oracle, genesis_chain(oracle), 2)
        assert not params_equal(agent.target_params, agent.prediction_params)
        _, agent = _mine(agent, oracle, chain, 1)
        assert agent.iteration_count == 3
        assert params_equal(agent.target_params, agent.prediction_params)

    def test_deterministic(self):
        oracle = GridWorld()
        a, _ = _mine(_make_agent(batch_size=4), oracle, genesis_chain(oracle), 20)
        b, _ = _mine(_make_agent(batch_size=4), oracle, genesis_chain(oracle), 20)
        assert [hash_block(x) for x in a] == [hash_block(x) for x in b]

    def test_episode_restarts_after_goal(self):
        oracle = GridWorld()
        chain = build_chain(oracle, [1, 1, 1, 2, 2, 2])
        assert oracle.is_terminal(chain.tip.state)
        _, agent = mine_one_block(_make_agent(), oracle, chain.tip, b"tx", 0)
        assert agent.replay.ordered()[-1].s == (0.0, 0.0)

    def test_tracked_digests_stay_within_capacity(self):
        oracle = GridWorld()
        chain, agent = _mine(_make_agent(buffer_capacity=10, batch_size=4), oracle, genesis_chain(oracle), 30)
        assert agent.replay.held_keys == 10
        assert not agent.replay.holds(hash_block(chain[1]))
        assert all(agent.replay.holds(hash_block(b)) for b in chain.blocks[-10:])


class TestRebuildReplay:
    def test_adds_each_transition_once(self):
        oracle = GridWorld()
        chain = build_chain(oracle, [1, 1, 2, 3, 0, 2])
        agent = rebuild_replay_from_chain(_make_agent(), chain, oracle)
        assert len(agent.replay) == 6
        again = rebuild_replay_from_chain(agent, chain, oracle)
        assert len(again.replay) == 6

    def test_parameters_unchanged(self):
        oracle = GridWorld()
        agent = _make_agent()
        rebuilt = rebuild_replay_from_chain(agent, build_chain(oracle, [1, 2]), oracle)
        assert rebuilt.prediction_params is agent.prediction_params
        assert rebuilt.target_params is agent.target_params

    def test_own_blocks_not_duplicated(self):
        oracle = GridWorld()
        chain, agent = _mine(_make_agent(), oracle, genesis_chain(oracle), 3)
        assert len(rebuild_replay_from_chain(agent, chain, oracle).replay) == 3

    def test_rejects_invalid_chain(self):
        oracle = GridWorld()
        chain = build_chain(oracle, [1, 1, 2])
        forged = Chain((chain[0], replace(chain[1], reward=0.5), chain[2], chain[3]))
        with pytest.raises(InvalidChain):
            rebuild_replay_from_chain(_make_agent(), forged, oracle)

    def test_terminal_flag_recomputed(self):
        oracle = GridWorld()
        chain = build_chain(oracle, [1, 1, 1, 2, 2, 2, 1])
        replay = rebuild_replay_from_chain(_make_agent(), chain, oracle).replay.ordered()
        assert [t.terminal for t in replay] == [False] * 5 + [True, False]
        assert replay[-1].s == (0.0, 0.0)

    def test_long_chain_keeps_newest_transitions(self):
        oracle = GridWorld()
        rng = np.random.default_rng(3)
        chain = build_chain(oracle, [int(a) for a in rng.integers(0, 4, size=2000)])
        agent = rebuild_replay_from_chain(_make_agent(buffer_capacity=1000), chain, oracle)
        expected = [t for _, t in chain_transitions(chain, oracle)][-1000:]
        assert len(agent.replay) == 1000
        assert agent.replay.ordered() == expected

    def test_own_chain_past_capacity_leaves_buffer_alone(self):
        oracle = GridWorld()
        chain, agent = _mine(_make_agent(buffer_capacity=10, batch_size=4), oracle, genesis_chain(oracle), 15)
        again = rebuild_replay_from_chain(agent, chain, oracle)
        assert again.replay.ordered() == agent.replay.ordered()
        assert again.replay.inserted == agent.replay.inserted


class TestTabular:
    def test_update_step(self):
        q = {(0.0, 0.0): np.zeros(4), (1.0, 0.0): np.zeros(4)}
        updated = tabular_q_update(q, (0.0, 0.0), 1, -0.04, (1.0, 0.0), alpha=0.5, gamma=0.9)
        assert updated[(0.0, 0.0)][1] == pytest.approx(-0.02)
        assert q[(0.0, 0.0)][1] == 0.0

    def test_terminal_update_ignores_next_state(self):
        q = {(2.0, 3.0): np.zeros(4)}
        updated = tabular_q_update(q, (2.0, 3.0), 1, 1.0, (3.0, 3.0), alpha=0.5, gamma=0.9, terminal=True)
        assert updated[(2.0, 3.0)][1] == pytest.approx(0.5)

    def test_unknown_state(self):
        with pytest.raises(UnknownState):
            tabular_q_update({}, (0.0, 0.0), 0, 0.0, (0.0, 0.0), alpha=0.5, gamma=0.9)

    def test_converges_to_value_iteration(self):
        world = GridWorld()
        q = train_tabular(world, steps=10_000, alpha=0.5, gamma=0.9, epsilon=0.1, seed=0)
        assert q_table_distance(q, value_iteration_oracle(world, 0.9)) <= 0.05
