"""The mining agent: one deep Q-learning iteration per block.

The policy has no object of its own: it is the prediction network together
with epsilon.
"""
import copy
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from pourl.config import LearningConfig
from pourl.environment import EnvState, GridWorld, Oracle, OracleSpec, QTable
from pourl.errors import InvalidChain, UnknownState
from pourl.hashchain import Block, Chain, hash_block, validate_chain
from pourl.mlp import NetworkParams, copy_params, forward, init_params, loss_and_gradients, sgd_step


@dataclass(frozen=True)
class Transition:
    s: EnvState
    a: int
    r: float
    s_next: EnvState
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring; the oldest transition is evicted first.

    A transition may carry a key (the digest of the block it came from); the
    buffer remembers which keys it currently holds, so eviction forgets them.
    """

    def __init__(self, capacity: int) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._keys: List[Optional[bytes]] = []
        self._held: Dict[bytes, int] = {}
        self._position = 0
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition, key: Optional[bytes] = None) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
            self._keys.append(key)
        else:
            self._release(self._keys[self._position])
            self._items[self._position] = transition
            self._keys[self._position] = key
        if key is not None:
            self._held[key] = self._held.get(key, 0) + 1
        self._position = (self._position + 1) % self.capacity
        self.inserted += 1

    def _release(self, key: Optional[bytes]) -> None:
        if key is None:
            return
        remaining = self._held[key] - 1
        if remaining:
            self._held[key] = remaining
        else:
            del self._held[key]

    def holds(self, key: bytes) -> bool:
        return key in self._held

    @property
    def held_keys(self) -> int:
        return len(self._held)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        """Uniform draw with replacement."""
        picks = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in picks]

    def ordered(self) -> List[Transition]:
        """Contents from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._position:] + self._items[:self._position]

    def copy(self) -> "ReplayBuffer":
        clone = ReplayBuffer(self.capacity)
        clone._items = list(self._items)
        clone._keys = list(self._keys)
        clone._held = dict(self._held)
        clone._position = self._position
        clone.inserted = self.inserted
        return clone


@dataclass
class AgentState:
    prediction_params: NetworkParams
    target_params: NetworkParams
    replay: ReplayBuffer
    rng: np.random.Generator
    config: LearningConfig
    iteration_count: int = 0
    gradient_steps: int = 0
    last_loss: Optional[float] = None

    def clone(self) -> "AgentState":
        # parameter arrays are never written in place, so sharing them is safe
        return AgentState(
            prediction_params=self.prediction_params,
            target_params=self.target_params,
            replay=self.replay.copy(),
            rng=copy.deepcopy(self.rng),
            config=self.config,
            iteration_count=self.iteration_count,
            gradient_steps=self.gradient_steps,
            last_loss=self.last_loss,
        )


def agent_seed(config: LearningConfig, node_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.seed, node_id])


def create_agent(spec: OracleSpec, config: LearningConfig, node_id: int = 0) -> AgentState:
    init_seq, rng_seq = agent_seed(config, node_id).spawn(2)
    params = init_params(
        spec.state_dim, list(config.hidden_sizes), spec.action_count,
        int(init_seq.generate_state(1, dtype=np.uint64)[0]),
    )
    return AgentState(
        prediction_params=params,
        target_params=copy_params(params),
        replay=ReplayBuffer(config.buffer_capacity),
        rng=np.random.default_rng(rng_seq),
        config=config,
    )


def greedy_action(params: NetworkParams, state: EnvState) -> int:
    # np.argmax returns the first maximum, i.e. the lowest action id on ties
    return int(np.argmax(forward(params, state)))


def select_action(agent: AgentState, state: EnvState) -> int:
    """Epsilon-greedy draw; advances the agent's generator."""
    u = agent.rng.random()
    if u < agent.config.epsilon:
        return int(agent.rng.integers(agent.prediction_params.output_dim))
    return greedy_action(agent.prediction_params, state)


def _train(agent: AgentState) -> None:
    cfg = agent.config
    if len(agent.replay) >= cfg.batch_size:
        batch = agent.replay.sample(cfg.batch_size, agent.rng)
        loss, grads = loss_and_gradients(agent.prediction_params, agent.target_params, batch, cfg.gamma)
        agent.prediction_params = sgd_step(agent.prediction_params, grads, cfg.alpha)
        agent.last_loss = loss
        agent.gradient_steps += 1
    agent.iteration_count += 1
    if agent.iteration_count % cfg.sync_interval_C == 0:
        agent.target_params = copy_params(agent.prediction_params)


def mine_one_block(agent: AgentState, oracle: Oracle, tip: Block, payload: bytes, author: int):
    """One proof-of-work iteration on top of ``tip``; returns (block, updated agent)."""
    agent = agent.clone()
    state = oracle.chain_state(tip.state)
    action = select_action(agent, state)
    result = oracle.step(state, action)
    block = Block(
        height=tip.height + 1,
        state=result.next_state,
        action=action,
        reward=result.reward,
        payload=payload,
        prev_hash=hash_block(tip),
        author=author,
    )
    transition = Transition(state, action, result.reward, result.next_state, result.terminal)
    agent.replay.push(transition, key=hash_block(block))
    _train(agent)
    return block, agent


def chain_transitions(chain: Chain, oracle: Oracle):
    """Yield (block, transition) for every non-genesis block, oldest first."""
    for parent, block in zip(chain.blocks, chain.blocks[1:]):
        start = oracle.chain_state(parent.state)
        yield block, Transition(start, block.action, block.reward, block.state, oracle.is_terminal(block.state))


def rebuild_replay_from_chain(agent: AgentState, chain: Chain, oracle: Oracle, trusted: bool = False) -> AgentState:
    """Add the transitions of the chain's newest ``capacity`` blocks the buffer does not hold yet.

    θ and θ′ stay as they are.
    """
    if not trusted:
        verdict = validate_chain(chain, oracle)
        if not verdict.ok:
            raise InvalidChain(f"cannot rebuild replay from a chain failing at height {verdict.height}")
    agent = agent.clone()
    tail = chain[max(0, len(chain) - 1 - agent.replay.capacity):]
    for block, transition in chain_transitions(tail, oracle):
        digest = hash_block(block)
        if agent.replay.holds(digest):
            continue
        agent.replay.push(transition, key=digest)
    return agent


# -- tabular reference ----------------------------------------------------------

def tabular_q_update(
    q_table: QTable,
    s: EnvState,
    a: int,
    r: float,
    s_next: EnvState,
    alpha: float,
    gamma: float,
    terminal: bool = False,
) -> QTable:
    if s not in q_table:
        raise UnknownState(f"state {s!r} has no row in the table")
    if terminal:
        future = 0.0
    elif s_next in q_table:
        future = float(np.max(q_table[s_next]))
    else:
        raise UnknownState(f"state {s_next!r} has no row in the table")
    row = q_table[s].copy()
    row[a] = row[a] + alpha * (r + gamma * future - row[a])
    updated = dict(q_table)
    updated[s] = row
    return updated


def train_tabular(
    gridworld: GridWorld,
    steps: int,
    alpha: float,
    gamma: float,
    epsilon: float,
    seed: int,
    epsilon_start: float = 1.0,
) -> QTable:
    """Tabular Q-learning with exploring starts; epsilon decays linearly over the first half."""
    rng = np.random.default_rng(seed)
    starts = [s for s in gridworld.states() if not gridworld.is_terminal(s)]
    n_actions = gridworld.spec.action_count
    q: QTable = {s: np.zeros(n_actions) for s in starts}
    decay_steps = max(1, steps // 2)
    state = starts[int(rng.integers(len(starts)))]
    for t in range(steps):
        eps = max(epsilon, epsilon_start - (epsilon_start - epsilon) * t / decay_steps)
        if rng.random() < eps:
            action = int(rng.integers(n_actions))
        else:
            action = int(np.argmax(q[state]))
        result = gridworld.step(state, action)
        q = tabular_q_update(q, state, action, result.reward, result.next_state, alpha, gamma, result.terminal)
        if result.terminal:
            state = starts[int(rng.integers(len(starts)))]
        else:
            state = result.next_state
    return q


def q_table_distance(a: QTable, b: QTable) -> float:
    """Sup-norm over the states both tables hold."""
    shared = set(a) & set(b)
    if not shared:
        return float("inf")
    return max(float(np.max(np.abs(a[s] - b[s]))) for s in shared)


def snapshot_metrics(agent: AgentState) -> Dict[str, Optional[float]]:
    return {
        "iterations": agent.iteration_count,
        "gradient_steps": agent.gradient_steps,
        "replay_size": len(agent.replay),
        "last_loss": agent.last_loss,
    }
