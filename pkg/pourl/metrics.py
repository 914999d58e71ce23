from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from pourl import events as topics
from pourl.consensus import TieBreakRule, best_chain, compute_awards
from pourl.dqn import AgentState, snapshot_metrics
from pourl.environment import Oracle
from pourl.events import EventBus
from pourl.hashchain import Block, Chain, common_prefix_length, tip_digest

CSV_HEADER = ("time", "node_id", "kind", "height", "reward", "reorg_depth")


@dataclass(frozen=True)
class MetricRow:
    time: float
    node_id: int
    kind: str  # "mined" or "adopted"
    height: int
    reward: float
    reorg_depth: int

    def as_row(self) -> Tuple[Any, ...]:
        return (repr(self.time), self.node_id, self.kind, self.height, repr(self.reward), self.reorg_depth)


class MetricsRecorder:
    """Listens on the simulator bus and keeps the time series plus fork/reorg counters."""

    def __init__(self, bus: EventBus) -> None:
        self.rows: List[MetricRow] = []
        self.fork_counts: Dict[int, int] = defaultdict(int)
        self.reorg_depths: Dict[int, Dict[int, int]] = defaultdict(lambda: defaultdict(int))
        self.ignored: Dict[str, int] = defaultdict(int)
        self.dropped: Dict[str, int] = defaultdict(int)
        self._branches: Set[Tuple[int, bytes]] = set()
        bus.on(topics.BLOCK_MINED, self._on_mined)
        bus.on(topics.CHAIN_ADOPTED, self._on_adopted)
        bus.on(topics.ANNOUNCEMENT_IGNORED, self._on_ignored)
        bus.on(topics.MESSAGE_DROPPED, self._on_dropped)

    def _on_mined(self, time: float, node_id: int, block: Block) -> None:
        self.rows.append(MetricRow(time, node_id, "mined", block.height, block.reward, 0))

    def _on_adopted(self, time: float, node_id: int, old: Chain, new: Chain) -> None:
        shared = common_prefix_length(old, new)
        depth = len(old) - shared
        if depth > 0:
            self._count_branch(node_id, new, shared)
            self.reorg_depths[node_id][depth] += 1
        self.rows.append(MetricRow(time, node_id, "adopted", new.height, new.tip.reward, depth))

    def _on_ignored(self, time: float, node_id: int, sender: int, reason, local: Chain, candidate: Chain) -> None:
        self.ignored[reason.value] += 1
        # a fork is a competing branch: neither chain is a prefix of the other
        shared = common_prefix_length(local, candidate)
        if shared < min(len(local), len(candidate)):
            self._count_branch(node_id, candidate, shared)

    def _count_branch(self, node_id: int, chain: Chain, shared: int) -> None:
        # a branch is named by its first block past the shared prefix
        key = (node_id, chain[shared].digest)
        if key not in self._branches:
            self._branches.add(key)
            self.fork_counts[node_id] += 1

    def _on_dropped(self, time: float, sender: int, receiver: int, cause: str) -> None:
        self.dropped[cause] += 1


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    if window <= 0 or len(values) < window:
        return np.zeros(0)
    return np.convolve(np.asarray(values, dtype=np.float64), np.ones(window) / window, mode="valid")


def window_means(rewards: Sequence[float], window: int) -> Tuple[Optional[float], Optional[float]]:
    """Mean reward over the first and last ``window`` blocks (whole series when shorter)."""
    if not rewards:
        return None, None
    w = min(window, len(rewards))
    return float(np.mean(rewards[:w])), float(np.mean(rewards[-w:]))


def episode_stats(chain: Chain, oracle: Oracle) -> Tuple[Optional[int], List[int]]:
    """Height of the first block reaching a terminal state, and every completed episode's length."""
    first_goal: Optional[int] = None
    lengths: List[int] = []
    steps = 0
    for block in chain.blocks[1:]:
        steps += 1
        if oracle.is_terminal(block.state):
            if first_goal is None:
                first_goal = block.height
            lengths.append(steps)
            steps = 0
    return first_goal, lengths


@dataclass(frozen=True)
class NodeSummary:
    node_id: int
    height: int
    tip_digest: str
    fork_count: int
    reorg_depths: Dict[int, int]
    rewards: Tuple[float, ...]
    blocks_to_first_goal: Optional[int]
    episode_lengths: Tuple[int, ...]
    agent: Dict[str, Optional[float]]

    def as_dict(self, window: int) -> Dict[str, Any]:
        first, last = window_means(self.rewards, window)
        mean_episode = float(np.mean(self.episode_lengths)) if self.episode_lengths else None
        return {
            "node_id": self.node_id,
            "height": self.height,
            "tip_digest": self.tip_digest,
            "fork_count": self.fork_count,
            "reorg_depths": {str(d): n for d, n in sorted(self.reorg_depths.items())},
            "reward_first_window": first,
            "reward_last_window": last,
            "blocks_to_first_goal": self.blocks_to_first_goal,
            "episodes_completed": len(self.episode_lengths),
            "mean_episode_length": mean_episode,
            "agent": self.agent,
        }


class SimReport:
    def __init__(
        self,
        seed: int,
        rule: TieBreakRule,
        attackers: FrozenSet[int],
        chains: Dict[int, Chain],
        agents: Dict[int, AgentState],
        nodes: List[NodeSummary],
        rows: List[MetricRow],
        convergence_times: List[Optional[float]],
        heal_chains: List[Dict[int, Chain]],
        ignored: Dict[str, int],
        dropped: Dict[str, int],
        end_time: float,
        stop_reason: Optional[str],
        events_processed: int,
    ) -> None:
        self.seed = seed
        self.rule = rule
        self.attackers = attackers
        self.chains = chains
        self.agents = agents
        self.nodes = nodes
        self.rows = rows
        self.convergence_times = convergence_times
        self.heal_chains = heal_chains
        self.ignored = ignored
        self.dropped = dropped
        self.end_time = end_time
        self.stop_reason = stop_reason
        self.events_processed = events_processed

    @property
    def honest_ids(self) -> List[int]:
        return [n for n in sorted(self.chains) if n not in self.attackers]

    @property
    def fork_count(self) -> int:
        return sum(n.fork_count for n in self.nodes)

    @property
    def tips_agree(self) -> bool:
        return len({tip_digest(self.chains[n]) for n in self.honest_ids}) <= 1

    @property
    def consensus_chain(self) -> Chain:
        return best_chain([self.chains[n] for n in self.honest_ids], self.rule)

    @property
    def convergence_time_after_heal(self) -> Optional[float]:
        known = [t for t in self.convergence_times if t is not None]
        return max(known) if known else None

    def node(self, node_id: int) -> NodeSummary:
        return next(n for n in self.nodes if n.node_id == node_id)

    def summary(self, window: int) -> Dict[str, Any]:
        chain = self.consensus_chain
        return {
            "seed": self.seed,
            "tie_break": self.rule.value,
            "node_count": len(self.chains),
            "attackers": sorted(self.attackers),
            "end_time": self.end_time,
            "stop_reason": self.stop_reason,
            "events_processed": self.events_processed,
            "tips_agree": self.tips_agree,
            "consensus_height": chain.height,
            "consensus_tip": tip_digest(chain).hex(),
            "fork_count": self.fork_count,
            "convergence_times": self.convergence_times,
            "convergence_time_after_heal": self.convergence_time_after_heal,
            "announcements_ignored": dict(sorted(self.ignored.items())),
            "messages_dropped": dict(sorted(self.dropped.items())),
            "awards": {str(e.node_id): e.award for e in compute_awards(chain)},
            "per_node": [n.as_dict(window) for n in self.nodes],
        }


def collect_metrics(sim) -> SimReport:
    """Freeze a finished simulation into a report."""
    recorder: MetricsRecorder = sim.recorder
    summaries = []
    for node_id in sorted(sim.nodes):
        handle = sim.nodes[node_id]
        first_goal, lengths = episode_stats(handle.chain, sim.oracle)
        summaries.append(NodeSummary(
            node_id=node_id,
            height=handle.chain.height,
            tip_digest=tip_digest(handle.chain).hex(),
            fork_count=recorder.fork_counts.get(node_id, 0),
            reorg_depths=dict(recorder.reorg_depths.get(node_id, {})),
            rewards=tuple(b.reward for b in handle.chain.blocks[1:]),
            blocks_to_first_goal=first_goal,
            episode_lengths=tuple(lengths),
            agent=snapshot_metrics(handle.agent),
        ))
    return SimReport(
        seed=sim.config.seed,
        rule=sim.config.tie_break,
        attackers=sim.attackers,
        chains={n: h.chain for n, h in sim.nodes.items()},
        agents={n: h.agent for n, h in sim.nodes.items()},
        nodes=summaries,
        rows=list(recorder.rows),
        convergence_times=[sim.convergence_times.get(i) for i in range(len(sim.partitions))],
        heal_chains=list(sim.heal_chains),
        ignored=dict(recorder.ignored),
        dropped=dict(recorder.dropped),
        end_time=sim.now,
        stop_reason=sim.stop_reason,
        events_processed=sim.events_processed,
    )


# -- attack -----------------------------------------------------------------

@dataclass(frozen=True)
class AttackTrial:
    seed: int
    honest_height: int
    attacker_height: int
    survived: Dict[str, bool]  # keyed by TieBreakRule value
    honest_tip_reward: float
    attacker_tip_reward: float
    honest_reward_sum: float
    attacker_reward_sum: float
    honest_chain: Optional[Chain] = field(default=None, compare=False, repr=False)
    forged_chain: Optional[Chain] = field(default=None, compare=False, repr=False)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "honest_height": self.honest_height,
            "attacker_height": self.attacker_height,
            "survived": dict(sorted(self.survived.items())),
            "honest_tip_reward": self.honest_tip_reward,
            "attacker_tip_reward": self.attacker_tip_reward,
            "honest_reward_sum": self.honest_reward_sum,
            "attacker_reward_sum": self.attacker_reward_sum,
        }


@dataclass
class AttackReport:
    race: str
    honest_count: int
    attacker_count: int
    tamper_height: int
    trials: List[AttackTrial] = field(default_factory=list)

    def survival_fraction(self, rule: TieBreakRule) -> Optional[float]:
        if not self.trials:
            return None
        return sum(1 for t in self.trials if t.survived[rule.value]) / len(self.trials)

    def summary(self) -> Dict[str, Any]:
        return {
            "race": self.race,
            "honest_count": self.honest_count,
            "attacker_count": self.attacker_count,
            "tamper_height": self.tamper_height,
            "trial_count": len(self.trials),
            "survival_fraction": {r.value: self.survival_fraction(r) for r in TieBreakRule},
            "trials": [t.as_dict() for t in self.trials],
        }


# -- pooling sweep ---------------------------------------------------------------

@dataclass
class PoolingReport:
    pooling_nodes: int
    blocks: int
    seeds: List[int] = field(default_factory=list)
    single: List[Optional[int]] = field(default_factory=list)
    pooled: List[Optional[int]] = field(default_factory=list)

    def add(self, seed: int, single: Optional[int], pooled: Optional[int]) -> None:
        self.seeds.append(seed)
        self.single.append(single)
        self.pooled.append(pooled)

    def _or_miss(self, value: Optional[int]) -> int:
        # a run that never reached the goal counts as blocks + 1
        return self.blocks + 1 if value is None else value

    @property
    def pooled_not_worse_fraction(self) -> Optional[float]:
        if not self.seeds:
            return None
        wins = sum(1 for s, p in zip(self.single, self.pooled) if self._or_miss(p) <= self._or_miss(s))
        return wins / len(self.seeds)

    def summary(self) -> Dict[str, Any]:
        return {
            "pooling_nodes": self.pooling_nodes,
            "blocks": self.blocks,
            "seeds": self.seeds,
            "single_node_first_goal": self.single,
            "pooled_first_goal": self.pooled,
            "pooled_not_worse_fraction": self.pooled_not_worse_fraction,
        }
