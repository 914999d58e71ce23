"""Seeded discrete-event network of mining nodes.

One event queue, one numpy generator. Mining durations and link delays are
exponential; drop and partition decisions are taken when a message is sent.
After the stop condition no new mining completes, but every queued delivery
is still processed so the final chains are comparable.
"""
import heapq
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import numpy as np

from pourl import events as topics
from pourl.config import AttackConfig, CurveConfig, LearningConfig, SimConfig
from pourl.consensus import TieBreakRule, best_chain, chain_score, fork_choice
from pourl.dqn import AgentState, create_agent, mine_one_block, rebuild_replay_from_chain
from pourl.environment import Oracle
from pourl.errors import ConfigError
from pourl.events import EventBus
from pourl.hashchain import Chain, append_block, genesis_chain, tip_digest
from pourl.logger import Logger
from pourl.metrics import (
    AttackReport,
    AttackTrial,
    MetricsRecorder,
    PoolingReport,
    SimReport,
    collect_metrics,
    episode_stats,
)
from pourl.node import (
    Announce,
    ChainAnnounced,
    Ignore,
    MiningFinished,
    MiningJob,
    NodeHandle,
    NodeInput,
    RequestMining,
    StartMining,
    handle_input,
)

_U64 = 1 << 64


@dataclass(frozen=True)
class MineComplete:
    node_id: int
    job_id: int


@dataclass(frozen=True)
class Deliver:
    chain: Chain
    tip_digest: bytes
    sender: int
    receiver: int


@dataclass(frozen=True)
class PartitionStart:
    index: int


@dataclass(frozen=True)
class PartitionEnd:
    index: int


EventKind = Union[MineComplete, Deliver, PartitionStart, PartitionEnd]


@dataclass(frozen=True, order=True)
class SimEvent:
    timestamp: float
    seq: int
    kind: EventKind = field(compare=False)


class Simulation:
    def __init__(
        self,
        config: SimConfig,
        oracle: Oracle,
        learning: LearningConfig,
        logger: Optional[Logger] = None,
        events: Optional[EventBus] = None,
        initial_chains: Optional[Mapping[int, Chain]] = None,
        attackers: FrozenSet[int] = frozenset(),
    ) -> None:
        problems = config.problems() + learning.problems()
        if problems:
            raise ConfigError("simulation", "; ".join(problems))
        if any(not 0 <= a < config.node_count for a in attackers):
            raise ConfigError("attackers", "attacker ids must name existing nodes")
        self.config = config
        self.oracle = oracle
        self.learning = learning
        self.logger = logger or Logger()
        self.events = events or EventBus()
        self.recorder = MetricsRecorder(self.events)
        self.attackers = frozenset(attackers)
        self.partitions = tuple(sorted(config.partitions, key=lambda p: p.start))
        self.rng = np.random.default_rng(config.seed)
        self.now = 0.0
        self.stopped = False
        self.stop_reason: Optional[str] = None
        self.events_processed = 0
        self.convergence_times: Dict[int, float] = {}
        self.heal_chains: List[Dict[int, Chain]] = []
        self._awaiting: List[Tuple[int, float]] = []
        self._queue: List[SimEvent] = []
        self._seq = 0
        self._next_job = 0
        self.nodes: Dict[int, NodeHandle] = {}
        for node_id in range(config.node_count):
            agent = create_agent(oracle.spec, learning, node_id)
            chain = (initial_chains or {}).get(node_id)
            if chain is None:
                chain = genesis_chain(oracle)
            else:
                agent = rebuild_replay_from_chain(agent, chain, oracle)
            self.nodes[node_id] = NodeHandle(node_id=node_id, agent=agent, chain=chain)

    def _log(self, msg: str, level: int = logging.INFO) -> None:
        self.logger.log(f"[t={self.now:.3f}] {msg}", level)

    def _push(self, timestamp: float, kind: EventKind) -> None:
        heapq.heappush(self._queue, SimEvent(timestamp, self._seq, kind))
        self._seq += 1

    def _partitioned(self, a: int, b: int) -> bool:
        return any(p.start <= self.now < p.end and p.separates(a, b) for p in self.partitions)

    def _send_all(self, sender: int, chain: Chain, digest: bytes) -> None:
        for receiver in sorted(self.nodes):
            if receiver == sender:
                continue
            if receiver in self.attackers and sender not in self.attackers:
                continue
            if self._partitioned(sender, receiver):
                self.events.emit(topics.MESSAGE_DROPPED, self.now, sender, receiver, "partition")
                continue
            if self.config.drop_probability > 0 and self.rng.random() < self.config.drop_probability:
                self.events.emit(topics.MESSAGE_DROPPED, self.now, sender, receiver, "loss")
                continue
            delay = self.rng.exponential(self.config.mean_link_delay)
            self._push(self.now + delay, Deliver(chain, digest, sender, receiver))

    def _schedule_mining(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if self.stopped:
            self.nodes[node_id] = replace(node, pending=None)
            return
        finish = self.now + self.rng.exponential(self.config.mine_time_for(node_id))
        job = MiningJob(job_id=self._next_job, tip_digest=tip_digest(node.chain), finish_time=finish)
        self._next_job += 1
        self.nodes[node_id] = replace(node, pending=job)
        self._push(finish, MineComplete(node_id, job.job_id))

    def _stop(self, reason: str) -> None:
        self.stopped = True
        self.stop_reason = reason
        for node_id, node in self.nodes.items():
            self.nodes[node_id] = replace(node, pending=None)
        self._log(f"mining stopped ({reason}); flushing {len(self._queue)} queued event(s)")

    def _apply(self, node_id: int, message: NodeInput) -> None:
        before = self.nodes[node_id]
        after, outputs = handle_input(before, message, self.oracle, self.config.tie_break)
        self.nodes[node_id] = after
        if isinstance(message, ChainAnnounced) and after.chain is not before.chain:
            self.events.emit(topics.CHAIN_ADOPTED, self.now, node_id, before.chain, after.chain)
            self._log(f"node {node_id} adopted height {after.chain.height} from node {message.sender}")
        if not self.stopped and after.chain.height >= self.config.max_blocks:
            self._stop("max_blocks")
        for output in outputs:
            if isinstance(output, Announce):
                self._send_all(node_id, output.chain, output.tip_digest)
            elif isinstance(output, RequestMining):
                self._schedule_mining(node_id)
            elif isinstance(output, Ignore) and isinstance(message, ChainAnnounced):
                self.events.emit(
                    topics.ANNOUNCEMENT_IGNORED, self.now, node_id, message.sender,
                    output.reason, after.chain, message.chain,
                )
                self._log(
                    f"node {node_id} ignored chain from node {message.sender}: {output.reason.value} {output.detail}",
                    logging.DEBUG,
                )

    def _on_mine_complete(self, event: MineComplete) -> None:
        node = self.nodes[event.node_id]
        if self.stopped or node.pending is None or node.pending.job_id != event.job_id:
            return
        payload = f"tx:{event.node_id}:{node.chain.height + 1}".encode()
        block, agent = mine_one_block(node.agent, self.oracle, node.chain.tip, payload, event.node_id)
        self.nodes[event.node_id] = replace(node, agent=agent)
        self.events.emit(topics.BLOCK_MINED, self.now, event.node_id, block)
        self._log(f"node {event.node_id} mined block {block.height} (action {block.action}, reward {block.reward})")
        self._apply(event.node_id, MiningFinished(block))

    def _on_partition_end(self, event: PartitionEnd) -> None:
        self.events.emit(topics.PARTITION_ENDED, self.now, event.index)
        self._log(f"partition {event.index} healed")
        self.heal_chains.append({n: h.chain for n, h in self.nodes.items()})
        self._awaiting.append((event.index, self.now))
        if self.config.heal_sync:
            for node_id in sorted(self.nodes):
                chain = self.nodes[node_id].chain
                self._send_all(node_id, chain, tip_digest(chain))

    def _dispatch(self, kind: EventKind) -> None:
        if isinstance(kind, MineComplete):
            self._on_mine_complete(kind)
        elif isinstance(kind, Deliver):
            self._apply(kind.receiver, ChainAnnounced(kind.chain, kind.tip_digest, kind.sender))
        elif isinstance(kind, PartitionStart):
            self.events.emit(topics.PARTITION_STARTED, self.now, kind.index)
            self._log(f"partition {kind.index} started", logging.INFO)
        elif isinstance(kind, PartitionEnd):
            self._on_partition_end(kind)

    def _check_convergence(self) -> None:
        if not self._awaiting:
            return
        honest = [n for n in sorted(self.nodes) if n not in self.attackers]
        if len({tip_digest(self.nodes[n].chain) for n in honest}) == 1:
            for index, healed_at in self._awaiting:
                self.convergence_times[index] = self.now - healed_at
            self._awaiting = []

    def run(self) -> SimReport:
        cfg = self.config
        self.logger.log(f"simulating {cfg.node_count} node(s) to {cfg.max_blocks} blocks (seed {cfg.seed})")
        for index, partition in enumerate(self.partitions):
            self._push(partition.start, PartitionStart(index))
            self._push(partition.end, PartitionEnd(index))
        for node_id in sorted(self.nodes):
            chain = self.nodes[node_id].chain
            if len(chain) > 1:
                self._send_all(node_id, chain, tip_digest(chain))
            self._apply(node_id, StartMining())
        while self._queue:
            event = heapq.heappop(self._queue)
            if not self.stopped and cfg.stop_time is not None and event.timestamp >= cfg.stop_time:
                self.now = cfg.stop_time
                self._stop("stop_time")
            self.now = event.timestamp
            self._dispatch(event.kind)
            self.events_processed += 1
            self._check_convergence()
        for index, _ in self._awaiting:
            self._log(f"nodes never agreed after partition {index} healed", logging.WARNING)
        report = collect_metrics(self)
        self.logger.log(
            f"simulation finished at t={self.now:.3f}: consensus height {report.consensus_chain.height}, "
            f"{report.fork_count} fork(s)"
        )
        return report


def run_simulation(
    config: SimConfig,
    oracle: Oracle,
    learning: LearningConfig,
    logger: Optional[Logger] = None,
    events: Optional[EventBus] = None,
    initial_chains: Optional[Mapping[int, Chain]] = None,
    attackers: FrozenSet[int] = frozenset(),
) -> SimReport:
    return Simulation(config, oracle, learning, logger, events, initial_chains, attackers).run()


# -- scenario helpers ------------------------------------------------------------

def _uniform_mining(config: SimConfig, node_count: int, seed: int) -> SimConfig:
    mean = config.mean_mine_time
    if isinstance(mean, tuple):
        mean = float(np.mean(mean))
    return replace(config, node_count=node_count, seed=seed, mean_mine_time=mean, partitions=())


def sweep_seeds(base: int, count: int) -> List[int]:
    return [(base + i) % _U64 for i in range(count)]


def tampered_prefix(honest: Chain, tamper_height: int, attacker: int, oracle: Oracle) -> Chain:
    """``honest`` up to ``tamper_height`` with that block's payload forged and re-signed by ``attacker``."""
    original = honest[tamper_height]
    forged = replace(original, payload=b"tampered:" + original.payload, author=attacker)
    return append_block(honest[:tamper_height], forged, oracle)


def remine(agent: AgentState, oracle: Oracle, chain: Chain, target_length: int, author: int) -> Tuple[Chain, AgentState]:
    while len(chain) < target_length:
        payload = f"tx:{author}:{chain.height + 1}".encode()
        block, agent = mine_one_block(agent, oracle, chain.tip, payload, author)
        chain = append_block(chain, block, oracle)
    return chain, agent


def _equal_length_race(
    honest: Chain, oracle: Oracle, learning: LearningConfig, attack: AttackConfig
) -> Tuple[Dict[str, bool], List[Chain]]:
    candidates = []
    for j in range(attack.attacker_count):
        node_id = attack.honest_count + j
        agent = create_agent(oracle.spec, learning, node_id)
        agent = rebuild_replay_from_chain(agent, honest[:attack.tamper_height], oracle, trusted=True)
        chain = tampered_prefix(honest, attack.tamper_height, node_id, oracle)
        chain, _ = remine(agent, oracle, chain, len(honest), node_id)
        candidates.append(chain)
    survived = {}
    for rule in TieBreakRule:
        forged = best_chain(candidates, rule)
        survived[rule.value] = fork_choice(honest, forged, rule, oracle) is honest
    return survived, candidates


def _open_race(
    honest: Chain,
    base: SimConfig,
    oracle: Oracle,
    learning: LearningConfig,
    attack: AttackConfig,
    logger: Optional[Logger],
) -> Tuple[Dict[str, bool], List[Chain]]:
    total = attack.honest_count + attack.attacker_count
    attackers = frozenset(range(attack.honest_count, total))
    initial = {n: honest for n in range(attack.honest_count)}
    for node_id in attackers:
        initial[node_id] = tampered_prefix(honest, attack.tamper_height, node_id, oracle)
    original = honest[attack.tamper_height].digest
    survived, candidates = {}, []
    for rule in TieBreakRule:
        config = replace(
            _uniform_mining(base, total, base.seed),
            max_blocks=honest.height + attack.race_blocks,
            tie_break=rule,
            stop_time=None,
        )
        report = run_simulation(config, oracle, learning, logger, initial_chains=initial, attackers=attackers)
        survived[rule.value] = report.consensus_chain[attack.tamper_height].digest == original
        if rule is base.tie_break:
            candidates = [report.chains[n] for n in sorted(attackers)]
    return survived, candidates


def attack_trial(
    config: SimConfig,
    oracle: Oracle,
    learning: LearningConfig,
    attack: AttackConfig,
    seed: int,
    logger: Optional[Logger] = None,
) -> AttackTrial:
    problems = attack.problems()
    if problems:
        raise ConfigError("attack", "; ".join(problems))
    learning = replace(learning, seed=seed)
    honest_config = _uniform_mining(config, attack.honest_count, seed)
    honest = run_simulation(honest_config, oracle, learning, logger).consensus_chain
    if attack.tamper_height > honest.height:
        raise ConfigError("attack.tamper_height", f"honest chain only reached height {honest.height}")
    if attack.race == "open":
        survived, candidates = _open_race(honest, honest_config, oracle, learning, attack, logger)
    else:
        survived, candidates = _equal_length_race(honest, oracle, learning, attack)
    forged = best_chain(candidates, config.tie_break)
    return AttackTrial(
        seed=seed,
        honest_height=honest.height,
        attacker_height=forged.height,
        survived=survived,
        honest_tip_reward=honest.tip.reward,
        attacker_tip_reward=forged.tip.reward,
        honest_reward_sum=chain_score(honest, TieBreakRule.SUM_REWARD),
        attacker_reward_sum=chain_score(forged, TieBreakRule.SUM_REWARD),
        honest_chain=honest,
        forged_chain=forged,
    )


def run_attack_scenario(
    config: SimConfig,
    oracle: Oracle,
    learning: LearningConfig,
    attack: AttackConfig,
    logger: Optional[Logger] = None,
) -> AttackReport:
    """Tamper-and-race trials over ``attack.sweep_seeds`` consecutive seeds."""
    logger = logger or Logger()
    report = AttackReport(attack.race, attack.honest_count, attack.attacker_count, attack.tamper_height)
    for seed in sweep_seeds(config.seed, attack.sweep_seeds):
        trial = attack_trial(config, oracle, learning, attack, seed, logger)
        report.trials.append(trial)
        logger.log(f"attack trial seed {seed}: survived {trial.survived}")
    for rule in TieBreakRule:
        logger.log(f"honest survival under {rule.value}: {report.survival_fraction(rule):.3f}")
    return report


def run_pooling_sweep(
    config: SimConfig,
    oracle: Oracle,
    learning: LearningConfig,
    curve: CurveConfig,
    logger: Optional[Logger] = None,
) -> PoolingReport:
    """Blocks to the first goal on the consensus chain, one node against ``curve.pooling_nodes``."""
    report = PoolingReport(pooling_nodes=curve.pooling_nodes, blocks=curve.sweep_blocks)
    for seed in sweep_seeds(config.seed, curve.sweep_seeds):
        found = []
        for k in (1, curve.pooling_nodes):
            sim = replace(_uniform_mining(config, k, seed), max_blocks=curve.sweep_blocks, stop_time=None)
            result = run_simulation(sim, oracle, replace(learning, seed=seed), logger)
            found.append(episode_stats(result.consensus_chain, oracle)[0])
        report.add(seed, found[0], found[1])
    return report
