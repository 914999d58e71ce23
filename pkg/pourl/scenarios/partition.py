from dataclasses import replace
from typing import Any, Dict, List

from pourl.config import Partition, SimConfig
from pourl.consensus import best_chain
from pourl.environment import GridWorld
from pourl.errors import ConfigError
from pourl.hashchain import tip_digest
from pourl.metrics import SimReport
from pourl.netsim import run_simulation
from pourl.scenarios.common import ScenarioBase, ScenarioResult, sim_result


def default_partition(sim: SimConfig) -> Partition:
    """Split the nodes in half for the middle third of the expected run length."""
    if sim.node_count < 2:
        raise ConfigError("simulation.node_count", "a partition needs at least two nodes")
    rate = sum(1.0 / sim.mine_time_for(n) for n in range(sim.node_count))
    span = sim.max_blocks / rate
    return Partition(start=span / 3, end=2 * span / 3, side=frozenset(range(sim.node_count // 2)))


def heal_summary(sim: SimReport, partitions: List[Partition]) -> List[Dict[str, Any]]:
    found = []
    for partition, held in zip(partitions, sim.heal_chains):
        side = [held[n] for n in sorted(held) if n in partition.side and n not in sim.attackers]
        other = [held[n] for n in sorted(held) if n not in partition.side and n not in sim.attackers]
        side_best, other_best = best_chain(side, sim.rule), best_chain(other, sim.rule)
        found.append({
            "start": partition.start,
            "end": partition.end,
            "side": sorted(partition.side),
            "side_tip": tip_digest(side_best).hex(),
            "other_tip": tip_digest(other_best).hex(),
            "winner_tip": tip_digest(best_chain([side_best, other_best], sim.rule)).hex(),
        })
    return found


class PartitionScenario(ScenarioBase):
    name = "partition"

    @property
    def description(self) -> str:
        return (
            "Cuts the network in two for a while, then heals it and measures how long "
            "the honest nodes need to agree on one tip again."
        )

    def run(self, config, logger) -> ScenarioResult:
        sim_config = config.simulation
        if not sim_config.partitions:
            derived = default_partition(sim_config)
            logger.warning(f"no partitions configured; using [{derived.start:.3f}, {derived.end:.3f})")
            sim_config = replace(sim_config, partitions=(derived,))
        oracle = GridWorld(config.gridworld)
        sim = run_simulation(sim_config, oracle, config.learning, logger)
        report = sim.summary(config.learncurve.window)
        report["converged"] = sim.tips_agree
        report["partitions"] = heal_summary(sim, sorted(sim_config.partitions, key=lambda p: p.start))
        return sim_result(sim, report)
