from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

from pourl.dqn import greedy_action
from pourl.environment import GridWorld, greedy_path_length, optimal_path_length
from pourl.hashchain import Chain, tip_digest
from pourl.metrics import SimReport


@dataclass
class ScenarioResult:
    report: Dict[str, Any]
    sim: Optional[SimReport] = None
    chains: Dict[str, Chain] = field(default_factory=dict)
    curve: Optional[Sequence[float]] = None


class ScenarioBase:
    name = "Base"

    @property
    def description(self) -> str:
        raise NotImplementedError

    def run(self, config, logger) -> ScenarioResult:
        raise NotImplementedError


def sim_result(sim: SimReport, report: Dict[str, Any], curve: Optional[Sequence[float]] = None) -> ScenarioResult:
    chains = {f"node_{n}": chain for n, chain in sim.chains.items()}
    return ScenarioResult(report=report, sim=sim, chains=chains, curve=curve)


def policy_summary(sim: SimReport, oracle: GridWorld) -> Dict[str, Any]:
    """Greedy rollout of the network held by the first honest node on the consensus tip."""
    winner = tip_digest(sim.consensus_chain)
    node_id = next(n for n in sim.honest_ids if tip_digest(sim.chains[n]) == winner)
    params = sim.agents[node_id].prediction_params
    max_steps = 4 * oracle.config.width * oracle.config.height
    return {
        "policy_node": node_id,
        "greedy_path_length": greedy_path_length(oracle, lambda s: greedy_action(params, s), max_steps),
        "optimal_path_length": optimal_path_length(oracle),
    }
