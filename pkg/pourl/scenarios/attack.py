from pourl.environment import GridWorld
from pourl.netsim import run_attack_scenario
from pourl.scenarios.common import ScenarioBase, ScenarioResult


class AttackScenario(ScenarioBase):
    name = "attack"

    @property
    def description(self) -> str:
        return (
            "A coalition forges one block's payload, remines the chain behind it and "
            "announces; records how often the honest chain survives under each tie-break."
        )

    def run(self, config, logger) -> ScenarioResult:
        oracle = GridWorld(config.gridworld)
        attack = run_attack_scenario(config.simulation, oracle, config.learning, config.attack, logger)
        first = attack.trials[0]
        return ScenarioResult(
            report=attack.summary(),
            chains={"honest": first.honest_chain, "forged": first.forged_chain},
        )
