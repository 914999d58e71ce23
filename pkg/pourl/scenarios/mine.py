from pourl.environment import GridWorld
from pourl.netsim import run_simulation
from pourl.scenarios.common import ScenarioBase, ScenarioResult, policy_summary, sim_result


class MineScenario(ScenarioBase):
    name = "mine"

    @property
    def description(self) -> str:
        return (
            "Plain mining run: every configured node mines until one chain reaches "
            "max_blocks, then the greedy policy of the winning network is rolled out."
        )

    def run(self, config, logger) -> ScenarioResult:
        oracle = GridWorld(config.gridworld)
        sim = run_simulation(config.simulation, oracle, config.learning, logger)
        report = sim.summary(config.learncurve.window)
        report.update(policy_summary(sim, oracle))
        return sim_result(sim, report)
