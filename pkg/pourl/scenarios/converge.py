from pourl.environment import GridWorld
from pourl.netsim import run_simulation
from pourl.scenarios.common import ScenarioBase, ScenarioResult, sim_result


class ConvergeScenario(ScenarioBase):
    name = "converge"

    @property
    def description(self) -> str:
        return (
            "Several competing miners on one network; after the final flush every "
            "honest node should hold the same tip."
        )

    def run(self, config, logger) -> ScenarioResult:
        oracle = GridWorld(config.gridworld)
        sim = run_simulation(config.simulation, oracle, config.learning, logger)
        report = sim.summary(config.learncurve.window)
        report["converged"] = sim.tips_agree
        if not sim.tips_agree:
            logger.warning(f"nodes ended on {len({n.tip_digest for n in sim.nodes})} different tips")
        return sim_result(sim, report)
