from pourl.environment import GridWorld
from pourl.metrics import window_means
from pourl.netsim import run_pooling_sweep, run_simulation
from pourl.scenarios.common import ScenarioBase, ScenarioResult, policy_summary, sim_result


class LearnCurveScenario(ScenarioBase):
    name = "learncurve"

    @property
    def description(self) -> str:
        return (
            "Long mining run that records the per-block reward curve, followed by a "
            "sweep comparing one miner against a pool of miners sharing a chain."
        )

    def run(self, config, logger) -> ScenarioResult:
        oracle = GridWorld(config.gridworld)
        curve = config.learncurve
        sim = run_simulation(config.simulation, oracle, config.learning, logger)
        rewards = [b.reward for b in sim.consensus_chain.blocks[1:]]
        first, last = window_means(rewards, curve.window)
        report = sim.summary(curve.window)
        report.update(policy_summary(sim, oracle))
        report["learning_curve"] = {"window": curve.window, "first_window_mean": first, "last_window_mean": last}
        pooling = run_pooling_sweep(config.simulation, oracle, config.learning, curve, logger)
        report["pooling"] = pooling.summary()
        logger.log(f"reward moved from {first} to {last}; pooled run not worse on {pooling.pooled_not_worse_fraction}")
        return sim_result(sim, report, curve=rewards)
