from typing import Optional

from pourl import __version__
from pourl.config import ExperimentConfig, config_to_dict
from pourl.consensus import compute_awards
from pourl.environment import GridWorld
from pourl.errors import ConfigError
from pourl.logger import Logger
from pourl.persistence import ArtifactStore
from pourl.scenarios import ScenarioResult, get_scenario


class ExperimentRunner:
    """Runs the configured scenario and writes every artifact under the output directory."""

    def __init__(self, config: ExperimentConfig, logger: Logger, store: Optional[ArtifactStore] = None) -> None:
        self.config = config
        self.logger = logger
        self.store = store or ArtifactStore(config.output_dir)

    def run(self) -> ScenarioResult:
        scenario = get_scenario(self.config.scenario)
        if scenario is None:
            raise ConfigError("scenario", f"unknown scenario {self.config.scenario!r}")
        self.logger.log(f"Scenario {scenario.name} started: {scenario.description}")
        result = scenario.run(self.config, self.logger)
        self._write(result)
        self.logger.log(f"Scenario {scenario.name} finished; artifacts in {self.store.out_dir}")
        return result

    def _write(self, result: ScenarioResult) -> None:
        oracle = GridWorld(self.config.gridworld)
        echoed = config_to_dict(self.config)
        echoed.pop("output_dir")
        self.store.save_report({
            "pourl_version": __version__,
            "scenario": self.config.scenario,
            "config": echoed,
            "result": result.report,
        })
        self.store.save_metrics(result.sim.rows if result.sim is not None else [])
        self.store.save_chains(result.chains, oracle)
        ledger_chain = result.sim.consensus_chain if result.sim is not None else result.chains.get("honest")
        if ledger_chain is not None:
            self.store.save_ledger(compute_awards(ledger_chain))
        if result.sim is not None:
            for node_id in sorted(result.sim.agents):
                self.store.save_params(node_id, result.sim.agents[node_id].prediction_params)
        if result.curve is not None:
            self.store.save_curve(result.curve, self.config.learncurve.window)
