from typing import Optional

from pourl.scenarios.attack import AttackScenario
from pourl.scenarios.common import ScenarioBase, ScenarioResult
from pourl.scenarios.converge import ConvergeScenario
from pourl.scenarios.learncurve import LearnCurveScenario
from pourl.scenarios.mine import MineScenario
from pourl.scenarios.partition import PartitionScenario, default_partition


SCENARIOS = [
    MineScenario(),
    ConvergeScenario(),
    PartitionScenario(),
    AttackScenario(),
    LearnCurveScenario(),
]


def get_scenario(name: str) -> Optional[ScenarioBase]:
    return next((s for s in SCENARIOS if s.name == name), None)


__all__ = [
    "ScenarioBase",
    "ScenarioResult",
    "SCENARIOS",
    "get_scenario",
    "default_partition",
    "MineScenario",
    "ConvergeScenario",
    "PartitionScenario",
    "AttackScenario",
    "LearnCurveScenario",
]
