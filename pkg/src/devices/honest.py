"""
诚实量子设备与脚本设备：按给定行为表 p(a⃗|x⃗) 抽样
"""
from pathlib import Path

import numpy as np

from ..core.nonlocality import CHSH_SCENARIO, honest_chsh_behavior, pr_box
from ..models.behavior import Behavior
from ..models.config import DeviceSpec
from ..models.errors import ConfigError
from ..utils.formats import read_behavior_table
from .base import CorrelationSource, DeviceBox, DeviceFactory


class BehaviorSource(CorrelationSource):
    """逆 CDF 抽样：每轮一个均匀数决定联合输出"""

    def __init__(self, behavior: Behavior):
        super().__init__(behavior.scenario)
        self._behavior = behavior
        cdf = np.cumsum(behavior.flat_conditionals(), axis=1)
        self._cdf = cdf / cdf[:, -1:]

    def behavior(self) -> Behavior:
        return self._behavior

    def sample_block(self, settings: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n, m, d = self.scenario.as_tuple()
        row = np.ravel_multi_index(tuple(settings.T), self.scenario.settings_shape)
        uniforms = rng.random(settings.shape[0])
        outcome_index = np.minimum((self._cdf[row] <= uniforms[:, None]).sum(axis=1), d ** n - 1)
        return np.stack(np.unravel_index(outcome_index, (d,) * n), axis=1)


class HonestDevice(DeviceBox):
    """共享纠缠态并执行 CHSH 最优测量的设备"""
    kind = "honest"


class ScriptedDevice(DeviceBox):
    """由对手指定行为表的设备（可以超出量子集合，例如 PR 盒）"""
    kind = "scripted"


def build_honest(spec: DeviceSpec):
    return HonestDevice, BehaviorSource(honest_chsh_behavior(spec.state, spec.visibility))


def build_scripted(spec: DeviceSpec):
    if spec.behavior == "pr-box":
        behavior = pr_box()
    else:
        path = Path(spec.behavior)
        if not path.exists():
            raise ConfigError(f"Behavior table {path} not found")
        behavior = read_behavior_table(path)
    if behavior.scenario != CHSH_SCENARIO:
        raise ConfigError(f"Scripted CHSH devices need a (2,2,2) behavior, got {behavior.scenario.as_tuple()}")
    return ScriptedDevice, BehaviorSource(behavior)


DeviceFactory.register_device(HonestDevice.kind, build_honest)
DeviceFactory.register_device(ScriptedDevice.kind, build_scripted)
