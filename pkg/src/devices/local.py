"""
局域确定性设备：输出只由隐变量 λ 与本方输入决定
"""
from typing import Optional, Sequence

import numpy as np

from ..core.nonlocality import CHSH_SCENARIO, enumerate_local_strategies, local_model_behavior
from ..models.behavior import Behavior, DeterministicStrategy, LocalModel
from ..models.config import DeviceSpec
from ..models.errors import ConfigError
from .base import CorrelationSource, DeviceBox, DeviceFactory


class LocalSource(CorrelationSource):
    """每轮按 q_λ 抽取 λ，再查各方的确定性输出表"""

    def __init__(self, model: LocalModel):
        super().__init__(model.scenario)
        self.model = model
        # 形状 (L, n, m)
        self._tables = np.array([strategy.tables for strategy in model.strategies], dtype=np.int64)
        cdf = np.cumsum(model.weights)
        self._cdf = cdf / cdf[-1]

    def behavior(self) -> Behavior:
        return local_model_behavior(self.model)

    def sample_block(self, settings: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        uniforms = rng.random(settings.shape[0])
        hidden = np.minimum(np.searchsorted(self._cdf, uniforms, side="right"), len(self._cdf) - 1)
        parties = np.arange(self.scenario.parties)
        return self._tables[hidden[:, None], parties[None, :], settings]


class LocalDevice(DeviceBox):
    """局域隐变量设备"""
    kind = "local"


def vertex_model(index: int) -> LocalModel:
    """CHSH 场景中按字典序第 index 个确定性策略"""
    strategies = list(enumerate_local_strategies(CHSH_SCENARIO))
    if not 0 <= index < len(strategies):
        raise ConfigError(f"Local vertex index {index} outside 0..{len(strategies) - 1}")
    return LocalModel(scenario=CHSH_SCENARIO, weights=[1.0], strategies=[strategies[index]])


def deterministic_model(strategy: DeterministicStrategy) -> LocalModel:
    return LocalModel(scenario=CHSH_SCENARIO, weights=[1.0], strategies=[strategy])


def mixed_model(strategies: Sequence[DeterministicStrategy],
                weights: Optional[Sequence[float]] = None) -> LocalModel:
    """确定性策略的凸组合，weights 为空时取均匀分布"""
    if weights is None:
        weights = [1.0 / len(strategies)] * len(strategies)
    return LocalModel(scenario=CHSH_SCENARIO, weights=list(weights), strategies=list(strategies))


def model_from_spec(spec: DeviceSpec) -> LocalModel:
    """strategies 给出时按其（加权）混合，否则取第 local_vertex 个顶点"""
    if not spec.strategies:
        return vertex_model(spec.local_vertex)
    strategies = [DeterministicStrategy(tuple(tuple(table) for table in tables)) for tables in spec.strategies]
    if len(strategies) == 1:
        return deterministic_model(strategies[0])
    return mixed_model(strategies, spec.weights)


def build_local(spec: DeviceSpec):
    return LocalDevice, LocalSource(model_from_spec(spec))


DeviceFactory.register_device(LocalDevice.kind, build_local)
