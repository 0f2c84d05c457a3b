"""
黑盒设备基类与设备工厂

同一组设备共享一个关联源（行为表或局域隐变量），每轮的输出只由 (seed, stream, 轮次) 决定；
v1 设备无记忆，各轮独立同分布
"""
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

from ..models.behavior import Behavior, Scenario
from ..models.config import DeviceSpec
from ..models.errors import ConfigError, DeviceNonResponseError
from ..utils.rng import STREAM_DEVICES, map_blocks, block_generator


class CorrelationSource(ABC):
    """一组设备背后的联合输出机制"""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    @abstractmethod
    def sample_block(self, settings: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """settings 形状 (k, n)，返回同形状的输出"""

    @abstractmethod
    def behavior(self) -> Behavior:
        """该源实现的行为表"""

    def sample(self, settings: np.ndarray, seed: int, stream: int = STREAM_DEVICES,
               threads: int = 1) -> np.ndarray:
        settings = np.asarray(settings, dtype=np.int64).reshape(-1, self.scenario.parties)
        if settings.shape[0] == 0:
            return np.zeros_like(settings)
        parts = map_blocks(lambda index, part: self.sample_block(settings[part], block_generator(seed, stream, index)),
                           settings.shape[0], threads)
        return np.concatenate(parts)


class DeviceBox(ABC):
    """
    单方黑盒：接收输入 x，返回输出 a

    盒子只暴露输入输出，内部的关联源由同组设备共享
    """
    kind = "box"

    def __init__(self, party: int, source: CorrelationSource):
        if not 0 <= party < source.scenario.parties:
            raise ConfigError(f"Party {party} outside scenario with {source.scenario.parties} parties")
        self.party = party
        self.source = source

    @property
    def scenario(self) -> Scenario:
        return self.source.scenario

    def check_inputs(self, inputs: np.ndarray):
        inputs = np.asarray(inputs)
        if inputs.size and (inputs.min() < 0 or inputs.max() >= self.scenario.inputs):
            raise DeviceNonResponseError(
                f"{self.kind} device {self.party} cannot respond to inputs outside 0..{self.scenario.inputs - 1}")

    def group(self) -> List["DeviceBox"]:
        """与本设备共享关联源的全部设备（按方序）"""
        return [self if party == self.party else type(self)(party, self.source)
                for party in range(self.scenario.parties)]

    def implemented_behavior(self) -> Behavior:
        return self.source.behavior()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(party={self.party})"


def respond_jointly(boxes: Sequence[DeviceBox], settings: np.ndarray, seed: int,
                    stream: int = STREAM_DEVICES, threads: int = 1) -> np.ndarray:
    """
    一组设备对逐轮输入的联合响应

    settings 形状 (N, n)，第 k 列送入第 k 个盒子
    """
    if not boxes:
        raise DeviceNonResponseError("No devices to query")
    source = boxes[0].source
    if any(box.source is not source for box in boxes):
        raise DeviceNonResponseError("Devices queried together must share one correlation source")
    if [box.party for box in boxes] != list(range(source.scenario.parties)):
        raise DeviceNonResponseError("Devices must be passed in party order")
    settings = np.asarray(settings, dtype=np.int64).reshape(-1, len(boxes))
    for box, column in zip(boxes, settings.T):
        box.check_inputs(column)
    return source.sample(settings, seed, stream, threads)


DeviceBuilder = Callable[[DeviceSpec], Tuple[type, CorrelationSource]]


class DeviceFactory:
    """设备工厂类"""

    _builders: Dict[str, DeviceBuilder] = {}

    @classmethod
    def register_device(cls, kind: str, builder: DeviceBuilder):
        """注册设备类型"""
        cls._builders[kind] = builder

    @classmethod
    def create_group(cls, spec: DeviceSpec) -> List[DeviceBox]:
        """按描述创建共享同一关联源的一组设备"""
        if spec.kind not in cls._builders:
            raise ConfigError(f"No device registered for kind '{spec.kind}', "
                              f"available: {cls.get_available_devices()}")
        box_class, source = cls._builders[spec.kind](spec)
        boxes = [box_class(party, source) for party in range(source.scenario.parties)]
        logger.debug(f"Created {spec.kind} device group with {len(boxes)} boxes")
        return boxes

    @classmethod
    def get_available_devices(cls) -> List[str]:
        """获取可用的设备类型"""
        return sorted(cls._builders)
