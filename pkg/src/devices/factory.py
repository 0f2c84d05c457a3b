"""
设备创建入口
"""
from typing import Any, Tuple

from ..models.config import DeviceSpec
from ..models.errors import ConfigError
from .base import DeviceBox, DeviceFactory


def make_device_pair(spec: DeviceSpec) -> Tuple[DeviceBox, DeviceBox]:
    """一对共享关联源的 CHSH 设备"""
    boxes = DeviceFactory.create_group(spec)
    if len(boxes) != 2:
        raise ConfigError(f"Expected a device pair, got {len(boxes)} boxes")
    return boxes[0], boxes[1]


def make_device(kind: str, party: int = 0, **params: Any) -> DeviceBox:
    """
    按类型和参数创建单个设备

    例如 make_device("local", local_vertex=3) 或 make_device("scripted", behavior="pr-box")；
    同组的另一方可通过 DeviceFactory.create_group 取得
    """
    try:
        spec = DeviceSpec(kind=kind, **params)
    except ValueError as e:
        raise ConfigError(f"Invalid device parameters for '{kind}': {e}") from e
    boxes = DeviceFactory.create_group(spec)
    if not 0 <= party < len(boxes):
        raise ConfigError(f"Party {party} outside 0..{len(boxes) - 1}")
    return boxes[party]
