# Black-box devices for Bell tests

# 导入所有设备以确保它们被注册到工厂
from .honest import BehaviorSource, HonestDevice, ScriptedDevice
from .local import LocalDevice, LocalSource, deterministic_model, mixed_model, vertex_model

# 导出基础类
from .base import CorrelationSource, DeviceBox, DeviceFactory, respond_jointly
from .factory import make_device, make_device_pair

__all__ = [
    'CorrelationSource',
    'DeviceBox',
    'DeviceFactory',
    'respond_jointly',
    'make_device',
    'make_device_pair',
    'BehaviorSource',
    'HonestDevice',
    'ScriptedDevice',
    'LocalDevice',
    'LocalSource',
    'vertex_model',
    'deterministic_model',
    'mixed_model',
]
