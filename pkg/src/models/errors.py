"""
异常类型定义
"""


class QuantumValidationError(ValueError):
    """量子对象校验失败（非厄米、迹不为1、非半正定等）"""


class DimensionMismatchError(QuantumValidationError):
    """维度不匹配"""


class InvalidPovmError(QuantumValidationError):
    """POVM 元素之和不为单位阵，或 Kraus 集合不完备"""


class ImpossibleOutcomeError(ValueError):
    """测量结果概率为零，无法计算测后态"""


class ScenarioError(ValueError):
    """Bell 场景或行为表不合法"""


class ScenarioTooLargeError(ScenarioError):
    """场景过大，无法枚举"""


class CoverageError(ValueError):
    """记录中缺少必要的设置组合"""


class SourceModelError(ValueError):
    """弱随机源模型不满足其约束"""


class SvModelViolationError(SourceModelError):
    """SV 策略输出超出 [1/2-ε, 1/2+ε]"""


class ExtractorParameterError(ValueError):
    """提取器参数不合法"""


class SaturationError(ValueError):
    """噪声超出干涉半幅，概率将离开 [0,1]"""


class BudgetError(ValueError):
    """无法给出熵预算"""


class CalibrationError(ValueError):
    """方差标定数据不足或设计矩阵秩亏"""


class ConfigError(ValueError):
    """配置错误"""


class SeedExhaustedError(RuntimeError):
    """种子比特耗尽"""


class DeviceNonResponseError(RuntimeError):
    """设备未对输入作出有效响应"""
