"""
配置管理模型

一个运行配置（RunConfig）只包含一个命令块：chsh、extract、qrng 或 protocol
"""
from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import BaseModel, Field, root_validator, validator

from .errors import ConfigError

SCHEMA_VERSION = 1
MAX_SEED = (1 << 64) - 1


class StrictModel(BaseModel):
    """拒绝未知字段的基类"""

    class Config:
        extra = "forbid"


class LoggingConfig(StrictModel):
    """日志配置"""
    level: str = Field("INFO", description="日志级别")
    file: Optional[str] = Field(None, description="日志文件路径，为空时只输出到终端")
    max_file_size: str = Field("10 MB", description="单个日志文件大小上限")
    backup_count: int = Field(5, description="保留的日志文件数量")

    @validator('level')
    def validate_level(cls, v):
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of {valid_levels}')
        return v.upper()

    @validator('backup_count')
    def validate_backup_count(cls, v):
        if v < 0:
            raise ValueError('Backup count must be non-negative')
        return v


class DeviceSpec(StrictModel):
    """黑盒设备描述"""
    kind: str = Field("honest", description="honest / local / scripted")
    state: str = Field("phi_plus", description="诚实设备共享的 Bell 态")
    visibility: float = Field(1.0, description="与最大混态混合的可见度（Werner 态）")
    local_vertex: int = Field(0, description="局域设备使用的确定性策略序号（字典序）")
    strategies: Optional[List[List[List[int]]]] = Field(
        None, description="局域设备的确定性策略列表，每个策略为各方的输入→输出表，如 [[0, 1], [0, 0]]")
    weights: Optional[List[float]] = Field(None, description="各策略的权重 q_λ，默认均匀")
    behavior: Optional[str] = Field(None, description="脚本设备的行为：pr-box 或行为表文件路径")

    @validator('kind')
    def validate_kind(cls, v):
        if v not in ['honest', 'local', 'scripted']:
            raise ValueError('Device kind must be one of honest, local, scripted')
        return v

    @validator('visibility')
    def validate_visibility(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError('Visibility must lie in [0, 1]')
        return v

    @validator('local_vertex')
    def validate_local_vertex(cls, v):
        if v < 0:
            raise ValueError('Local vertex index must be non-negative')
        return v

    @validator('strategies')
    def validate_strategies(cls, v):
        if v is None:
            return v
        if not v:
            raise ValueError('Local strategies must not be empty')
        for strategy in v:
            if len(strategy) != 2 or any(len(table) != 2 or any(a not in (0, 1) for a in table)
                                          for table in strategy):
                raise ValueError(f'Strategy {strategy} must give two binary tables of length 2')
        return v

    @validator('weights', always=True)
    def validate_weights(cls, v, values):
        if v is None:
            return v
        strategies = values.get('strategies')
        if not strategies or len(v) != len(strategies):
            raise ValueError('Weights need one entry per local strategy')
        if any(w < 0 for w in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError('Local strategy weights must be a probability vector')
        return v

    @validator('behavior', always=True)
    def validate_behavior(cls, v, values):
        if values.get('kind') == 'scripted' and not v:
            raise ValueError('Scripted devices need a behavior (pr-box or a table file)')
        return v


class ChshConfig(StrictModel):
    """CHSH 检验与认证"""
    device: DeviceSpec = Field(default_factory=DeviceSpec)
    rounds: int = Field(1_000_000, description="轮数 N")
    confidence: float = Field(0.99, description="S_lo 的置信水平")
    settings_distribution: Optional[List[float]] = Field(None, description="输入组合 (x,y) 的分布，默认均匀")

    @validator('confidence')
    def validate_confidence(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError('Confidence must lie in (0, 1)')
        return v

    @validator('rounds')
    def validate_rounds(cls, v):
        if v < 1:
            raise ValueError('Rounds must be at least 1')
        return v

    @validator('settings_distribution')
    def validate_settings_distribution(cls, v):
        if v is not None and len(v) != 4:
            raise ValueError('CHSH settings distribution needs 4 entries')
        return v


class ExtractConfig(StrictModel):
    """对位文件做后处理"""
    mode: str = Field("toeplitz", description="toeplitz 或 inner-product")
    input: str = Field(..., description="输入位文件")
    second_input: Optional[str] = Field(None, description="内积模式的第二个输入")
    seed_file: Optional[str] = Field(None, description="Toeplitz 种子位文件，为空时由运行种子生成")
    input_length: Optional[int] = Field(None, description="使用的输入比特数，默认整个文件")
    block_length: Optional[int] = Field(None, description="分块长度，默认整个输入")
    output_length: Optional[int] = Field(None, description="每块 Toeplitz 输出比特数")
    min_entropy_per_bit: Optional[float] = Field(None, description="按最小熵计算输出长度")
    security_bits: int = Field(64, description="ε = 2^-security_bits")
    reuse_seed: bool = Field(False, description="所有块共用一个种子（扩展器模式）")

    @validator('security_bits')
    def validate_security_bits(cls, v):
        if v < 1 or v > 256:
            raise ValueError('Security bits must lie in 1..256')
        return v

    @validator('mode')
    def validate_mode(cls, v):
        if v not in ['toeplitz', 'inner-product']:
            raise ValueError('Extraction mode must be toeplitz or inner-product')
        return v

    @validator('input_length', 'block_length', 'output_length')
    def validate_positive(cls, v):
        if v is not None and v < 1:
            raise ValueError('Lengths must be positive')
        return v

    @validator('min_entropy_per_bit')
    def validate_min_entropy(cls, v):
        if v is not None and not 0.0 < v <= 1.0:
            raise ValueError('Min-entropy per bit must lie in (0, 1]')
        return v

    @root_validator(skip_on_failure=True)
    def validate_mode_parameters(cls, values):
        if values['mode'] == 'inner-product' and not values.get('second_input'):
            raise ValueError('Inner-product extraction needs second_input')
        if values['mode'] == 'toeplitz' and values.get('output_length') is None \
                and values.get('min_entropy_per_bit') is None:
            raise ValueError('Toeplitz extraction needs output_length or min_entropy_per_bit')
        return values

    @property
    def epsilon(self) -> float:
        return 2.0 ** -self.security_bits


class PulseModel(StrictModel):
    """激光脉冲与干涉参数"""
    power_short: float = Field(0.25, description="短臂平均功率 p_S")
    power_long: float = Field(0.25, description="长臂平均功率 p_L")
    visibility: float = Field(1.0, description="干涉可见度 𝒱")
    power_jitter: float = Field(0.0, description="功率的相对高斯抖动（标准差）")
    responsivity: float = Field(1.0, description="探测器响应度（V / 功率单位）")
    phase_offset: float = Field(0.0, description="环境或对手加入的固定相移（rad）")
    phase_diffusion_width: Optional[float] = Field(
        None, description="不完全相位扩散时 Δφ 的包裹正态宽度，为空表示完全扩散")

    @validator('power_short', 'power_long')
    def validate_power(cls, v):
        if v < 0:
            raise ValueError('Powers must be non-negative')
        return v

    @validator('visibility')
    def validate_visibility(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError('Visibility must lie in [0, 1]')
        return v

    @validator('power_jitter')
    def validate_power_jitter(cls, v):
        if v < 0:
            raise ValueError('Power jitter must be non-negative')
        return v

    @validator('responsivity')
    def validate_responsivity(cls, v):
        if v <= 0:
            raise ValueError('Responsivity must be positive')
        return v

    @validator('phase_diffusion_width')
    def validate_width(cls, v):
        if v is not None and v <= 0:
            raise ValueError('Phase diffusion width must be positive')
        return v


class NoiseModel(StrictModel):
    """电子噪声、阈值抖动与探测器拖尾"""
    sigma_noise: float = Field(0.01, description="电子噪声标准差（V）")
    threshold_jitter: float = Field(0.0, description="阈值 V0 的高斯抖动（V）")
    hangover: float = Field(0.0, description="前一脉冲电压泄漏到当前采样的比例 h")
    distribution: str = Field("gaussian", description="gaussian 或 student-t")
    degrees_of_freedom: float = Field(4.0, description="student-t 噪声的自由度")

    @validator('sigma_noise', 'threshold_jitter')
    def validate_non_negative(cls, v):
        if v < 0:
            raise ValueError('Noise levels must be non-negative')
        return v

    @validator('hangover')
    def validate_hangover(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError('Hangover must lie in [0, 1)')
        return v

    @validator('distribution')
    def validate_distribution(cls, v):
        if v not in ['gaussian', 'student-t']:
            raise ValueError('Noise distribution must be gaussian or student-t')
        return v

    @validator('degrees_of_freedom')
    def validate_dof(cls, v):
        if v <= 2:
            raise ValueError('Student-t noise needs more than 2 degrees of freedom for a finite variance')
        return v


class DigitizerConfig(StrictModel):
    """二值化阈值与干涉半幅"""
    threshold: float = Field(0.5, description="阈值 V0（V）")
    delta_v: Optional[float] = Field(None, description="干涉半幅 ΔV（V），为空时由脉冲参数计算")

    @validator('delta_v')
    def validate_delta_v(cls, v):
        if v is not None and v <= 0:
            raise ValueError('ΔV must be positive')
        return v


class QrngConfig(StrictModel):
    """相位扩散 QRNG 流水线"""
    pulse: PulseModel = Field(default_factory=PulseModel)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    digitizer: DigitizerConfig = Field(default_factory=DigitizerConfig)
    kappa: float = Field(8.0, description="噪声尾部倍数 κ")
    pulses: int = Field(1_000_000, description="脉冲数 N")
    security_bits: int = Field(64, description="ε = 2^-security_bits")
    compensate_hangover: bool = Field(True, description="二值化前减去可预测的拖尾")
    calibration_csv: Optional[str] = Field(None, description="(mean_current, variance) 校准点")

    @validator('security_bits')
    def validate_security_bits(cls, v):
        if v < 1 or v > 256:
            raise ValueError('Security bits must lie in 1..256')
        return v

    @validator('kappa')
    def validate_kappa(cls, v):
        if v < 0:
            raise ValueError('Kappa must be non-negative')
        return v

    @validator('pulses')
    def validate_pulses(cls, v):
        if v < 1:
            raise ValueError('Pulse count must be at least 1')
        return v

    @property
    def epsilon(self) -> float:
        return 2.0 ** -self.security_bits


class ExpansionConfig(StrictModel):
    """随机性扩展（抽查式 CHSH）"""
    rounds: int = Field(1_000_000, description="轮数 N")
    test_probability: float = Field(1.0, description="测试轮概率 q")
    generation_setting: List[int] = Field(default_factory=lambda: [0, 0], description="生成轮的固定输入")
    confidence: float = Field(0.99, description="S_lo 的置信水平")
    security_bits: int = Field(32, description="提取器 ε = 2^-security_bits")
    block_length: int = Field(16384, description="Toeplitz 分块长度")
    reuse_extractor_seed: bool = Field(False, description="所有块共用一个 Toeplitz 种子")
    public_settings: bool = Field(False, description="输入来自可信公共随机源，不计入种子消耗")
    seed_budget: Optional[int] = Field(None, description="初始种子比特数，为空时不设上限")

    @validator('confidence')
    def validate_confidence(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError('Confidence must lie in (0, 1)')
        return v

    @validator('security_bits')
    def validate_security_bits(cls, v):
        if v < 1 or v > 256:
            raise ValueError('Security bits must lie in 1..256')
        return v

    @validator('rounds', 'block_length')
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError('Rounds and block length must be positive')
        return v

    @validator('test_probability')
    def validate_test_probability(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError('Test probability must lie in (0, 1]')
        return v

    @validator('generation_setting')
    def validate_generation_setting(cls, v):
        if len(v) != 2 or any(s not in (0, 1) for s in v):
            raise ValueError('Generation setting must be a pair of 0/1 inputs')
        return v

    @validator('seed_budget')
    def validate_seed_budget(cls, v):
        if v is not None and v < 0:
            raise ValueError('Seed budget must be non-negative')
        return v

    @property
    def epsilon(self) -> float:
        return 2.0 ** -self.security_bits


class AmplificationConfig(StrictModel):
    """随机性放大（四设备，SV 源驱动）"""
    rounds: int = Field(200_000, description="轮数 N")
    epsilon: float = Field(0.05, description="SV 源参数 ε")
    strategy: str = Field("constant-bias", description="SV 对手策略预设")
    strategy_params: dict = Field(default_factory=dict, description="策略参数，默认 p = 1/2 + ε")
    confidence: float = Field(0.99, description="S_lo 的置信水平")
    block_length: int = Field(64, description="内积提取的分块长度，也是每块残余 SV 比特 t 的长度")

    @validator('confidence')
    def validate_confidence(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError('Confidence must lie in (0, 1)')
        return v

    @validator('rounds', 'block_length')
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError('Rounds and block length must be positive')
        return v

    @validator('epsilon')
    def validate_epsilon(cls, v):
        if not 0.0 <= v <= 0.5:
            raise ValueError('SV epsilon must lie in [0, 1/2]')
        return v


def _pair_count(kind: Optional[str]) -> int:
    return 2 if kind == "amplification" else 1


class ProtocolConfig(StrictModel):
    """协议运行配置"""
    kind: str = Field("expansion", description="expansion 或 amplification")
    devices: Optional[List[DeviceSpec]] = Field(
        None, description="设备对列表：扩展 1 对，放大 2 对；默认全部为诚实设备")
    expansion: ExpansionConfig = Field(default_factory=ExpansionConfig)
    amplification: AmplificationConfig = Field(default_factory=AmplificationConfig)

    @validator('kind')
    def validate_kind(cls, v):
        if v not in ['expansion', 'amplification']:
            raise ValueError('Protocol kind must be expansion or amplification')
        return v

    @validator('devices')
    def validate_devices(cls, v, values):
        if v is not None and len(v) != _pair_count(values.get('kind')):
            raise ValueError(f'{values.get("kind")} needs {_pair_count(values.get("kind"))} device pairs, got {len(v)}')
        return v

    def device_specs(self) -> List[DeviceSpec]:
        if self.devices is not None:
            return list(self.devices)
        return [DeviceSpec() for _ in range(_pair_count(self.kind))]


COMMAND_BLOCKS = ("chsh", "extract", "qrng", "protocol")


class RunConfig(StrictModel):
    """主配置类"""
    schema_version: int = Field(SCHEMA_VERSION, description="配置格式版本")
    seed: int = Field(0, description="全局随机种子（u64）")
    threads: int = Field(1, description="工作线程数，不影响结果")
    output_dir: str = Field("output", description="输出目录")
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    chsh: Optional[ChshConfig] = None
    extract: Optional[ExtractConfig] = None
    qrng: Optional[QrngConfig] = None
    protocol: Optional[ProtocolConfig] = None

    @validator('schema_version')
    def validate_schema_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f'Unsupported schema version {v}, expected {SCHEMA_VERSION}')
        return v

    @validator('seed')
    def validate_seed(cls, v):
        if not 0 <= v <= MAX_SEED:
            raise ValueError('Seed must be an unsigned 64-bit integer')
        return v

    @validator('threads')
    def validate_threads(cls, v):
        if v < 1:
            raise ValueError('Threads must be at least 1')
        return v

    @root_validator(skip_on_failure=True)
    def validate_single_command(cls, values):
        present = [name for name in COMMAND_BLOCKS if values.get(name) is not None]
        if len(present) != 1:
            raise ValueError(f'Exactly one command block of {list(COMMAND_BLOCKS)} is required, got {present}')
        return values

    @property
    def command(self) -> str:
        return next(name for name in COMMAND_BLOCKS if getattr(self, name) is not None)

    @classmethod
    def load_from_file(cls, config_path: str) -> "RunConfig":
        """从YAML文件加载配置"""
        config_file = Path(config_path)
        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file {config_path} not found.")

        with open(config_file, 'r', encoding='utf-8') as f:
            try:
                config_data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"Invalid YAML in {config_path}: {e}") from e

        if not isinstance(config_data, dict):
            raise ConfigError(f"Configuration file {config_path} must contain a mapping")
        return cls(**config_data)

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       threads: Optional[int] = None) -> "RunConfig":
        """命令行参数覆盖文件中的值"""
        data = self.dict()
        if seed is not None:
            data['seed'] = seed
        if output_dir is not None:
            data['output_dir'] = output_dir
        if threads is not None:
            data['threads'] = threads
        return RunConfig(**data)

    def save_to_file(self, config_path: str):
        """保存配置到YAML文件"""
        config_file = Path(config_path)
        config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(config_file, 'w', encoding='utf-8') as f:
            yaml.dump(self.dict(exclude_none=True), f, default_flow_style=False, allow_unicode=True)
