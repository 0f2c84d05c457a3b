"""
各模块输出的报告模型
"""
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, validator


class NoSignalingReport(BaseModel):
    """无信号检验结果"""
    passed: bool
    worst_violation: float = Field(..., description="边缘分布随本方输入变化的最大幅度")
    tolerance: float
    offending_party: Optional[int] = None
    offending_marginal: Optional[str] = None


class CertificationReport(BaseModel):
    """设备无关随机性认证报告"""
    functional: str = Field("CHSH", description="使用的 Bell 泛函")
    s_hat: float = Field(..., description="插值估计 S_hat")
    s_lo: float = Field(..., description="置信下界 S_lo")
    confidence: float
    bits_per_round: float = Field(..., description="f(S_lo)")
    rounds: int
    certified_bits: int = Field(..., description="R = floor(N·f(S_lo))")
    local_bound: Optional[float] = None
    infinite_sample: bool = False
    created_at: datetime = Field(default_factory=datetime.now)

    @validator('bits_per_round')
    def validate_bits_per_round(cls, v):
        if v < 0 or v > 2:
            raise ValueError('Bits per round must lie in [0, 2]')
        return v

    @validator('s_lo')
    def validate_s_lo(cls, v, values):
        if 's_hat' in values and v > values['s_hat'] + 1e-12:
            raise ValueError('S_lo must not exceed S_hat')
        return v

    @property
    def violated(self) -> bool:
        return self.certified_bits > 0


class EntropyBudget(BaseModel):
    """相位扩散 QRNG 的单比特最小熵预算"""
    sigma_noise: float = Field(..., description="总噪声标准差（V）")
    delta_v: float = Field(..., description="干涉半幅 ΔV（V）")
    kappa: float = Field(..., description="尾部倍数 κ")
    noise_distribution: str = "gaussian"
    bias_bound: float = Field(..., description="b = P(d=1|κσ) − 1/2")
    failure_probability: float = Field(..., description="噪声超过 κσ 的单侧尾概率")
    min_entropy_per_bit: float = Field(..., description="H∞ = −log2(1/2 + b)")
    assumes_full_phase_diffusion: bool = Field(True, description="假设 Δφ 已完全均匀化")


class VarianceFit(BaseModel):
    """var = A + B⟨I⟩ + C⟨I⟩² 的拟合结果"""
    a: float
    b: float
    c: float
    a_interval: List[float]
    b_interval: List[float]
    c_interval: List[float]
    confidence: float
    residuals: List[float]
    shot_noise_fraction: List[float]
    weighting: str = "ols"

    def coefficients(self) -> List[float]:
        return [self.a, self.b, self.c]

    def intervals(self) -> List[List[float]]:
        return [self.a_interval, self.b_interval, self.c_interval]


class ProtocolReport(BaseModel):
    """随机性扩展 / 放大协议报告"""
    protocol: str
    aborted: bool = False
    abort_reason: Optional[str] = None
    rounds: int
    test_rounds: int = 0
    seed_bits_settings: int = Field(0, description="N_s")
    seed_bits_extractor: int = Field(0, description="N_e")
    generated_bits: int = Field(0, description="N_g")
    certified_entropy: int = Field(0, description="R")
    output_length: int = 0
    expansion_ratio: Optional[float] = Field(None, description="R/(N_s+N_e)")
    certifications: List[CertificationReport] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)

    @validator('output_length')
    def validate_output_length(cls, v, values):
        if values.get('aborted') and v != 0:
            raise ValueError('Aborted protocols must not produce output')
        return v
