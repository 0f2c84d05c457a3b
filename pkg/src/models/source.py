"""
弱随机源模型：比特串上的分布、SV 源、块源、最小熵源
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator

from .errors import SourceModelError, SvModelViolationError

# 精确模式（完整 2^n 概率表）的最大比特数
MAX_EXACT_BITS = 24
DISTRIBUTION_TOLERANCE = 1e-12
SV_BAND_TOLERANCE = 1e-12


@dataclass(eq=False)
class Distribution:
    """
    n 比特串上的概率分布

    下标约定：先生成的比特是最高位，例如 n=2 时下标 0..3 对应 00,01,10,11
    """
    n_bits: int
    probabilities: np.ndarray

    def __post_init__(self):
        probabilities = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if probabilities.size == 0:
            raise SourceModelError("Distribution must not be empty")
        if self.n_bits < 0 or self.n_bits > MAX_EXACT_BITS:
            raise SourceModelError(f"Exact distributions support 0..{MAX_EXACT_BITS} bits, got {self.n_bits}")
        if probabilities.size != 2 ** self.n_bits:
            raise SourceModelError(f"Expected {2 ** self.n_bits} probabilities, got {probabilities.size}")
        if np.any(probabilities < 0):
            raise SourceModelError("Probabilities must be non-negative")
        if abs(probabilities.sum() - 1.0) > DISTRIBUTION_TOLERANCE:
            raise SourceModelError(f"Probabilities sum to {probabilities.sum():.15f}")
        self.probabilities = probabilities

    @property
    def size(self) -> int:
        return self.probabilities.size

    def bitstring(self, index: int) -> str:
        return format(index, f"0{self.n_bits}b") if self.n_bits else ""

    def min_entropy(self) -> float:
        return float(-np.log2(self.probabilities.max()))


class SvStrategy(ABC):
    """
    SV 源的对手策略：前缀 → p(下一比特 = 1)

    用状态机表示前缀的函数，避免每一步重新扫描整个前缀
    """
    name = "strategy"

    @abstractmethod
    def reset(self) -> Any:
        """空前缀对应的状态"""

    @abstractmethod
    def p_one(self, state: Any) -> float:
        """当前前缀下输出 1 的概率"""

    @abstractmethod
    def advance(self, state: Any, bit: int) -> Any:
        """追加一个比特后的状态"""

    def params(self) -> Dict[str, Any]:
        return {}


class ConstantBias(SvStrategy):
    """每一比特都以固定概率 p 输出 1"""
    name = "constant-bias"

    def __init__(self, p: float):
        self.p = float(p)

    def reset(self):
        return None

    def p_one(self, state) -> float:
        return self.p

    def advance(self, state, bit):
        return None

    def params(self):
        return {"p": self.p}


class PrefixParity(SvStrategy):
    """前缀奇偶为偶时 p = 1/2 + ε，否则 1/2 − ε"""
    name = "prefix-parity"

    def __init__(self, epsilon: float):
        self.epsilon = float(epsilon)

    def reset(self):
        return 0

    def p_one(self, state: int) -> float:
        return 0.5 + self.epsilon if state == 0 else 0.5 - self.epsilon

    def advance(self, state: int, bit: int) -> int:
        return state ^ int(bit)

    def params(self):
        return {"epsilon": self.epsilon}


class Periodic(SvStrategy):
    """按位置循环使用给定的概率序列"""
    name = "periodic"

    def __init__(self, pattern: Sequence[float]):
        if len(pattern) == 0:
            raise SourceModelError("Periodic strategy needs a non-empty pattern")
        self.pattern = [float(p) for p in pattern]

    def reset(self):
        return 0

    def p_one(self, state: int) -> float:
        return self.pattern[state % len(self.pattern)]

    def advance(self, state: int, bit: int) -> int:
        return state + 1

    def params(self):
        return {"pattern": self.pattern}


class PrefixTable(SvStrategy):
    """显式给出每个前缀的概率，未列出的前缀使用 default"""
    name = "prefix-table"

    def __init__(self, table: Dict[Tuple[int, ...], float], default: float = 0.5):
        self.table = {tuple(int(b) for b in k): float(v) for k, v in table.items()}
        self.default = float(default)

    def reset(self):
        return ()

    def p_one(self, state: Tuple[int, ...]) -> float:
        return self.table.get(state, self.default)

    def advance(self, state: Tuple[int, ...], bit: int) -> Tuple[int, ...]:
        return state + (int(bit),)


class SvSourceModel(BaseModel):
    """ε-SV 源：任何前缀下 1/2 − ε ≤ p(x_i=1|前缀) ≤ 1/2 + ε"""
    epsilon: float = Field(..., description="偏差上界 ε ∈ [0, 1/2]")
    strategy: SvStrategy = Field(..., description="对手策略")

    class Config:
        arbitrary_types_allowed = True

    @validator('epsilon')
    def validate_epsilon(cls, v):
        if not 0.0 <= v <= 0.5:
            raise SourceModelError(f"SV epsilon must lie in [0, 1/2], got {v}")
        return v

    def checked_p_one(self, state: Any) -> float:
        p = self.strategy.p_one(state)
        if abs(p - 0.5) > self.epsilon + SV_BAND_TOLERANCE:
            raise SvModelViolationError(
                f"Strategy {self.strategy.name} returned p={p} outside [1/2-{self.epsilon}, 1/2+{self.epsilon}]")
        return p


@dataclass
class BlockSourceModel:
    """
    块 (n,k) 源：给定之前所有块，当前块的条件最小熵 ≥ k

    generator 接收之前的块（下标列表），返回当前块的分布
    """
    block_length: int
    min_entropy: float
    generator: Callable[[List[int]], Distribution]

    def __post_init__(self):
        if self.block_length < 1 or self.block_length > MAX_EXACT_BITS:
            raise SourceModelError(f"Block length must be 1..{MAX_EXACT_BITS}")
        if not 0 <= self.min_entropy <= self.block_length:
            raise SourceModelError("Block min-entropy must lie in [0, n]")


@dataclass
class MinEntropySourceModel:
    """最小熵源：整体 H∞(X) ≥ k"""
    n_bits: int
    min_entropy: float
    distribution: Distribution = field(repr=False)

    def __post_init__(self):
        if self.distribution.n_bits != self.n_bits:
            raise SourceModelError("Distribution length does not match the source length")
        if self.distribution.min_entropy() < self.min_entropy - DISTRIBUTION_TOLERANCE:
            raise SourceModelError(
                f"Distribution has H_min={self.distribution.min_entropy():.6f} < k={self.min_entropy}")
