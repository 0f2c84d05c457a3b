"""
Bell 场景相关的数据模型：场景、行为（条件概率表）、确定性策略、局域模型、Bell 泛函
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator

from .errors import ScenarioError, ScenarioTooLargeError

BEHAVIOR_TOLERANCE = 1e-9
MAX_TABLE_CELLS = 10 ** 8


@dataclass(frozen=True)
class Scenario:
    """(n, m, d) 场景：n 方，每方 m 个输入，每个输入 d 个输出"""
    parties: int
    inputs: int
    outputs: int

    def __post_init__(self):
        if self.parties < 1 or self.inputs < 1 or self.outputs < 2:
            raise ScenarioError(f"Invalid scenario {self.as_tuple()}: need n>=1, m>=1, d>=2")
        if self.table_size > MAX_TABLE_CELLS:
            raise ScenarioTooLargeError(f"Scenario {self.as_tuple()} has {self.table_size} cells (> 1e8)")

    def as_tuple(self) -> Tuple[int, int, int]:
        return self.parties, self.inputs, self.outputs

    @property
    def table_size(self) -> int:
        return (self.inputs * self.outputs) ** self.parties

    @property
    def table_shape(self) -> Tuple[int, ...]:
        return (self.inputs,) * self.parties + (self.outputs,) * self.parties

    @property
    def settings_shape(self) -> Tuple[int, ...]:
        return (self.inputs,) * self.parties

    @property
    def vertex_count(self) -> int:
        return (self.outputs ** self.inputs) ** self.parties


@dataclass(eq=False)
class Behavior:
    """
    行为 p(a⃗|x⃗)

    table 的形状为 (m,)*n + (d,)*n，前 n 个轴是输入，后 n 个轴是输出
    """
    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.shape != self.scenario.table_shape:
            raise ScenarioError(f"Table shape {table.shape} != scenario shape {self.scenario.table_shape}")
        if np.any(table < -BEHAVIOR_TOLERANCE):
            raise ScenarioError("Behavior entries must be non-negative")
        sums = self.conditional_sums(table)
        if np.max(np.abs(sums - 1.0)) > BEHAVIOR_TOLERANCE:
            raise ScenarioError(f"Conditional distributions must sum to 1 (worst {np.max(np.abs(sums - 1.0)):.3e})")
        self.table = table

    def conditional_sums(self, table: Optional[np.ndarray] = None) -> np.ndarray:
        table = self.table if table is None else table
        n = self.scenario.parties
        return table.sum(axis=tuple(range(n, 2 * n)))

    def conditional(self, settings: Sequence[int]) -> np.ndarray:
        """给定输入组合的输出分布（形状 (d,)*n）"""
        settings = tuple(int(x) for x in settings)
        if len(settings) != self.scenario.parties or any(not 0 <= x < self.scenario.inputs for x in settings):
            raise ScenarioError(f"Unknown settings {settings} for scenario {self.scenario.as_tuple()}")
        return self.table[settings]

    def flat_conditionals(self) -> np.ndarray:
        """形状 (m^n, d^n)，行按输入的字典序排列"""
        n, m, d = self.scenario.as_tuple()
        return self.table.reshape(m ** n, d ** n)


@dataclass(frozen=True)
class DeterministicStrategy:
    """每方一张输入→输出查找表"""
    tables: Tuple[Tuple[int, ...], ...]

    def outputs_for(self, settings: Sequence[int]) -> Tuple[int, ...]:
        return tuple(table[x] for table, x in zip(self.tables, settings))

    def validate(self, scenario: Scenario):
        if len(self.tables) != scenario.parties:
            raise ScenarioError("Strategy must define one table per party")
        for table in self.tables:
            if len(table) != scenario.inputs or any(not 0 <= a < scenario.outputs for a in table):
                raise ScenarioError(f"Strategy table {table} is not total / in range")


class LocalModel(BaseModel):
    """局域隐变量模型：权重 q_λ 与确定性策略 λ 的凸组合"""
    scenario: Scenario = Field(..., description="Bell 场景 (n, m, d)")
    weights: List[float] = Field(..., description="隐变量分布 q_λ")
    strategies: List[DeterministicStrategy] = Field(..., description="每个 λ 对应的确定性策略")

    class Config:
        arbitrary_types_allowed = True

    @root_validator(skip_on_failure=True)
    def validate_mixture(cls, values):
        weights = np.asarray(values['weights'], dtype=float)
        if len(weights) != len(values['strategies']) or len(weights) == 0:
            raise ScenarioError("Local model needs one weight per strategy")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > BEHAVIOR_TOLERANCE:
            raise ScenarioError("Local model weights must be a probability vector")
        for strategy in values['strategies']:
            strategy.validate(values['scenario'])
        values['weights'] = [float(w) for w in weights]
        return values


@dataclass(eq=False)
class BellFunctional:
    """Bell 泛函：系数张量 α（与行为表同形），以及可选的经典界 S_L"""
    scenario: Scenario
    coefficients: np.ndarray
    classical_bound: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=float)
        if coefficients.shape != self.scenario.table_shape:
            raise ScenarioError(f"Coefficient shape {coefficients.shape} != {self.scenario.table_shape}")
        if not np.all(np.isfinite(coefficients)):
            raise ScenarioError("Bell functional coefficients must be finite")
        self.coefficients = coefficients

    def active_settings(self) -> List[Tuple[int, ...]]:
        """系数不全为零的输入组合"""
        n = self.scenario.parties
        mask = np.any(self.coefficients != 0, axis=tuple(range(n, 2 * n)))
        return [tuple(int(v) for v in index) for index in zip(*np.nonzero(mask))]


@dataclass(eq=False)
class RoundRecords:
    """逐轮记录：settings 与 outcomes 的形状均为 (N, n)"""
    scenario: Scenario
    settings: np.ndarray
    outcomes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.settings = np.asarray(self.settings, dtype=np.int64).reshape(-1, self.scenario.parties)
        self.outcomes = np.asarray(self.outcomes, dtype=np.int64).reshape(-1, self.scenario.parties)
        if self.settings.shape != self.outcomes.shape:
            raise ScenarioError("Settings and outcomes must have the same shape")

    def __len__(self) -> int:
        return self.settings.shape[0]

    def subset(self, mask: np.ndarray) -> "RoundRecords":
        return RoundRecords(self.scenario, self.settings[mask], self.outcomes[mask], dict(self.metadata))

    def counts(self) -> np.ndarray:
        """各 (x⃗, a⃗) 单元的计数，形状同行为表"""
        counts = np.zeros(self.scenario.table_shape, dtype=np.int64)
        if len(self):
            index = tuple(self.settings.T) + tuple(self.outcomes.T)
            np.add.at(counts, index, 1)
        return counts
