"""
设备无关层：Bell 场景中的行为、无信号检验、局域顶点枚举、Bell 泛函与有限统计估计
"""
import itertools
import math
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..models.behavior import (BEHAVIOR_TOLERANCE, Behavior, BellFunctional,
                               DeterministicStrategy, LocalModel, RoundRecords, Scenario)
from ..models.errors import (CoverageError, DimensionMismatchError, ScenarioError,
                             ScenarioTooLargeError)
from ..models.quantum import DensityState, PovmElementSet
from ..models.reports import NoSignalingReport
from ..utils.rng import STREAM_ROUNDS, block_generator, map_blocks
from .measurement import (PAULI_X, PAULI_Z, bell_state, maximally_mixed_state, mix_states,
                          projective_measurement, tensor_all)

# 顶点枚举的上限 (d^m)^n
MAX_VERTICES = 10 ** 6

CHSH_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0]])
CHSH_SCENARIO = Scenario(2, 2, 2)
TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)


def chsh_functional() -> BellFunctional:
    """
    CHSH 泛函 ⟨a₀b₀⟩+⟨a₀b₁⟩+⟨a₁b₀⟩−⟨a₁b₁⟩

    输出 0/1 通过 a → 1−2a 映射到 ±1
    """
    signs = np.array([1.0, -1.0])
    coefficients = np.einsum("xy,a,b->xyab", CHSH_SIGNS, signs, signs)
    return BellFunctional(CHSH_SCENARIO, coefficients, classical_bound=2.0, name="CHSH")


def pr_box() -> Behavior:
    """PR 盒：a⊕b = x·y 时 p = 1/2"""
    table = np.zeros(CHSH_SCENARIO.table_shape)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            table[x, y, a, b] = 0.5
    return Behavior(CHSH_SCENARIO, table)


def signaling_box() -> Behavior:
    """Bob 直接输出 Alice 的输入 b = x，Alice 恒输出 0"""
    table = np.zeros(CHSH_SCENARIO.table_shape)
    for x, y in itertools.product(range(2), repeat=2):
        table[x, y, 0, x] = 1.0
    return Behavior(CHSH_SCENARIO, table)


def uniform_behavior(scenario: Scenario) -> Behavior:
    n, m, d = scenario.as_tuple()
    return Behavior(scenario, np.full(scenario.table_shape, 1.0 / d ** n))


def uniform_settings(scenario: Scenario) -> np.ndarray:
    return np.full(scenario.settings_shape, 1.0 / scenario.inputs ** scenario.parties)


def _one_hot(table: Sequence[int], outputs: int) -> np.ndarray:
    matrix = np.zeros((len(table), outputs))
    matrix[np.arange(len(table)), list(table)] = 1.0
    return matrix


def _outer_parties(factors: List[np.ndarray]) -> np.ndarray:
    """把每方 (m,d) 的因子组合成 (m,)*n + (d,)*n 的乘积表"""
    n = len(factors)
    operands = []
    for k, factor in enumerate(factors):
        operands.extend([factor, [k, n + k]])
    return np.einsum(*operands, list(range(2 * n)))


def deterministic_behavior(scenario: Scenario, strategy: DeterministicStrategy) -> Behavior:
    strategy.validate(scenario)
    factors = [_one_hot(table, scenario.outputs) for table in strategy.tables]
    return Behavior(scenario, _outer_parties(factors))


def _party_strategies(scenario: Scenario) -> List[Tuple[int, ...]]:
    return list(itertools.product(range(scenario.outputs), repeat=scenario.inputs))


def _check_enumerable(scenario: Scenario):
    if scenario.vertex_count > MAX_VERTICES:
        raise ScenarioTooLargeError(
            f"Scenario {scenario.as_tuple()} has {scenario.vertex_count} local vertices (> {MAX_VERTICES})")


def enumerate_local_strategies(scenario: Scenario) -> Iterator[DeterministicStrategy]:
    """按 (方, 输入) 查找表的字典序枚举确定性策略"""
    _check_enumerable(scenario)
    singles = _party_strategies(scenario)
    for combo in itertools.product(singles, repeat=scenario.parties):
        yield DeterministicStrategy(tuple(combo))


def enumerate_local_vertices(scenario: Scenario) -> Iterator[Behavior]:
    """局域多胞形的全部 (d^m)^n 个顶点"""
    for strategy in enumerate_local_strategies(scenario):
        yield deterministic_behavior(scenario, strategy)


def local_model_behavior(model: LocalModel) -> Behavior:
    table = np.zeros(model.scenario.table_shape)
    for weight, strategy in zip(model.weights, model.strategies):
        table += weight * deterministic_behavior(model.scenario, strategy).table
    return Behavior(model.scenario, table)


def mixture(behaviors: Sequence[Behavior], weights: Sequence[float]) -> Behavior:
    weights = np.asarray(weights, dtype=float)
    if len(behaviors) != len(weights) or len(behaviors) == 0:
        raise ScenarioError("Mixture needs one weight per behavior")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > BEHAVIOR_TOLERANCE:
        raise ScenarioError("Mixture weights must be a probability vector")
    scenario = behaviors[0].scenario
    if any(b.scenario != scenario for b in behaviors):
        raise ScenarioError("All behaviors in a mixture must share one scenario")
    return Behavior(scenario, sum(w * b.table for w, b in zip(weights, behaviors)))


def quantum_behavior(state: DensityState, measurements: Sequence[Sequence[PovmElementSet]]) -> Behavior:
    """
    迹公式 p(a⃗|x⃗) = Tr(ρ ⊗ᵢ M^{xᵢ}_{aᵢ})

    measurements[k][x] 是第 k 方在输入 x 下的 POVM
    """
    parties = len(measurements)
    if parties == 0:
        raise ScenarioError("At least one party is required")
    inputs = len(measurements[0])
    outputs = len(measurements[0][0])
    for party in measurements:
        if len(party) != inputs or any(len(povm) != outputs for povm in party):
            raise ScenarioError("v1 requires uniform (m, d) across parties and inputs")
        if any(povm.dim != party[0].dim for povm in party):
            raise DimensionMismatchError("All POVMs of one party must share its Hilbert dimension")

    party_dims = [party[0].dim for party in measurements]
    if int(np.prod(party_dims)) != state.dim:
        raise DimensionMismatchError(f"State dim {state.dim} != product of party dims {party_dims}")

    scenario = Scenario(parties, inputs, outputs)
    table = np.zeros(scenario.table_shape)
    for settings in itertools.product(range(inputs), repeat=parties):
        for results in itertools.product(range(outputs), repeat=parties):
            operator = tensor_all([measurements[k][settings[k]].elements[results[k]] for k in range(parties)])
            table[settings + results] = np.real(np.trace(state.matrix @ operator))

    table = np.clip(table, 0.0, 1.0)
    logger.debug(f"Built quantum behavior for scenario {scenario.as_tuple()}")
    return Behavior(scenario, table)


def chsh_measurements() -> List[List[PovmElementSet]]:
    """A₀=σz, A₁=σx, B₀=(σz+σx)/√2, B₁=(σz−σx)/√2"""
    alice = [projective_measurement(PAULI_Z), projective_measurement(PAULI_X)]
    bob = [projective_measurement((PAULI_Z + PAULI_X) / math.sqrt(2.0)),
           projective_measurement((PAULI_Z - PAULI_X) / math.sqrt(2.0))]
    return [alice, bob]


def honest_chsh_behavior(state_name: str = "phi_plus", visibility: float = 1.0) -> Behavior:
    """Werner 态 v·|Φ⟩⟨Φ| + (1−v)·I/4 在 chsh_measurements 下的行为；phi_plus 时 S = 2√2·v"""
    state = bell_state(state_name)
    if visibility < 1.0:
        state = mix_states([state, maximally_mixed_state(4)], [visibility, 1.0 - visibility])
    return quantum_behavior(state, chsh_measurements())


def correlators(behavior: Behavior) -> np.ndarray:
    """两方两输出场景的关联函数 E_xy = Σ (1−2a)(1−2b) p(a,b|x,y)"""
    n, _, d = behavior.scenario.as_tuple()
    if n != 2 or d != 2:
        raise ScenarioError("Correlators are defined for two parties with binary outputs")
    signs = np.array([1.0, -1.0])
    return np.einsum("xyab,a,b->xy", behavior.table, signs, signs)


def check_no_signaling(behavior: Behavior, tol: float = 1e-8) -> NoSignalingReport:
    """
    无信号条件：对每个 k，Σ_{a_k} p(a⃗|x⃗) 与 x_k 无关

    报告最坏偏差及对应的边缘分布
    """
    n = behavior.scenario.parties
    worst = 0.0
    offending: Optional[str] = None
    offending_party: Optional[int] = None
    for k in range(n):
        marginal = behavior.table.sum(axis=n + k)
        spread = marginal.max(axis=k) - marginal.min(axis=k)
        violation = float(spread.max()) if spread.size else 0.0
        if violation > worst:
            worst = violation
            offending_party = k
            cell = np.unravel_index(int(np.argmax(spread)), spread.shape)
            offending = (f"marginal of parties other than {k} varies with x_{k} "
                         f"at cell {tuple(int(v) for v in cell)}")

    passed = worst <= tol
    if not passed:
        logger.debug(f"No-signaling violated: {worst:.3e} ({offending})")
    return NoSignalingReport(passed=passed, worst_violation=worst, tolerance=tol,
                             offending_party=offending_party, offending_marginal=offending)


def evaluate_functional(functional: BellFunctional, behavior: Behavior) -> float:
    """S = Σ α^{x⃗}_{a⃗} p(a⃗|x⃗)"""
    if functional.scenario != behavior.scenario:
        raise ScenarioError(f"Functional scenario {functional.scenario.as_tuple()} != "
                            f"behavior scenario {behavior.scenario.as_tuple()}")
    return float(np.sum(functional.coefficients * behavior.table))


def local_bound(functional: BellFunctional) -> float:
    """
    经典界 S_L：局域顶点上的最大值

    前 n−1 方逐一枚举策略，最后一方对每个输入独立取最优输出，与穷举全部顶点等价
    """
    scenario = functional.scenario
    _check_enumerable(scenario)
    n = scenario.parties
    alpha = functional.coefficients
    if n == 1:
        return float(alpha.max(axis=1).sum())

    singles = [_one_hot(table, scenario.outputs) for table in _party_strategies(scenario)]
    best = -math.inf
    for combo in itertools.product(singles, repeat=n - 1):
        operands = [alpha, list(range(2 * n))]
        for k, factor in enumerate(combo):
            operands.extend([factor, [k, n + k]])
        contracted = np.einsum(*operands, [n - 1, 2 * n - 1])
        best = max(best, float(contracted.max(axis=1).sum()))
    logger.debug(f"Local bound of {functional.name}: {best}")
    return best


def _validate_settings_distribution(scenario: Scenario, distribution: Optional[np.ndarray]) -> np.ndarray:
    if distribution is None:
        return uniform_settings(scenario)
    distribution = np.asarray(distribution, dtype=float)
    if distribution.shape != scenario.settings_shape:
        raise ScenarioError(f"Settings distribution shape {distribution.shape} != {scenario.settings_shape}")
    if np.any(distribution < 0) or abs(distribution.sum() - 1.0) > BEHAVIOR_TOLERANCE:
        raise ScenarioError("Settings distribution must be normalized and non-negative")
    return distribution


def _cumulative(probabilities: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probabilities, axis=-1)
    return cdf / cdf[..., -1:]


def simulate_rounds(behavior: Behavior, settings_distribution: Optional[np.ndarray], rounds: int,
                    seed: int, threads: int = 1) -> RoundRecords:
    """
    有限统计 Bell 测试：i.i.d. 抽样 π(x⃗)·p(a⃗|x⃗)

    第 i 轮只依赖 (seed, i)，结果与线程数无关
    """
    if rounds < 1:
        raise ValueError("Number of rounds must be at least 1")
    scenario = behavior.scenario
    n, m, d = scenario.as_tuple()
    pi = _validate_settings_distribution(scenario, settings_distribution)
    settings_cdf = _cumulative(pi.reshape(-1))
    outcome_cdf = _cumulative(behavior.flat_conditionals())

    def sample_block(index: int, part: slice) -> Tuple[np.ndarray, np.ndarray]:
        size = part.stop - part.start
        uniforms = block_generator(seed, STREAM_ROUNDS, index).random((size, 2))
        setting_index = np.minimum(np.searchsorted(settings_cdf, uniforms[:, 0], side="right"), m ** n - 1)
        rows = outcome_cdf[setting_index]
        outcome_index = np.minimum((rows <= uniforms[:, 1:2]).sum(axis=1), d ** n - 1)
        return setting_index, outcome_index

    blocks = map_blocks(sample_block, rounds, threads)
    setting_index = np.concatenate([b[0] for b in blocks])
    outcome_index = np.concatenate([b[1] for b in blocks])
    settings = np.stack(np.unravel_index(setting_index, scenario.settings_shape), axis=1)
    outcomes = np.stack(np.unravel_index(outcome_index, (d,) * n), axis=1)
    logger.debug(f"Simulated {rounds} rounds in scenario {scenario.as_tuple()} (seed={seed})")
    return RoundRecords(scenario, settings, outcomes, {"seed": seed})


def hoeffding_deviation(width: float, rounds: int, confidence: float) -> float:
    """单侧 Hoeffding 偏差 width·√(ln(1/(1−confidence)) / (2N))"""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"Confidence must lie in (0, 1), got {confidence}")
    if rounds < 1:
        raise ValueError("Hoeffding deviation needs at least one round")
    return width * math.sqrt(math.log(1.0 / (1.0 - confidence)) / (2.0 * rounds))


def _empirical_settings(records: RoundRecords) -> np.ndarray:
    counts = records.counts().sum(axis=tuple(range(records.scenario.parties, 2 * records.scenario.parties)))
    return counts / counts.sum()


def estimator_range(functional: BellFunctional, settings_distribution: np.ndarray) -> Tuple[float, float]:
    """
    单轮估计量 α^{x⃗}_{a⃗}/π(x⃗) 的取值范围

    CHSH 在均匀输入下为 [−4, 4]
    """
    n = functional.scenario.parties
    values = [0.0] if np.any((settings_distribution > 0) & ~np.any(
        functional.coefficients != 0, axis=tuple(range(n, 2 * n)))) else []
    for settings in functional.active_settings():
        weight = settings_distribution[settings]
        if weight <= 0:
            continue
        cell = functional.coefficients[settings] / weight
        values.extend([float(cell.min()), float(cell.max())])
    return min(values), max(values)


def plug_in_estimate(records: RoundRecords, functional: BellFunctional) -> float:
    """S_hat = Σ α p̂(a⃗|x⃗)，p̂ 为各输入下的经验条件频率"""
    if functional.scenario != records.scenario:
        raise ScenarioError("Functional and records scenarios differ")
    if len(records) == 0:
        raise CoverageError("Records are empty")
    n = records.scenario.parties
    counts = records.counts().astype(float)
    per_setting = counts.sum(axis=tuple(range(n, 2 * n)))
    missing = [s for s in functional.active_settings() if per_setting[s] == 0]
    if missing:
        raise CoverageError(f"Settings {missing} with non-zero coefficients were never observed")
    with np.errstate(invalid="ignore", divide="ignore"):
        frequencies = counts / per_setting.reshape(per_setting.shape + (1,) * n)
    frequencies = np.nan_to_num(frequencies)
    return float(np.sum(functional.coefficients * frequencies))


def estimate_functional(records: Union[RoundRecords, Behavior], functional: BellFunctional,
                        confidence: float,
                        settings_distribution: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """
    有限统计估计：返回 (S_hat, S_lo)

    S_lo = S_hat − Hoeffding 偏差；传入 Behavior 时视为无限样本，S_lo = S_hat
    """
    if isinstance(records, Behavior):
        value = evaluate_functional(functional, records)
        return value, value

    s_hat = plug_in_estimate(records, functional)
    pi = (_empirical_settings(records) if settings_distribution is None
          else _validate_settings_distribution(records.scenario, settings_distribution))
    low, high = estimator_range(functional, pi)
    deviation = hoeffding_deviation(high - low, len(records), confidence)
    logger.debug(f"{functional.name}: S_hat={s_hat:.6f}, deviation={deviation:.6f} "
                 f"over {len(records)} rounds at confidence {confidence}")
    return s_hat, s_hat - deviation
