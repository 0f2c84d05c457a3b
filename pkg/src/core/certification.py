"""
设备无关随机性认证

CHSH 值 S 对应的输出对最小熵下界 f(S) = 1 − log2(1 + √(2 − S²/4))，S ≤ 2 时为 0
"""
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..models.behavior import BellFunctional, Behavior, RoundRecords
from ..models.errors import SaturationError, ScenarioError
from ..models.reports import CertificationReport
from .nonlocality import (
    CHSH_SCENARIO,
    TSIRELSON_BOUND,
    chsh_functional,
    estimate_functional,
    evaluate_functional,
)

CHSH_CLASSICAL_BOUND = 2.0
CHSH_ALGEBRAIC_BOUND = 4.0


def guessing_probability(behavior: Behavior, *settings: int) -> Tuple[float, float]:
    """给定输入组合下猜中输出组合的最大概率 c 与 H∞ = −log2 c"""
    scenario = behavior.scenario
    if len(settings) != scenario.parties:
        raise ScenarioError(f"Expected {scenario.parties} settings, got {len(settings)}")
    if any(s < 0 or s >= scenario.inputs for s in settings):
        raise ScenarioError(f"Unknown settings {settings}")
    c = float(behavior.conditional(tuple(settings)).max())
    return c, max(-math.log2(c), 0.0)


def min_entropy_bound_chsh(s: float) -> float:
    """f(S)，S 超过 2√2 时截断到 2√2 并告警"""
    if abs(s) > CHSH_ALGEBRAIC_BOUND + 1e-12:
        raise SaturationError(f"CHSH value {s} outside [-4, 4]")
    if s <= CHSH_CLASSICAL_BOUND:
        return 0.0
    if s > TSIRELSON_BOUND:
        logger.warning(f"CHSH value {s:.6f} exceeds 2√2, clamping to the Tsirelson point")
        s = TSIRELSON_BOUND
    return 1.0 - math.log2(1.0 + math.sqrt(max(2.0 - s * s / 4.0, 0.0)))


def _require_chsh(functional: BellFunctional):
    if functional.scenario != CHSH_SCENARIO:
        raise ScenarioError("The min-entropy bound is only available for the CHSH scenario (2,2,2)")


def _report(functional: BellFunctional, s_hat: float, s_lo: float, confidence: float,
            rounds: int, infinite_sample: bool) -> CertificationReport:
    bits = min_entropy_bound_chsh(s_lo) if s_lo > CHSH_CLASSICAL_BOUND else 0.0
    certified = math.floor(rounds * bits)
    if certified == 0:
        logger.info(f"No randomness certified: S_lo={s_lo:.6f} does not exceed the classical bound")
    else:
        logger.info(f"Certified {certified} bits over {rounds} rounds (S_lo={s_lo:.6f}, f={bits:.6f})")
    return CertificationReport(
        functional=functional.name,
        s_hat=s_hat,
        s_lo=s_lo,
        confidence=confidence,
        bits_per_round=bits,
        rounds=rounds,
        certified_bits=certified,
        local_bound=functional.classical_bound,
        infinite_sample=infinite_sample,
    )


def certify(records: RoundRecords, functional: Optional[BellFunctional] = None,
            confidence: float = 0.99,
            settings_distribution: Optional[np.ndarray] = None) -> CertificationReport:
    """有限统计认证：S_lo ≤ 2 时 R = 0，不视为错误"""
    functional = functional or chsh_functional()
    _require_chsh(functional)
    s_hat, s_lo = estimate_functional(records, functional, confidence, settings_distribution)
    return _report(functional, s_hat, s_lo, confidence, len(records), infinite_sample=False)


def certify_behavior(behavior: Behavior, rounds: int,
                     functional: Optional[BellFunctional] = None) -> CertificationReport:
    """无限样本模式：S_lo = S_hat = 精确泛函值"""
    functional = functional or chsh_functional()
    _require_chsh(functional)
    value = evaluate_functional(functional, behavior)
    return _report(functional, value, value, 1.0, rounds, infinite_sample=True)


def min_guessing_entropy(behavior: Behavior, settings: Sequence[Tuple[int, ...]]) -> float:
    """若干输入组合中最小的 H∞"""
    return min(guessing_probability(behavior, *s)[1] for s in settings)
