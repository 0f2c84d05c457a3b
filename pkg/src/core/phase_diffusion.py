"""
相位扩散 QRNG：脉冲干涉模拟、二值化、熵预算与噪声标定

干涉电压 V = R·(p_S + p_L + 2𝒱√(p_S p_L)·cos Δφ)，Δφ 由相位扩散在 [0, 2π) 上均匀分布
"""
import math
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from scipy.signal import lfilter

from ..models.config import DigitizerConfig, NoiseModel, PulseModel
from ..models.errors import BudgetError, CalibrationError, SaturationError
from ..models.reports import EntropyBudget, VarianceFit
from ..utils.rng import STREAM_EXTRACTOR_SEED, STREAM_PULSES, block_generator, map_blocks, random_bits
from .extraction import ToeplitzSeed, extractable_length, toeplitz_extract

DEFAULT_KAPPA = 8.0
SATURATION_TOLERANCE = 1e-15


class QrngRun(NamedTuple):
    """一次流水线运行的结果"""
    raw_bits: np.ndarray
    budget: EntropyBudget
    extracted_bits: np.ndarray


def interference_half_range(pulse: PulseModel) -> float:
    """ΔV = R·2𝒱√(p_S p_L)，即峰峰值的一半"""
    return pulse.responsivity * 2.0 * pulse.visibility * math.sqrt(pulse.power_short * pulse.power_long)


def interference_center(pulse: PulseModel) -> float:
    return pulse.responsivity * (pulse.power_short + pulse.power_long)


def total_noise_sigma(noise: NoiseModel, pulse: Optional[PulseModel] = None) -> float:
    """
    电子噪声、阈值抖动与功率抖动的合成标准差

    功率抖动按 cos Δφ = ±1 时的最大灵敏度计入
    """
    variance = noise.sigma_noise ** 2 + noise.threshold_jitter ** 2
    if pulse is not None and pulse.power_jitter > 0:
        cross = pulse.visibility * math.sqrt(pulse.power_short * pulse.power_long)
        short = pulse.power_short + cross
        long = pulse.power_long + cross
        variance += (pulse.responsivity * pulse.power_jitter) ** 2 * (short ** 2 + long ** 2)
    return math.sqrt(variance)


def _noise_samples(rng: np.random.Generator, noise: NoiseModel, size: int) -> np.ndarray:
    if noise.sigma_noise == 0:
        return np.zeros(size)
    if noise.distribution == "student-t":
        df = noise.degrees_of_freedom
        return noise.sigma_noise * math.sqrt((df - 2.0) / df) * rng.standard_t(df, size)
    return noise.sigma_noise * rng.standard_normal(size)


def simulate_interference(pulse: PulseModel, noise: NoiseModel, n: int, seed: int,
                          threads: int = 1) -> np.ndarray:
    """
    模拟 n 个脉冲的探测电压

    脉冲按块并行生成；h > 0 时拖尾递推 V_n = s_n + e_n + h·V_{n−1} 在整个序列上顺序计算
    """
    if n < 1:
        raise BudgetError("Pulse count must be at least 1")
    swing = 2.0 * pulse.visibility

    def simulate_block(index: int, part: slice) -> np.ndarray:
        rng = block_generator(seed, STREAM_PULSES, index)
        size = part.stop - part.start
        if pulse.phase_diffusion_width is None:
            phase = rng.random(size) * 2.0 * math.pi
        else:
            phase = np.mod(rng.normal(0.0, pulse.phase_diffusion_width, size), 2.0 * math.pi)
        p_s = np.maximum(pulse.power_short * (1.0 + pulse.power_jitter * rng.standard_normal(size)), 0.0)
        p_l = np.maximum(pulse.power_long * (1.0 + pulse.power_jitter * rng.standard_normal(size)), 0.0)
        signal = pulse.responsivity * (p_s + p_l + swing * np.sqrt(p_s * p_l)
                                       * np.cos(phase + pulse.phase_offset))
        electronic = _noise_samples(rng, noise, size)
        if noise.threshold_jitter > 0:
            electronic = electronic + noise.threshold_jitter * rng.standard_normal(size)
        return signal + electronic

    voltages = np.concatenate(map_blocks(simulate_block, n, threads))
    if noise.hangover > 0:
        voltages = lfilter([1.0], [1.0, -noise.hangover], voltages)
    logger.debug(f"Simulated {n} pulses, mean={voltages.mean():.6f} V, std={voltages.std():.6f} V")
    return voltages


def compensate_hangover(voltages: np.ndarray, hangover: float) -> np.ndarray:
    """减去可预测的 h·V_{n−1}"""
    if hangover == 0:
        return np.asarray(voltages, dtype=float)
    voltages = np.asarray(voltages, dtype=float)
    previous = np.concatenate([[0.0], voltages[:-1]])
    return voltages - hangover * previous


def digitize(voltages: np.ndarray, cfg: DigitizerConfig) -> np.ndarray:
    """d = 1 当 V ≥ V0，否则 0"""
    return (np.asarray(voltages) >= cfg.threshold).astype(np.uint8)


def predictability(v_noise: float, delta_v: float) -> float:
    """P(d=1 | V_noise) = (2/π)·arcsin √(1/2 + V_noise/(2ΔV))"""
    if delta_v <= 0:
        raise BudgetError(f"ΔV must be positive, got {delta_v}")
    if abs(v_noise) > delta_v * (1.0 + SATURATION_TOLERANCE):
        raise SaturationError(f"|V_noise|={abs(v_noise)} exceeds ΔV={delta_v}")
    argument = min(max(0.5 + v_noise / (2.0 * delta_v), 0.0), 1.0)
    return 2.0 / math.pi * math.asin(math.sqrt(argument))


def tail_probability(kappa: float, distribution: str = "gaussian", degrees_of_freedom: float = 4.0) -> float:
    """噪声超过 κσ 的单侧概率"""
    if distribution == "student-t":
        df = degrees_of_freedom
        return float(stats.t.sf(kappa * math.sqrt(df / (df - 2.0)), df))
    return float(stats.norm.sf(kappa))


def entropy_budget(sigma_noise: float, delta_v: float, kappa: float = DEFAULT_KAPPA,
                   distribution: str = "gaussian", degrees_of_freedom: float = 4.0) -> EntropyBudget:
    """在噪声不超过 κσ 的前提下给出单比特最小熵"""
    if sigma_noise < 0:
        raise BudgetError("Noise level must be non-negative")
    if delta_v <= 0:
        raise BudgetError(f"ΔV={delta_v}: no interference swing, refusing to certify entropy")
    if kappa < 0:
        raise BudgetError("Kappa must be non-negative")
    if kappa * sigma_noise > delta_v:
        raise BudgetError(f"κσ={kappa * sigma_noise} exceeds ΔV={delta_v}; the noise dominates the signal")

    bias = predictability(kappa * sigma_noise, delta_v) - 0.5
    failure = 0.0 if sigma_noise == 0 else tail_probability(kappa, distribution, degrees_of_freedom)
    h_min = -math.log2(0.5 + bias)
    logger.info(f"Entropy budget: σ={sigma_noise}, ΔV={delta_v}, κ={kappa} → b={bias:.6f}, "
                f"H∞={h_min:.6f}, P_fail={failure:.3e}")
    return EntropyBudget(
        sigma_noise=sigma_noise,
        delta_v=delta_v,
        kappa=kappa,
        noise_distribution=distribution,
        bias_bound=bias,
        failure_probability=failure,
        min_entropy_per_bit=h_min,
    )


def arcsine_cdf(u: np.ndarray) -> np.ndarray:
    """cos(均匀相位) 的分布函数 F(u) = 1 − arccos(u)/π"""
    return 1.0 - np.arccos(np.clip(u, -1.0, 1.0)) / math.pi


def arcsine_ks_statistic(voltages: np.ndarray, center: float, half_range: float) -> float:
    """归一化 u = (V − 中心)/ΔV 后与反正弦分布的 KS 统计量"""
    u = (np.asarray(voltages) - center) / half_range
    return float(stats.kstest(u, arcsine_cdf).statistic)


def fit_variance_scaling(points: Sequence[Tuple[float, float]], confidence: float = 0.95,
                         weighting: str = "ols") -> VarianceFit:
    """
    拟合 var(I) = A + B⟨I⟩ + C⟨I⟩²

    weighting="relative" 时按相对噪声加权（权重 1/var² 取自一次普通最小二乘的预测值）
    """
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise CalibrationError("Calibration points must be (mean_current, variance) pairs")
    current, var = data[:, 0], data[:, 1]
    if np.unique(current).size < 3:
        raise CalibrationError("Need at least 3 distinct mean currents to fit A, B, C")
    if weighting not in ("ols", "relative"):
        raise CalibrationError(f"Unknown weighting '{weighting}'")

    design = np.column_stack([np.ones_like(current), current, current ** 2])
    if np.linalg.matrix_rank(design) < 3:
        raise CalibrationError("Design matrix is rank deficient")

    weights = np.ones_like(var)
    coefficients, *_ = np.linalg.lstsq(design, var, rcond=None)
    if weighting == "relative":
        predicted = np.maximum(np.abs(design @ coefficients), np.finfo(float).tiny)
        weights = 1.0 / predicted ** 2
        root = np.sqrt(weights)
        coefficients, *_ = np.linalg.lstsq(design * root[:, None], var * root, rcond=None)

    residuals = var - design @ coefficients
    dof = current.size - 3
    if dof > 0:
        scale = float(np.sum(weights * residuals ** 2) / dof)
        quantile = float(stats.t.ppf(0.5 + confidence / 2.0, dof))
    else:
        logger.warning("Exactly 3 calibration points: confidence intervals collapse to the estimate")
        scale, quantile = 0.0, 0.0
    covariance = scale * np.linalg.inv(design.T @ (design * weights[:, None]))
    half_widths = quantile * np.sqrt(np.maximum(np.diag(covariance), 0.0))
    intervals = [[float(c - w), float(c + w)] for c, w in zip(coefficients, half_widths)]

    a, b, c = (float(x) for x in coefficients)
    return VarianceFit(
        a=a, b=b, c=c,
        a_interval=intervals[0], b_interval=intervals[1], c_interval=intervals[2],
        confidence=confidence,
        residuals=residuals.tolist(),
        shot_noise_fraction=(b * current / var).tolist(),
        weighting=weighting,
    )


def qrng_pipeline(pulse: PulseModel, noise: NoiseModel, digitizer: DigitizerConfig,
                  kappa: float, n: int, seed: int, epsilon: float = 2.0 ** -64,
                  threads: int = 1, compensate: bool = True) -> QrngRun:
    """模拟 → 二值化 → 熵预算 → Toeplitz 提取"""
    if n < 1:
        raise BudgetError("Pulse count must be at least 1")
    delta_v = digitizer.delta_v if digitizer.delta_v is not None else interference_half_range(pulse)
    sigma = total_noise_sigma(noise, pulse)
    budget = entropy_budget(sigma, delta_v, kappa, noise.distribution, noise.degrees_of_freedom)

    if pulse.phase_diffusion_width is not None:
        logger.warning(f"Simulated phase diffusion is incomplete (width {pulse.phase_diffusion_width} rad); "
                       f"the budget still assumes a uniform phase")

    voltages = simulate_interference(pulse, noise, n, seed, threads)
    if noise.hangover > 0:
        if compensate:
            voltages = compensate_hangover(voltages, noise.hangover)
        else:
            logger.warning(f"Hangover h={noise.hangover} left uncompensated; the budget overestimates entropy")
    raw = digitize(voltages, digitizer)

    m = extractable_length(n, budget.min_entropy_per_bit, epsilon)
    if m == 0:
        extracted = np.zeros(0, dtype=np.uint8)
    else:
        seed_bits = random_bits(seed, STREAM_EXTRACTOR_SEED, n + m - 1)
        extracted = toeplitz_extract(raw, ToeplitzSeed(n, m, seed_bits))
    logger.info(f"QRNG pipeline: {n} raw bits (ones fraction {raw.mean():.4f}) → {extracted.size} extracted bits")
    return QrngRun(raw, budget, extracted)
