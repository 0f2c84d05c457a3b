"""
弱随机源：最小熵、统计距离、SV 源采样与精确分布

比特串下标约定：先生成的比特为最高位
"""
from itertools import product
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
from loguru import logger

from ..models.errors import SourceModelError
from ..models.source import (
    BlockSourceModel,
    ConstantBias,
    Distribution,
    MAX_EXACT_BITS,
    Periodic,
    PrefixParity,
    PrefixTable,
    SvSourceModel,
    SvStrategy,
    SV_BAND_TOLERANCE,
)
from ..utils.rng import STREAM_SV, block_generator, uniform_stream

# 精确 SV 分布（前缀树展开）的最大长度
MAX_SV_EXACT_BITS = 20

STRATEGY_PRESETS = {
    ConstantBias.name: ConstantBias,
    PrefixParity.name: PrefixParity,
    Periodic.name: Periodic,
}


def uniform_distribution(n_bits: int) -> Distribution:
    return Distribution(n_bits, np.full(2 ** n_bits, 1.0 / 2 ** n_bits))


def point_mass(n_bits: int, index: int = 0) -> Distribution:
    probabilities = np.zeros(2 ** n_bits)
    probabilities[index] = 1.0
    return Distribution(n_bits, probabilities)


def flat_source(n_bits: int, support: Sequence[int]) -> Distribution:
    """在 support 上均匀的平坦源，H∞ = log2 |support|"""
    support = sorted(set(int(s) for s in support))
    if not support:
        raise SourceModelError("Flat source needs a non-empty support")
    if support[0] < 0 or support[-1] >= 2 ** n_bits:
        raise SourceModelError("Support index outside the bitstring domain")
    probabilities = np.zeros(2 ** n_bits)
    probabilities[support] = 1.0 / len(support)
    return Distribution(n_bits, probabilities)


def min_entropy(distribution: Distribution) -> float:
    """H∞ = −log2 max p"""
    if distribution.size == 0:
        raise SourceModelError("Min-entropy of an empty distribution is undefined")
    value = distribution.min_entropy()
    # −log2(1.0) 给出 −0.0
    return max(value, 0.0)


def statistical_distance(p: Distribution, q: Distribution) -> float:
    """½ Σ |p − q|"""
    if p.size != q.size:
        raise SourceModelError(f"Domain mismatch: {p.size} vs {q.size}")
    return float(0.5 * np.abs(p.probabilities - q.probabilities).sum())


def strategy_from_preset(name: str, params: Dict) -> SvStrategy:
    """配置中的命名策略 → SvStrategy"""
    if name not in STRATEGY_PRESETS:
        raise SourceModelError(f"Unknown SV strategy preset '{name}', "
                               f"available: {sorted(STRATEGY_PRESETS)}")
    return STRATEGY_PRESETS[name](**params)


def sample_sv(model: SvSourceModel, n: int, seed: int, stream: int = STREAM_SV,
              threads: int = 1) -> np.ndarray:
    """
    从 SV 源采样 n 个比特

    第 i 个比特只使用均匀数 u_i（由 (seed, stream, i) 决定），比特 = [u_i < p(1|前缀)]
    """
    if n < 1:
        raise SourceModelError("Need at least one bit")
    uniforms = uniform_stream(seed, stream, n, threads)

    if isinstance(model.strategy, ConstantBias):
        p = model.checked_p_one(None)
        return (uniforms < p).astype(np.uint8)

    bits = np.empty(n, dtype=np.uint8)
    state = model.strategy.reset()
    for i, u in enumerate(uniforms):
        bit = int(u < model.checked_p_one(state))
        bits[i] = bit
        state = model.strategy.advance(state, bit)
    logger.debug(f"Sampled {n} SV bits with strategy {model.strategy.name}, ε={model.epsilon}")
    return bits


def exact_sv_distribution(model: SvSourceModel, n: int) -> Distribution:
    """沿前缀树逐层展开，得到 n 比特串的精确分布"""
    if n < 1 or n > MAX_SV_EXACT_BITS:
        raise SourceModelError(f"Exact SV distribution supports 1..{MAX_SV_EXACT_BITS} bits, got {n}")
    probabilities = np.ones(1)
    states = [model.strategy.reset()]
    for _ in range(n):
        p_one = np.array([model.checked_p_one(state) for state in states])
        probabilities = np.stack([probabilities * (1.0 - p_one), probabilities * p_one], axis=1).reshape(-1)
        states = [model.strategy.advance(state, bit) for state in states for bit in (0, 1)]
    return Distribution(n, probabilities)


def verify_sv_bound(distribution: Distribution, epsilon: float) -> bool:
    """每个正概率前缀下的条件概率 p(x_i=1|前缀) 都落在 [1/2−ε, 1/2+ε] 内（容差 1e-12）"""
    n = distribution.n_bits
    probabilities = distribution.probabilities
    for i in range(n):
        grouped = probabilities.reshape(2 ** i, 2, 2 ** (n - i - 1))
        prefix_mass = grouped.sum(axis=(1, 2))
        one_mass = grouped[:, 1, :].sum(axis=1)
        reachable = prefix_mass > 0
        conditional = one_mass[reachable] / prefix_mass[reachable]
        if np.any(np.abs(conditional - 0.5) > epsilon + SV_BAND_TOLERANCE):
            return False
    return True


def extreme_point_strategies(n: int, epsilon: float) -> Iterator[PrefixTable]:
    """
    枚举所有极端点 SV 策略：每个长度 < n 的前缀上 p 取 1/2 ± ε

    共 2^(2^n − 1) 个
    """
    prefixes = [prefix for length in range(n) for prefix in product((0, 1), repeat=length)]
    for signs in product((-1.0, 1.0), repeat=len(prefixes)):
        yield PrefixTable({prefix: 0.5 + sign * epsilon for prefix, sign in zip(prefixes, signs)})


def sample_distribution(distribution: Distribution, count: int, seed: int,
                        stream: int = STREAM_SV) -> np.ndarray:
    """按分布抽取 count 个下标（逆 CDF）"""
    cdf = np.cumsum(distribution.probabilities)
    cdf[-1] = 1.0
    uniforms = uniform_stream(seed, stream, count)
    return np.searchsorted(cdf, uniforms, side="right").astype(np.int64)


def index_to_bits(index: int, n_bits: int) -> np.ndarray:
    """下标 → 比特数组，最高位在前"""
    return np.array([(index >> (n_bits - 1 - j)) & 1 for j in range(n_bits)], dtype=np.uint8)


def sample_block_source(model: BlockSourceModel, blocks: int, seed: int,
                        stream: int = STREAM_SV) -> np.ndarray:
    """
    依次采样 blocks 个块，每块的条件分布由之前的块决定

    若某个条件分布的最小熵低于 k，抛出 SourceModelError
    """
    if blocks < 1:
        raise SourceModelError("Need at least one block")
    history: List[int] = []
    for block in range(blocks):
        distribution = model.generator(list(history))
        if distribution.n_bits != model.block_length:
            raise SourceModelError("Generated block distribution has the wrong length")
        h = min_entropy(distribution)
        if h < model.min_entropy - 1e-12:
            raise SourceModelError(f"Block {block} has conditional min-entropy {h:.6f} < {model.min_entropy}")
        cdf = np.cumsum(distribution.probabilities)
        cdf[-1] = 1.0
        u = block_generator(seed, stream, block).random()
        history.append(int(np.searchsorted(cdf, u, side="right")))
    return np.concatenate([index_to_bits(index, model.block_length) for index in history])


def sv_epsilon_from_block_min_entropy(k: float) -> float:
    """
    单比特块源（n=1）即 SV 源：max p = 2^(−k)，ε = 2^(−k) − 1/2
    """
    if not 0 <= k <= 1:
        raise SourceModelError("Single-bit block min-entropy must lie in [0, 1]")
    return float(2.0 ** (-k) - 0.5)


def default_strategy_params(name: str, epsilon: float) -> Dict:
    """预设策略取最大允许偏差时的参数"""
    defaults = {
        ConstantBias.name: {"p": 0.5 + epsilon},
        PrefixParity.name: {"epsilon": epsilon},
        Periodic.name: {"pattern": [0.5 + epsilon, 0.5 - epsilon]},
    }
    return dict(defaults.get(name, {}))


def build_sv_model(epsilon: float, strategy: str, params: Optional[Dict] = None) -> SvSourceModel:
    """由配置构造 SV 源；params 为空时使用 default_strategy_params"""
    params = params or default_strategy_params(strategy, epsilon)
    return SvSourceModel(epsilon=epsilon, strategy=strategy_from_preset(strategy, params))
