"""
随机性后处理：双源内积提取器与 Toeplitz 哈希

Toeplitz 矩阵约定 T[j, i] = seed[j − i + n − 1]，j < m, i < n，因此
输出 = conv(seed, x)[n−1 : n−1+m] mod 2
"""
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from ..models.errors import ExtractorParameterError
from ..models.source import Distribution, SvSourceModel
from ..utils.bits import BitString
from ..utils.rng import map_blocks
from .sources import exact_sv_distribution, extreme_point_strategies

# m·n 不超过该值时使用稠密矩阵乘法，否则使用 FFT 卷积
DENSE_KERNEL_LIMIT = 1 << 24
# ε = ½·2^((m−k)/2) 超过 2^30 的参数没有意义
MAX_OUTPUT_EXCESS = 60
# 穷举极端点策略的最大长度（每个源 2^(2^n − 1) 个策略）
MAX_WORST_BIAS_BITS = 3

BitsLike = Union[BitString, np.ndarray, list]


def _as_bits(value: BitsLike) -> np.ndarray:
    if isinstance(value, BitString):
        return value.to_bits()
    bits = np.asarray(value, dtype=np.uint8).reshape(-1)
    if np.any(bits > 1):
        raise ExtractorParameterError("Bits must be 0 or 1")
    return bits


@dataclass(frozen=True, eq=False)
class ToeplitzSeed:
    """n 比特输入、m 比特输出的 Toeplitz 种子（n + m − 1 比特）"""
    input_length: int
    output_length: int
    bits: np.ndarray

    def __post_init__(self):
        bits = _as_bits(self.bits)
        if self.output_length < 1 or self.input_length < 1:
            raise ExtractorParameterError("Toeplitz dimensions must be positive")
        if self.output_length > self.input_length:
            raise ExtractorParameterError(
                f"Output length {self.output_length} exceeds input length {self.input_length}")
        expected = toeplitz_seed_length(self.input_length, self.output_length)
        if bits.size != expected:
            raise ExtractorParameterError(f"Toeplitz seed needs {expected} bits, got {bits.size}")
        object.__setattr__(self, "bits", bits)

    def matrix(self) -> np.ndarray:
        """m × n 的 0/1 矩阵"""
        n = self.input_length
        return sliding_window_view(self.bits, n)[:self.output_length, ::-1].astype(np.uint8)


def toeplitz_seed_length(input_length: int, output_length: int) -> int:
    return input_length + output_length - 1


def inner_product_extract(x: BitsLike, y: BitsLike) -> int:
    """⊕_i x_i·y_i"""
    x, y = _as_bits(x), _as_bits(y)
    if x.size == 0 or x.size != y.size:
        raise ExtractorParameterError(f"Inner product needs equal non-empty lengths, got {x.size} and {y.size}")
    return int(np.bitwise_and(x, y).sum() & 1)


def inner_product_extract_blocks(x: BitsLike, y: BitsLike, block_length: int) -> np.ndarray:
    """
    按 block_length 分块做内积，每块输出一个比特

    x 与 y 等长；末尾不足一块的部分丢弃
    """
    x, y = _as_bits(x), _as_bits(y)
    if x.size != y.size:
        raise ExtractorParameterError(f"Length mismatch: {x.size} vs {y.size}")
    if block_length < 1:
        raise ExtractorParameterError("Block length must be positive")
    blocks = x.size // block_length
    usable = blocks * block_length
    products = np.bitwise_and(x[:usable], y[:usable]).reshape(blocks, block_length)
    return (products.sum(axis=1) & 1).astype(np.uint8)


def toeplitz_extract(x: BitsLike, seed: ToeplitzSeed) -> np.ndarray:
    """T·x mod 2；小规模用稠密乘法，大规模用 FFT 卷积"""
    x = _as_bits(x)
    n, m = seed.input_length, seed.output_length
    if x.size != n:
        raise ExtractorParameterError(f"Input has {x.size} bits, seed expects {n}")

    if m * n <= DENSE_KERNEL_LIMIT:
        result = seed.matrix().astype(np.int64) @ x.astype(np.int64)
    else:
        convolution = fftconvolve(seed.bits.astype(np.float64), x.astype(np.float64))
        result = np.rint(convolution[n - 1:n - 1 + m]).astype(np.int64)
    return (result & 1).astype(np.uint8)


def toeplitz_extract_naive(x: BitsLike, seed: ToeplitzSeed) -> np.ndarray:
    """逐位参考实现，用于校验快速内核"""
    x = [int(b) for b in _as_bits(x)]
    bits = [int(b) for b in seed.bits]
    n, m = seed.input_length, seed.output_length
    if len(x) != n:
        raise ExtractorParameterError(f"Input has {len(x)} bits, seed expects {n}")
    output = []
    for j in range(m):
        acc = 0
        for i in range(n):
            acc ^= bits[j - i + n - 1] & x[i]
        output.append(acc)
    return np.array(output, dtype=np.uint8)


def toeplitz_extract_blocks(bits: BitsLike, block_length: int, output_length: int,
                            seed_bits: BitsLike, reuse_seed: bool = False, threads: int = 1) -> np.ndarray:
    """
    分块 Toeplitz 提取

    默认每块使用新的种子段（需要 blocks·(n+m−1) 比特）；reuse_seed 时所有块共用
    一个种子（扩展器模式）。末尾不足一块的比特丢弃。
    """
    bits, seed_bits = _as_bits(bits), _as_bits(seed_bits)
    blocks = bits.size // block_length
    if blocks == 0 or output_length < 1:
        return np.zeros(0, dtype=np.uint8)
    if bits.size % block_length:
        logger.debug(f"Dropping {bits.size % block_length} trailing bits outside complete blocks")

    per_block = toeplitz_seed_length(block_length, output_length)
    needed = per_block if reuse_seed else blocks * per_block
    if seed_bits.size < needed:
        raise ExtractorParameterError(f"Blockwise extraction needs {needed} seed bits, got {seed_bits.size}")
    if reuse_seed:
        logger.warning("Reusing one Toeplitz seed for every block (expander mode); "
                       "block outputs are not independent")
        shared = ToeplitzSeed(block_length, output_length, seed_bits[:per_block])

    def extract_block(index: int, part: slice) -> np.ndarray:
        if reuse_seed:
            seed = shared
        else:
            seed = ToeplitzSeed(block_length, output_length,
                                seed_bits[index * per_block:(index + 1) * per_block])
        return toeplitz_extract(bits[part], seed)

    parts = map_blocks(extract_block, blocks * block_length, threads, block_size=block_length)
    return np.concatenate(parts)


def required_seed_and_epsilon(k: float, m: int) -> float:
    """剩余哈希引理形式 ε = ½·√(2^(m−k))"""
    if m < 1:
        raise ExtractorParameterError("Output length must be at least 1")
    if k <= 0:
        raise ExtractorParameterError("Min-entropy must be positive")
    if m > k + MAX_OUTPUT_EXCESS:
        raise ExtractorParameterError(f"Output length {m} exceeds k + {MAX_OUTPUT_EXCESS}; ε would exceed 1")
    return 0.5 * math.sqrt(2.0 ** (m - k))


def extractable_length(n_bits: int, h_min_per_bit: float, epsilon: float) -> int:
    """
    floor(n·H∞) − 2·⌈log2(1/ε)⌉，下限为 0

    此长度下 required_seed_and_epsilon 给出的距离不超过 ε/2
    """
    if not 0 < epsilon < 1:
        raise ExtractorParameterError(f"Security parameter must lie in (0, 1), got {epsilon}")
    if n_bits < 0 or h_min_per_bit < 0:
        raise ExtractorParameterError("Length and entropy rate must be non-negative")
    margin = 2 * math.ceil(math.log2(1.0 / epsilon))
    length = math.floor(n_bits * h_min_per_bit + 1e-9) - margin
    if length <= 0:
        logger.warning(f"No extractable output: n·H∞={n_bits * h_min_per_bit:.3f} does not cover margin {margin}")
        return 0
    return length


def _inner_product_signs(n_bits: int) -> np.ndarray:
    """(−1)^<x,y>，x、y 为 n 比特下标"""
    indices = np.arange(2 ** n_bits)
    overlap = np.bitwise_and(indices[:, None], indices[None, :])
    parity = np.zeros_like(overlap)
    for shift in range(n_bits):
        parity ^= (overlap >> shift) & 1
    return 1.0 - 2.0 * parity


def inner_product_bias(p: Distribution, q: Distribution) -> float:
    """独立源 X~p、Y~q 时内积输出的偏差 |P(1) − 1/2|"""
    if p.n_bits != q.n_bits:
        raise ExtractorParameterError("Sources must have equal length")
    signs = _inner_product_signs(p.n_bits)
    return float(0.5 * abs(p.probabilities @ signs @ q.probabilities))


def inner_product_worst_bias(n_bits: int, epsilon: float, max_bits: Optional[int] = None) -> float:
    """
    两个独立 ε-SV 源经内积提取后的最坏偏差

    偏差对每个条件概率是多线性的，最大值在极端点策略上取得，因此穷举
    所有极端点策略对即可
    """
    limit = MAX_WORST_BIAS_BITS if max_bits is None else max_bits
    if n_bits < 1 or n_bits > limit:
        raise ExtractorParameterError(f"Exhaustive search supports 1..{limit} bits, got {n_bits}")
    tables = np.array([
        exact_sv_distribution(SvSourceModel(epsilon=epsilon, strategy=strategy), n_bits).probabilities
        for strategy in extreme_point_strategies(n_bits, epsilon)
    ])
    signs = _inner_product_signs(n_bits)
    correlations = tables @ signs @ tables.T
    worst = float(0.5 * np.abs(correlations).max())
    logger.debug(f"Worst inner-product bias n={n_bits}, ε={epsilon}: {worst:.6f} over {len(tables)}² pairs")
    return worst
