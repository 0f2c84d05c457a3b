"""
计数器式随机数流

第 j 个数据块的随机数只由 (seed, stream, j) 决定，因此按块并行时结果与线程数无关
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

# 每块的样本数（轮次、脉冲、比特）；固定常数，改变会改变所有输出
BLOCK_SIZE = 1 << 16

# 各用途的独立子流编号
STREAM_ROUNDS = 1
STREAM_SV = 2
STREAM_PULSES = 3
STREAM_DEVICES = 4
STREAM_EXTRACTOR_SEED = 5
STREAM_PROTOCOL_SEED = 6
STREAM_PUBLIC_SETTINGS = 7
STREAM_LOCAL_MODEL = 8

_U64_MASK = (1 << 64) - 1

T = TypeVar("T")


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    """(seed, stream, block) → 独立的 Philox 生成器"""
    key = np.array([seed & _U64_MASK, stream & _U64_MASK], dtype=np.uint64)
    counter = np.array([0, 0, block & _U64_MASK, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def block_slices(total: int, block_size: int = BLOCK_SIZE) -> List[slice]:
    return [slice(start, min(start + block_size, total)) for start in range(0, total, block_size)]


def map_blocks(func: Callable[[int, slice], T], total: int, threads: int = 1,
               block_size: int = BLOCK_SIZE) -> List[T]:
    """
    按块调用 func(block_index, slice)，结果按块序返回

    线程数只影响调度，不影响结果
    """
    slices = block_slices(total, block_size)
    if threads <= 1 or len(slices) <= 1:
        return [func(index, part) for index, part in enumerate(slices)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda item: func(*item), enumerate(slices)))


def uniform_stream(seed: int, stream: int, total: int, threads: int = 1) -> np.ndarray:
    """长度为 total 的 [0,1) 均匀数，第 i 个只依赖 (seed, stream, i // BLOCK_SIZE)"""
    if total == 0:
        return np.zeros(0)
    parts = map_blocks(lambda index, part: block_generator(seed, stream, index).random(part.stop - part.start),
                       total, threads)
    return np.concatenate(parts)


def random_bits(seed: int, stream: int, total: int) -> np.ndarray:
    """长度为 total 的 0/1 比特数组（uint8）"""
    return (uniform_stream(seed, stream, total) < 0.5).astype(np.uint8)
