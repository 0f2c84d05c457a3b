"""
随机性扩展与放大协议

扩展：短的完美种子决定测试轮及其输入，CHSH 检验通过后用 Toeplitz 哈希提取输出；
放大：只有 ε-SV 源，四个设备分两对做 CHSH，通过后把设备输出与剩余 SV 比特分块做内积
"""
import math
from abc import ABC, abstractmethod
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..devices.base import DeviceBox, respond_jointly
from ..models.behavior import RoundRecords
from ..models.config import AmplificationConfig, ExpansionConfig
from ..models.errors import ConfigError, CoverageError, SeedExhaustedError
from ..models.reports import CertificationReport, ProtocolReport
from ..models.source import SvSourceModel
from ..utils.rng import (BLOCK_SIZE, STREAM_DEVICES, STREAM_PROTOCOL_SEED, STREAM_PUBLIC_SETTINGS,
                         block_generator)
from .certification import certify
from .extraction import extractable_length, inner_product_extract_blocks, toeplitz_extract_blocks, \
    toeplitz_seed_length
from .nonlocality import CHSH_SCENARIO, uniform_settings
from .sources import sample_sv

SETTING_BITS_PER_PARTY = 1


class ProtocolResult(NamedTuple):
    report: ProtocolReport
    output_bits: np.ndarray


class SeedSource:
    """
    完美种子：按顺序逐位消耗并记账

    bits 为空时由 (seed, stream) 的计数器流按需生成；budget 为空表示不设上限
    """

    def __init__(self, seed: int = 0, budget: Optional[int] = None, bits: Optional[np.ndarray] = None,
                 stream: int = STREAM_PROTOCOL_SEED):
        self.seed = seed
        self.stream = stream
        self._bits = None if bits is None else np.asarray(bits, dtype=np.uint8).reshape(-1)
        if self._bits is not None:
            budget = self._bits.size if budget is None else min(budget, self._bits.size)
        self.budget = budget
        self.debited = 0
        self.ledger: Dict[str, int] = {}
        self._blocks: Dict[int, np.ndarray] = {}

    @property
    def remaining(self) -> Optional[int]:
        return None if self.budget is None else self.budget - self.debited

    def _stream_bits(self, start: int, count: int) -> np.ndarray:
        first, last = start // BLOCK_SIZE, (start + count - 1) // BLOCK_SIZE
        for block in range(first, last + 1):
            if block not in self._blocks:
                uniforms = block_generator(self.seed, self.stream, block).random(BLOCK_SIZE)
                self._blocks[block] = (uniforms < 0.5).astype(np.uint8)
        if first == last:
            joined = self._blocks[first]
        else:
            joined = np.concatenate([self._blocks[block] for block in range(first, last + 1)])
        offset = start - first * BLOCK_SIZE
        # 已经读过的块不会再用到
        for block in [b for b in self._blocks if b < last]:
            del self._blocks[block]
        return joined[offset:offset + count]

    def take(self, count: int, purpose: str = "unspecified") -> np.ndarray:
        """消耗 count 个种子比特"""
        if count < 0:
            raise ValueError("Cannot take a negative number of seed bits")
        if count == 0:
            return np.zeros(0, dtype=np.uint8)
        if self.budget is not None and self.debited + count > self.budget:
            raise SeedExhaustedError(f"Seed exhausted: need {count} bits for {purpose}, "
                                     f"{self.budget - self.debited} of {self.budget} left")
        if self._bits is not None:
            bits = self._bits[self.debited:self.debited + count]
        else:
            bits = self._stream_bits(self.debited, count)
        self.debited += count
        self.ledger[purpose] = self.ledger.get(purpose, 0) + count
        return bits

    def take_int(self, width: int, purpose: str = "unspecified") -> int:
        """width 个比特组成的无符号整数（高位在前）"""
        value = 0
        for bit in self.take(width, purpose):
            value = (value << 1) | int(bit)
        return value


# 双精度下区间细分的最大比特数
MAX_GAP_BITS = 53


def sample_gap(test_probability: float, source: SeedSource, limit: Optional[int] = None) -> int:
    """
    从种子比特精确抽取几何分布间隔 G ~ Geom(q)，P(G = g) = (1−q)^(g−1)·q

    逐位细分 V ∈ (lo, hi]，G(V) = floor(ln V / ln(1−q)) + 1，区间内 G 唯一确定时停止；
    最小可能间隔已超过 limit 时提前返回，不再消耗比特
    """
    log_keep = math.log1p(-test_probability)
    lo, hi = 0.0, 1.0
    for _ in range(MAX_GAP_BITS):
        gap = int(math.floor(math.log(hi) / log_keep)) + 1
        if limit is not None and gap > limit:
            return gap
        if lo > 0.0 and lo >= math.exp(gap * log_keep):
            return gap
        mid = 0.5 * (lo + hi)
        if source.take(1, "test-schedule")[0]:
            lo = mid
        else:
            hi = mid
    return int(math.floor(math.log(hi) / log_keep)) + 1


def schedule_test_rounds(rounds: int, test_probability: float,
                         source: SeedSource) -> Tuple[np.ndarray, np.ndarray]:
    """
    决定测试轮位置及其输入：每轮独立地以概率 q 成为测试轮

    q = 1 时每轮都是测试轮，每轮 2 个输入比特；否则相邻测试轮的间隔按几何分布从种子抽取，
    每个测试轮另加 2 个输入比特
    """
    if not 0.0 < test_probability <= 1.0:
        raise ConfigError(f"Test probability must lie in (0, 1], got {test_probability}")
    if test_probability >= 1.0:
        bits = source.take(2 * rounds, "settings")
        return np.arange(rounds), bits.reshape(rounds, 2).astype(np.int64)

    positions: List[int] = []
    settings: List[Tuple[int, int]] = []
    position = -1
    while True:
        position += sample_gap(test_probability, source, limit=rounds - 1 - position)
        if position >= rounds:
            break
        x, y = source.take(2, "settings")
        positions.append(position)
        settings.append((int(x), int(y)))
    return np.array(positions, dtype=np.int64), np.array(settings, dtype=np.int64).reshape(-1, 2)


def _pair_stream(index: int) -> int:
    return (STREAM_DEVICES << 8) + index


def _check_pair(devices: Sequence[DeviceBox]):
    if len(devices) != 2 or devices[0].source is not devices[1].source:
        raise ConfigError("Expansion needs one pair of devices sharing a correlation source")
    if devices[0].scenario != CHSH_SCENARIO:
        raise ConfigError("Expansion runs a CHSH test and needs (2,2,2) devices")


def _abort(report: ProtocolReport, reason: str) -> ProtocolResult:
    logger.warning(f"Protocol {report.protocol} aborted: {reason}")
    report.aborted = True
    report.abort_reason = reason
    report.output_length = 0
    return ProtocolResult(report, np.zeros(0, dtype=np.uint8))


def run_expansion(devices: Sequence[DeviceBox], cfg: ExpansionConfig, seed_source: SeedSource,
                  device_seed: int = 0, threads: int = 1) -> ProtocolResult:
    """
    抽查式随机性扩展

    种子消耗：N_s 为测试轮调度与输入比特（public_settings 时为 0），N_e 为 Toeplitz 种子比特
    """
    _check_pair(devices)
    n = cfg.rounds
    debited_before = seed_source.debited
    setting_source = (SeedSource(seed_source.seed, stream=STREAM_PUBLIC_SETTINGS)
                      if cfg.public_settings else seed_source)
    test_positions, test_settings = schedule_test_rounds(n, cfg.test_probability, setting_source)
    n_s = 0 if cfg.public_settings else seed_source.debited - debited_before

    settings = np.tile(np.asarray(cfg.generation_setting, dtype=np.int64), (n, 1))
    settings[test_positions] = test_settings
    outputs = respond_jointly(devices, settings, device_seed, _pair_stream(0), threads)

    report = ProtocolReport(
        protocol="expansion",
        rounds=n,
        test_rounds=int(test_positions.size),
        seed_bits_settings=n_s,
        generated_bits=2 * n,
        details={
            "test_probability": cfg.test_probability,
            "observed_test_fraction": test_positions.size / n,
            "seed_bits_schedule": setting_source.ledger.get("test-schedule", 0),
            "public_settings": cfg.public_settings,
            "reuse_extractor_seed": cfg.reuse_extractor_seed,
            "block_length": cfg.block_length,
        },
    )
    logger.info(f"Expansion: {n} rounds, {test_positions.size} test rounds, {n_s} setting seed bits")

    records = RoundRecords(CHSH_SCENARIO, test_settings, outputs[test_positions], {"protocol": "expansion"})
    if len(records) == 0:
        return _abort(report, "no test rounds were scheduled")
    try:
        certification = certify(records, confidence=cfg.confidence,
                                settings_distribution=uniform_settings(CHSH_SCENARIO))
    except CoverageError as e:
        return _abort(report, f"insufficient test statistics: {e}")
    report.certifications = [certification]
    if certification.bits_per_round == 0:
        return _abort(report, f"CHSH lower bound S_lo={certification.s_lo:.6f} does not exceed 2")

    bits_per_round = certification.bits_per_round
    report.certified_entropy = math.floor(n * bits_per_round)

    raw = outputs.reshape(-1).astype(np.uint8)
    block_length = min(cfg.block_length, raw.size)
    block_output = extractable_length(block_length, bits_per_round / 2.0, cfg.epsilon)
    blocks = raw.size // block_length
    report.details["block_output_length"] = block_output
    if block_output == 0:
        logger.warning("Certified rate too low for the configured block length; no output extracted")
        output = np.zeros(0, dtype=np.uint8)
    else:
        per_block = toeplitz_seed_length(block_length, block_output)
        n_e = per_block if cfg.reuse_extractor_seed else blocks * per_block
        extractor_seed = seed_source.take(n_e, "extractor")
        report.seed_bits_extractor = n_e
        output = toeplitz_extract_blocks(raw[:blocks * block_length], block_length, block_output,
                                         extractor_seed, reuse_seed=cfg.reuse_extractor_seed, threads=threads)

    consumed = report.seed_bits_settings + report.seed_bits_extractor
    report.output_length = int(output.size)
    report.expansion_ratio = report.certified_entropy / consumed if consumed else None
    report.details["seed_ledger"] = dict(seed_source.ledger)
    logger.info(f"Expansion certified R={report.certified_entropy} from N_s+N_e={consumed} seed bits, "
                f"output {output.size} bits")
    return ProtocolResult(report, output)


class BellTestResult(NamedTuple):
    passed: bool
    outputs: np.ndarray
    certifications: List[CertificationReport]


class BellTestStrategy(ABC):
    """放大协议中的 Bell 检验"""
    name = "bell-test"

    @property
    @abstractmethod
    def device_count(self) -> int:
        """需要的设备数"""

    @property
    def setting_bits_per_round(self) -> int:
        return self.device_count * SETTING_BITS_PER_PARTY

    @abstractmethod
    def run(self, devices: Sequence[DeviceBox], settings: np.ndarray, device_seed: int,
            confidence: float, threads: int = 1) -> BellTestResult:
        """settings 形状 (N, device_count)，返回同形状的输出与检验结论"""


class PairwiseChshTest(BellTestStrategy):
    """设备 (0,1) 与 (2,3) 各做一次 CHSH，两对都必须违背"""
    name = "pairwise-chsh"

    @property
    def device_count(self) -> int:
        return 4

    def run(self, devices: Sequence[DeviceBox], settings: np.ndarray, device_seed: int,
            confidence: float, threads: int = 1) -> BellTestResult:
        if len(devices) != self.device_count:
            raise ConfigError(f"{self.name} needs {self.device_count} devices, got {len(devices)}")
        outputs = np.zeros_like(settings)
        certifications = []
        passed = True
        for pair in range(2):
            columns = slice(2 * pair, 2 * pair + 2)
            boxes = devices[columns]
            _check_pair(boxes)
            outputs[:, columns] = respond_jointly(boxes, settings[:, columns], device_seed,
                                                  _pair_stream(pair), threads)
            records = RoundRecords(CHSH_SCENARIO, settings[:, columns], outputs[:, columns], {"pair": pair})
            try:
                certification = certify(records, confidence=confidence)
            except CoverageError as e:
                logger.warning(f"Pair {pair}: {e}")
                return BellTestResult(False, outputs, certifications)
            certifications.append(certification)
            passed = passed and certification.bits_per_round > 0
        return BellTestResult(passed, outputs, certifications)


def run_amplification(sv: SvSourceModel, devices: Sequence[DeviceBox], cfg: AmplificationConfig,
                      sv_seed: int = 0, device_seed: int = 0, threads: int = 1,
                      bell_test: Optional[BellTestStrategy] = None) -> ProtocolResult:
    """
    随机性放大：输入比特与提取器的第二个源都来自 SV 源，不使用任何完美种子

    输出为交织的设备输出 (a1,b1,a2,b2,...) 与残余 SV 比特 t 的分块内积，每块一个比特
    """
    bell_test = bell_test or PairwiseChshTest()
    n = cfg.rounds
    width = bell_test.device_count
    raw_length = width * n
    blocks = raw_length // cfg.block_length
    setting_bits = bell_test.setting_bits_per_round * n
    residual_bits = blocks * cfg.block_length

    sv_bits = sample_sv(sv, setting_bits + residual_bits, sv_seed, threads=threads)
    settings = sv_bits[:setting_bits].reshape(n, width).astype(np.int64)
    residual = sv_bits[setting_bits:]

    result = bell_test.run(devices, settings, device_seed, cfg.confidence, threads)
    report = ProtocolReport(
        protocol="amplification",
        rounds=n,
        test_rounds=n,
        generated_bits=raw_length,
        certifications=result.certifications,
        details={
            "bell_test": bell_test.name,
            "sv_epsilon": sv.epsilon,
            "sv_strategy": sv.strategy.name,
            "sv_bits_settings": setting_bits,
            "sv_bits_extractor": residual_bits,
            "block_length": cfg.block_length,
        },
    )
    if not result.passed:
        lows = ", ".join(f"{c.s_lo:.6f}" for c in result.certifications)
        return _abort(report, f"Bell test {bell_test.name} not violated (S_lo: {lows})")

    report.certified_entropy = sum(c.certified_bits for c in result.certifications)
    output = inner_product_extract_blocks(result.outputs.reshape(-1)[:residual_bits].astype(np.uint8),
                                          residual, cfg.block_length)
    report.output_length = int(output.size)
    if output.size:
        report.details["output_ones_fraction"] = float(output.mean())
    logger.info(f"Amplification produced {output.size} bits from {n} rounds (SV ε={sv.epsilon})")
    return ProtocolResult(report, output)
