"""
测试随机性扩展与放大协议
"""
import math

import numpy as np
import pytest
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.protocols import (PairwiseChshTest, SeedSource, run_amplification, run_expansion, sample_gap,
                                schedule_test_rounds)
from src.core.sources import build_sv_model
from src.devices import make_device_pair
from src.models.config import AmplificationConfig, DeviceSpec, ExpansionConfig
from src.models.errors import ConfigError, SeedExhaustedError


@pytest.fixture
def honest_pair():
    return list(make_device_pair(DeviceSpec(kind="honest")))


@pytest.fixture
def local_pair():
    return list(make_device_pair(DeviceSpec(kind="local", local_vertex=0)))


@pytest.fixture
def mixed_local_pair():
    spec = DeviceSpec(kind="local", strategies=[[[0, 0], [0, 0]], [[1, 1], [1, 1]], [[0, 1], [0, 1]]],
                      weights=[0.4, 0.4, 0.2])
    return list(make_device_pair(spec))


class TestSeedSource:
    """测试种子记账"""

    def test_ledger(self):
        source = SeedSource(seed=1)
        source.take(10, "settings")
        source.take(5, "extractor")
        source.take(3, "settings")
        assert source.debited == 18
        assert source.ledger == {"settings": 13, "extractor": 5}
        assert source.remaining is None

    def test_budget_exhausted(self):
        source = SeedSource(seed=1, budget=8)
        source.take(6)
        assert source.remaining == 2
        with pytest.raises(SeedExhaustedError):
            source.take(3)

    def test_explicit_bits(self):
        """测试显式给出的种子按顺序消耗"""
        source = SeedSource(bits=[1, 0, 1, 1, 0])
        assert source.take_int(3) == 5
        assert list(source.take(2)) == [1, 0]
        with pytest.raises(SeedExhaustedError):
            source.take(1)

    def test_stream_is_reproducible_across_blocks(self):
        """测试跨块读取与一次性读取一致"""
        whole = SeedSource(seed=4).take(200_000)
        pieces = SeedSource(seed=4)
        joined = np.concatenate([pieces.take(n) for n in (1, 65_535, 70_000, 64_464)])
        assert np.array_equal(whole, joined)
        assert abs(whole.mean() - 0.5) < 0.01


class TestSchedule:
    """测试测试轮调度"""

    def test_every_round_tested(self):
        """测试 q = 1 时每轮消耗 2 个输入比特"""
        source = SeedSource(seed=2)
        positions, settings = schedule_test_rounds(1000, 1.0, source)
        assert np.array_equal(positions, np.arange(1000))
        assert settings.shape == (1000, 2)
        assert source.debited == 2000

    @pytest.mark.parametrize("q", [1 / 64, 0.3, 0.9])
    def test_test_fraction_matches_q(self, q):
        """测试测试轮比例在 5σ 内等于 q"""
        rounds = 200_000
        source = SeedSource(seed=3)
        positions, settings = schedule_test_rounds(rounds, q, source)
        sigma = math.sqrt(q * (1 - q) / rounds)
        assert abs(positions.size / rounds - q) < 5 * sigma
        assert np.all(np.diff(positions) >= 1)
        assert positions[-1] < rounds
        assert settings.shape == (positions.size, 2)
        assert source.debited == source.ledger["test-schedule"] + 2 * positions.size

    def test_gap_distribution_is_geometric(self):
        """测试间隔的均值与 P(G=1) 符合几何分布"""
        q = 0.2
        source = SeedSource(seed=13)
        gaps = np.array([sample_gap(q, source) for _ in range(20_000)])
        assert gaps.min() >= 1
        assert abs(gaps.mean() - 1 / q) < 5 * math.sqrt((1 - q) / q ** 2 / gaps.size)
        assert abs(np.mean(gaps == 1) - q) < 5 * math.sqrt(q * (1 - q) / gaps.size)

    def test_schedule_seed_cost(self):
        """测试 q = 1/64 时每个测试轮的调度比特接近间隔的熵"""
        q = 1 / 64
        source = SeedSource(seed=14)
        positions, _ = schedule_test_rounds(1_000_000, q, source)
        per_test = source.ledger["test-schedule"] / positions.size
        # H(Geom(1/64)) ≈ 7.44 比特
        assert 7.0 < per_test < 11.0

    def test_gap_respects_limit(self):
        """测试最小可能间隔越界时不再消耗比特"""
        source = SeedSource(seed=15)
        assert sample_gap(0.01, source, limit=0) > 0
        assert source.debited == 0

    def test_invalid_probability(self):
        with pytest.raises(ConfigError):
            schedule_test_rounds(100, 0.0, SeedSource(seed=1))


class TestExpansion:
    """测试随机性扩展"""

    def test_honest_devices(self, honest_pair):
        """测试 N = 10⁶, q = 1 的诚实设备不中止且 R > 0"""
        cfg = ExpansionConfig(rounds=1_000_000, test_probability=1.0, confidence=0.99)
        source = SeedSource(seed=5)
        result = run_expansion(honest_pair, cfg, source, device_seed=6)
        report = result.report
        assert not report.aborted
        assert report.certified_entropy > 0
        assert report.seed_bits_settings == 2 * cfg.rounds
        assert report.seed_bits_extractor > 0
        assert source.debited == report.seed_bits_settings + report.seed_bits_extractor
        assert report.expansion_ratio == pytest.approx(
            report.certified_entropy / (report.seed_bits_settings + report.seed_bits_extractor))
        assert report.output_length == result.output_bits.size > 0
        certification = report.certifications[0]
        assert report.certified_entropy == math.floor(cfg.rounds * certification.bits_per_round)

    def test_spot_checking_expands(self, honest_pair):
        """测试抽查加共用提取器种子时扩展比大于 1"""
        cfg = ExpansionConfig(rounds=1_000_000, test_probability=1 / 64, security_bits=32,
                              block_length=16384, reuse_extractor_seed=True)
        result = run_expansion(honest_pair, cfg, SeedSource(seed=7), device_seed=8)
        report = result.report
        assert not report.aborted
        assert report.expansion_ratio > 1.0
        assert report.details["seed_ledger"]["extractor"] == report.seed_bits_extractor

    def test_public_settings(self, honest_pair):
        """测试公共输入不计入 N_s"""
        cfg = ExpansionConfig(rounds=100_000, test_probability=1.0, public_settings=True)
        report = run_expansion(honest_pair, cfg, SeedSource(seed=9), device_seed=10).report
        assert report.seed_bits_settings == 0
        assert not report.aborted

    def test_local_devices_abort(self, local_pair):
        """测试局域顶点设备在 10³ 次试验中至少 99% 中止"""
        cfg = ExpansionConfig(rounds=2000, test_probability=1.0, confidence=0.99)
        aborted = 0
        for trial in range(1000):
            result = run_expansion(local_pair, cfg, SeedSource(seed=trial), device_seed=trial)
            aborted += result.report.aborted
            if result.report.aborted:
                assert result.output_bits.size == 0
                assert result.report.output_length == 0
        assert aborted >= 990

    def test_mixed_local_devices_abort(self, mixed_local_pair):
        """测试混合局域模型设备在 10³ 次试验中至少 99% 中止"""
        cfg = ExpansionConfig(rounds=2000, test_probability=1.0, confidence=0.99)
        aborted = 0
        for trial in range(1000):
            aborted += run_expansion(mixed_local_pair, cfg, SeedSource(seed=trial), device_seed=trial).report.aborted
        assert aborted >= 990

    def test_seed_budget_exhausted(self, honest_pair):
        cfg = ExpansionConfig(rounds=10_000, test_probability=1.0)
        with pytest.raises(SeedExhaustedError):
            run_expansion(honest_pair, cfg, SeedSource(seed=1, budget=100))

    def test_deterministic(self, honest_pair):
        """测试同种子结果一致，且与线程数无关"""
        cfg = ExpansionConfig(rounds=200_000, test_probability=1.0, block_length=4096)
        first = run_expansion(honest_pair, cfg, SeedSource(seed=11), device_seed=12, threads=1)
        second = run_expansion(honest_pair, cfg, SeedSource(seed=11), device_seed=12, threads=4)
        assert np.array_equal(first.output_bits, second.output_bits)
        assert first.report.certified_entropy == second.report.certified_entropy

    def test_requires_pair(self, honest_pair):
        other = list(make_device_pair(DeviceSpec()))
        with pytest.raises(ConfigError):
            run_expansion([honest_pair[0], other[1]], ExpansionConfig(rounds=100), SeedSource())


class TestAmplification:
    """测试随机性放大"""

    @pytest.fixture
    def honest_devices(self):
        return list(make_device_pair(DeviceSpec())) + list(make_device_pair(DeviceSpec()))

    def test_honest_devices(self, honest_devices):
        """测试两对诚实设备在 ε-SV 输入下通过检验，输出偏差小于输入的 ε"""
        cfg = AmplificationConfig(rounds=200_000, epsilon=0.05, block_length=64)
        sv = build_sv_model(cfg.epsilon, cfg.strategy)
        result = run_amplification(sv, honest_devices, cfg, sv_seed=1, device_seed=2)
        report = result.report
        assert not report.aborted
        assert len(report.certifications) == 2
        assert all(c.s_lo > 2 for c in report.certifications)
        assert result.output_bits.size == 4 * cfg.rounds // cfg.block_length
        assert report.seed_bits_settings == 0 and report.seed_bits_extractor == 0
        assert report.details["sv_bits_settings"] == 4 * cfg.rounds
        assert abs(result.output_bits.mean() - 0.5) < cfg.epsilon
        assert report.details["output_ones_fraction"] == pytest.approx(result.output_bits.mean())

    def test_uniform_source_gives_uniform_output(self, honest_devices):
        """测试 ε = 0 时输出比特的频率在 5σ 内为 1/2"""
        cfg = AmplificationConfig(rounds=200_000, epsilon=0.0, block_length=64)
        result = run_amplification(build_sv_model(0.0, "constant-bias"), honest_devices, cfg,
                                   sv_seed=4, device_seed=5)
        assert not result.report.aborted
        bits = result.output_bits
        assert abs(bits.mean() - 0.5) < 5 * 0.5 / np.sqrt(bits.size)

    def test_local_devices_abort(self, local_pair):
        """测试局域顶点设备在 10³ 次试验中至少 99% 中止"""
        devices = local_pair + list(make_device_pair(DeviceSpec(kind="local", local_vertex=5)))
        cfg = AmplificationConfig(rounds=2000, epsilon=0.05, confidence=0.99)
        sv = build_sv_model(0.05, "prefix-parity")
        aborted = 0
        for trial in range(1000):
            result = run_amplification(sv, devices, cfg, sv_seed=trial, device_seed=trial)
            aborted += result.report.aborted
            if result.report.aborted:
                assert result.output_bits.size == 0
        assert aborted >= 990

    def test_mixed_local_devices_abort(self, mixed_local_pair):
        """测试两对混合局域模型设备在 10³ 次试验中至少 99% 中止"""
        spec = DeviceSpec(kind="local", strategies=[[[0, 0], [0, 0]], [[1, 0], [1, 1]]], weights=[0.7, 0.3])
        devices = mixed_local_pair + list(make_device_pair(spec))
        cfg = AmplificationConfig(rounds=2000, epsilon=0.05, confidence=0.99)
        sv = build_sv_model(0.05, "constant-bias")
        aborted = 0
        for trial in range(1000):
            aborted += run_amplification(sv, devices, cfg, sv_seed=trial, device_seed=trial).report.aborted
        assert aborted >= 990

    def test_needs_four_devices(self, honest_pair):
        cfg = AmplificationConfig(rounds=1000)
        with pytest.raises(ConfigError):
            run_amplification(build_sv_model(0.05, "constant-bias"), honest_pair, cfg)

    def test_strategy_reports_name(self):
        assert PairwiseChshTest().device_count == 4
        assert PairwiseChshTest().setting_bits_per_round == 4


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
