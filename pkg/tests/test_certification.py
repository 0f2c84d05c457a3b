"""
测试设备无关随机性认证
"""
import math

import numpy as np
import pytest
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.certification import (certify, certify_behavior, guessing_probability,
                                    min_entropy_bound_chsh, min_guessing_entropy)
from src.core.nonlocality import (CHSH_SCENARIO, TSIRELSON_BOUND, chsh_functional, enumerate_local_vertices,
                                  evaluate_functional, honest_chsh_behavior, mixture, simulate_rounds,
                                  uniform_behavior)
from src.models.behavior import BellFunctional, Scenario
from src.models.errors import SaturationError, ScenarioError


@pytest.fixture(scope="module")
def honest():
    return honest_chsh_behavior("phi_plus")


@pytest.fixture(scope="module")
def optimal_local():
    """CHSH 恰好为 2 的局域顶点的均匀混合"""
    chsh = chsh_functional()
    vertices = [v for v in enumerate_local_vertices(CHSH_SCENARIO) if evaluate_functional(chsh, v) == 2.0]
    return mixture(vertices, [1.0 / len(vertices)] * len(vertices))


class TestGuessingProbability:
    """测试猜测概率"""

    def test_uniform(self):
        c, h = guessing_probability(uniform_behavior(CHSH_SCENARIO), 0, 0)
        assert c == pytest.approx(0.25)
        assert h == pytest.approx(2.0)

    def test_deterministic_vertex(self):
        vertex = next(enumerate_local_vertices(CHSH_SCENARIO))
        c, h = guessing_probability(vertex, 1, 0)
        assert c == 1.0
        assert h == 0.0

    def test_honest_behavior(self, honest):
        """测试 |Φ+⟩ 在 (0,0) 下 c = (1+1/√2)/4，H∞ ≈ 1.2284"""
        c, h = guessing_probability(honest, 0, 0)
        assert abs(c - (1 + 1 / math.sqrt(2)) / 4) < 1e-9
        assert h == pytest.approx(1.2284, abs=1e-4)
        assert min_guessing_entropy(honest, [(0, 0), (0, 1), (1, 0), (1, 1)]) == pytest.approx(h)

    def test_unknown_settings(self, honest):
        with pytest.raises(ScenarioError):
            guessing_probability(honest, 0, 2)
        with pytest.raises(ScenarioError):
            guessing_probability(honest, 0)


class TestMinEntropyBound:
    """测试 f(S)"""

    def test_examples(self):
        """测试 f(2) = 0，f(2√2) = 1，f(1) = 0"""
        assert min_entropy_bound_chsh(2.0) == 0.0
        assert min_entropy_bound_chsh(TSIRELSON_BOUND) == pytest.approx(1.0, abs=1e-12)
        assert min_entropy_bound_chsh(1.0) == 0.0
        assert min_entropy_bound_chsh(-3.5) == 0.0

    def test_clamps_above_tsirelson(self):
        """测试超过 2√2 截断到 2√2"""
        assert min_entropy_bound_chsh(3.5) == pytest.approx(1.0)
        assert min_entropy_bound_chsh(4.0) == pytest.approx(1.0)

    def test_outside_algebraic_range(self):
        with pytest.raises(SaturationError):
            min_entropy_bound_chsh(4.5)
        with pytest.raises(SaturationError):
            min_entropy_bound_chsh(-4.01)

    def test_monotone_and_convex(self):
        """测试在 [2, 2√2] 的 10⁴ 点网格上单调不减且凸（中点不等式）"""
        grid = np.linspace(2.0, TSIRELSON_BOUND, 10_000)
        values = np.array([min_entropy_bound_chsh(s) for s in grid])
        assert np.all(np.diff(values) >= -1e-12)
        midpoints = np.array([min_entropy_bound_chsh(s) for s in (grid[:-2] + grid[2:]) / 2])
        assert np.all(midpoints <= (values[:-2] + values[2:]) / 2 + 1e-12)

    def test_local_models_certify_nothing(self):
        """测试所有局域顶点 f(S) = 0"""
        chsh = chsh_functional()
        for vertex in enumerate_local_vertices(CHSH_SCENARIO):
            assert min_entropy_bound_chsh(evaluate_functional(chsh, vertex)) == 0.0

    def test_werner_guessing_within_bound(self):
        """测试 Werner 行为的猜测概率不超过 2^(−f(S))"""
        chsh = chsh_functional()
        for v in np.linspace(0.71, 1.0, 30):
            behavior = honest_chsh_behavior("phi_plus", v)
            s = evaluate_functional(chsh, behavior)
            c, _ = guessing_probability(behavior, 0, 0)
            assert c <= 2.0 ** -min_entropy_bound_chsh(s) + 1e-9


class TestCertify:
    """测试认证报告"""

    def test_infinite_sample_honest(self, honest):
        """测试无限样本模式下每轮 1 比特"""
        report = certify_behavior(honest, 1000)
        assert report.bits_per_round == pytest.approx(1.0)
        assert report.certified_bits == 1000
        assert report.infinite_sample
        assert report.s_lo == report.s_hat

    def test_finite_sample_honest(self, honest):
        """测试 10⁶ 轮诚实模拟、置信度 0.99 时 R > 0"""
        records = simulate_rounds(honest, None, 1_000_000, seed=20240101)
        report = certify(records, confidence=0.99)
        assert report.s_lo > 2.0
        assert report.certified_bits > 0
        assert report.certified_bits == math.floor(report.rounds * report.bits_per_round)
        assert report.s_lo <= report.s_hat

    def test_local_vertex_records(self):
        """测试局域顶点的记录 R = 0"""
        vertex = next(enumerate_local_vertices(CHSH_SCENARIO))
        report = certify(simulate_rounds(vertex, None, 10_000, seed=1))
        assert report.certified_bits == 0
        assert report.bits_per_round == 0.0
        assert not report.violated

    def test_local_records_monte_carlo(self, optimal_local):
        """测试局域模型 R = 0 的频率不低于置信度"""
        zero = sum(certify(simulate_rounds(optimal_local, None, 2000, seed=trial)).certified_bits == 0
                   for trial in range(300))
        assert zero / 300 >= 0.99

    def test_more_rounds_raise_median_s_lo(self, honest):
        """测试轮数增加时 S_lo 的中位数不下降"""
        medians = []
        for rounds in (1_000, 10_000, 100_000):
            values = [certify(simulate_rounds(honest, None, rounds, seed=1000 * rounds + trial)).s_lo
                      for trial in range(15)]
            medians.append(float(np.median(values)))
        assert medians[0] <= medians[1] <= medians[2]

    def test_requires_chsh_scenario(self):
        """测试非 (2,2,2) 泛函被拒绝"""
        scenario = Scenario(2, 3, 2)
        functional = BellFunctional(scenario, np.zeros(scenario.table_shape))
        with pytest.raises(ScenarioError):
            certify_behavior(uniform_behavior(scenario), 10, functional)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
