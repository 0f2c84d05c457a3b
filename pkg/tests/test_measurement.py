"""
测试量子力学基础：密度矩阵、POVM、Born 规则、测后态与不确定性关系
"""
import math

import numpy as np
import pytest
import sys
from pathlib import Path

# 添加项目根目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.measurement import (
    PAULI_I, PAULI_X, PAULI_Y, PAULI_Z,
    basis_ket, bell_state, born_probabilities, computational_basis_povm, kraus_from_povm,
    maximally_mixed_state, mix_states, post_measurement_state, projective_measurement, projector,
    random_density_state, random_hermitian, random_projective_povm, tensor_product, uncertainty_check,
)
from src.models.errors import (DimensionMismatchError, ImpossibleOutcomeError, InvalidPovmError,
                               QuantumValidationError)
from src.models.quantum import DensityState, KrausSet, PovmElementSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def zero_state():
    return DensityState.from_ket([1, 0])


@pytest.fixture
def plus_state():
    return DensityState.from_ket([1, 1])


def test_density_state_validation():
    """测试密度矩阵的不变量检查"""
    with pytest.raises(QuantumValidationError):
        DensityState(np.array([[0.5, 0.1], [0.0, 0.5]]))  # 非厄米
    with pytest.raises(QuantumValidationError):
        DensityState(np.eye(2))  # 迹为 2
    with pytest.raises(QuantumValidationError):
        DensityState(np.diag([1.5, -0.5]))  # 负本征值
    with pytest.raises(DimensionMismatchError):
        DensityState(np.ones((2, 3)))


def test_povm_must_sum_to_identity():
    """测试 POVM 完备性"""
    with pytest.raises(InvalidPovmError):
        PovmElementSet([projector([1, 0])])
    with pytest.raises(InvalidPovmError):
        KrausSet([0.5 * PAULI_I])


def test_born_basis_state(zero_state):
    """测试本征态测量"""
    probabilities = born_probabilities(zero_state, computational_basis_povm(2))
    assert np.allclose(probabilities, [1.0, 0.0])


def test_born_plus_state(plus_state):
    """测试 |+⟩ 在计算基下的对称结果"""
    probabilities = born_probabilities(plus_state, computational_basis_povm(2))
    assert np.allclose(probabilities, [0.5, 0.5], atol=1e-12)


def test_born_qudit_amplitudes():
    """测试 qudit 叠加态的 |α_i|² 规则"""
    amplitudes = np.array([0.5, 0.5j, -0.5, 0.5])
    state = DensityState.from_ket(amplitudes)
    probabilities = born_probabilities(state, computational_basis_povm(4))
    assert np.allclose(probabilities, np.abs(amplitudes) ** 2, atol=1e-12)


def test_born_dimension_mismatch(zero_state):
    """测试维度不匹配"""
    with pytest.raises(DimensionMismatchError):
        born_probabilities(zero_state, computational_basis_povm(3))


def test_born_sums_to_one_random(rng):
    """测试随机态与随机 POVM 的概率归一"""
    for _ in range(500):
        dim = int(rng.integers(2, 5))
        state = random_density_state(dim, rng)
        povm = random_projective_povm(dim, rng, outcomes=int(rng.integers(2, dim + 1)))
        probabilities = born_probabilities(state, povm)
        assert abs(probabilities.sum() - 1.0) < 1e-9
        assert np.all(probabilities >= 0) and np.all(probabilities <= 1)


def test_born_linearity_in_state(rng):
    """测试 Born 概率对混合态是线性的"""
    povm = random_projective_povm(3, rng)
    for _ in range(100):
        a, b = random_density_state(3, rng), random_density_state(3, rng)
        weight = float(rng.random())
        mixed = mix_states([a, b], [weight, 1 - weight])
        expected = weight * born_probabilities(a, povm) + (1 - weight) * born_probabilities(b, povm)
        assert np.allclose(born_probabilities(mixed, povm), expected, atol=1e-9)


def test_post_measurement_projection(plus_state):
    """测试 |+⟩ 投影到 |0⟩"""
    kraus = kraus_from_povm(computational_basis_povm(2))
    result = post_measurement_state(plus_state, kraus, 0)
    assert np.allclose(result.matrix, projector([1, 0]), atol=1e-12)


def test_post_measurement_identity_kraus(rng):
    """测试恒等 Kraus 不改变状态"""
    state = random_density_state(3, rng)
    result = post_measurement_state(state, KrausSet([np.eye(3, dtype=complex)]), 0)
    assert np.allclose(result.matrix, state.matrix, atol=1e-12)


def test_post_measurement_rank_two_projector(rng):
    """测试 3 维态上的秩 2 投影，与直接矩阵运算比较"""
    state = random_density_state(3, rng)
    e = projector(basis_ket(0, 3)) + projector(basis_ket(1, 3))
    kraus = KrausSet([e, np.eye(3) - e])
    expected = e @ state.matrix @ e
    expected = expected / np.trace(expected).real
    assert np.allclose(post_measurement_state(state, kraus, 0).matrix, expected, atol=1e-12)


def test_post_measurement_impossible_outcome(zero_state):
    """测试零概率结果报错"""
    kraus = kraus_from_povm(computational_basis_povm(2))
    with pytest.raises(ImpossibleOutcomeError):
        post_measurement_state(zero_state, kraus, 1)


def test_repeated_projective_measurement_is_idempotent(rng):
    """测试投影测量重复测量得到相同结果"""
    for _ in range(100):
        dim = int(rng.integers(2, 5))
        state = random_density_state(dim, rng)
        povm = random_projective_povm(dim, rng)
        kraus = kraus_from_povm(povm)
        for outcome, p in enumerate(born_probabilities(state, povm)):
            if p < 1e-6:
                continue
            after = post_measurement_state(state, kraus, outcome)
            assert abs(born_probabilities(after, povm)[outcome] - 1.0) < 1e-9


def test_uncertainty_equal_observables(plus_state):
    """测试 X = Y 时 rhs = 0"""
    _, rhs = uncertainty_check(plus_state, PAULI_X, PAULI_X)
    assert abs(rhs) < 1e-12


def test_uncertainty_pauli_equality(zero_state):
    """测试 |0⟩ 上 σx, σy 取等号"""
    lhs, rhs = uncertainty_check(zero_state, PAULI_X, PAULI_Y)
    assert abs(lhs - 1.0) < 1e-12
    assert abs(rhs - 1.0) < 1e-12


def test_uncertainty_maximally_mixed():
    """测试 I/2 上对易子迹为零"""
    lhs, rhs = uncertainty_check(maximally_mixed_state(2), PAULI_X, PAULI_Y)
    assert abs(lhs - 1.0) < 1e-12
    assert abs(rhs) < 1e-12


def test_uncertainty_rejects_non_hermitian(zero_state):
    """测试非厄米输入"""
    with pytest.raises(QuantumValidationError):
        uncertainty_check(zero_state, np.array([[0, 1], [0, 0]]), PAULI_Y)


def test_uncertainty_bound_random(rng):
    """测试随机三元组满足 lhs ≥ rhs，Schrödinger 形式更紧但仍成立"""
    for _ in range(10000):
        dim = int(rng.integers(2, 5))
        state = random_density_state(dim, rng)
        x, y = random_hermitian(dim, rng), random_hermitian(dim, rng)
        lhs, rhs = uncertainty_check(state, x, y)
        assert lhs >= rhs - 1e-9
    lhs, tighter = uncertainty_check(state, x, y, schrodinger=True)
    assert lhs >= tighter - 1e-9
    assert tighter >= rhs - 1e-12


def test_tensor_products():
    """测试 Kronecker 积"""
    assert np.allclose(tensor_product(PAULI_I, PAULI_I), np.eye(4))
    product = tensor_product(DensityState.from_ket([1, 0]), DensityState.from_ket([0, 1]))
    assert isinstance(product, DensityState)
    assert np.allclose(product.matrix, projector(basis_ket(1, 4)))


def test_bell_state_from_basis_tensors():
    """测试由基矢张量积构造的 Bell 态是纯态"""
    ket = (np.kron(basis_ket(0, 2), basis_ket(0, 2)) + np.kron(basis_ket(1, 2), basis_ket(1, 2))) / math.sqrt(2)
    state = DensityState(projector(ket))
    assert abs(np.trace(state.matrix).real - 1.0) < 1e-12
    assert abs(state.purity() - 1.0) < 1e-12
    assert np.allclose(state.matrix, bell_state("phi_plus").matrix)


def test_projective_measurement_of_pauli_z():
    """测试结果 0 对应本征值 +1"""
    povm = projective_measurement(PAULI_Z)
    assert np.allclose(povm.elements[0], projector([1, 0]))
    assert np.allclose(povm.elements[1], projector([0, 1]))
    with pytest.raises(QuantumValidationError):
        projective_measurement(2 * PAULI_Z)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
