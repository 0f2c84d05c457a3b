"""
有限维量子力学核心：Born 规则、测后态、不确定性关系、张量积
"""
from functools import reduce
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg

from ..models.errors import (DimensionMismatchError, ImpossibleOutcomeError,
                             InvalidPovmError, QuantumValidationError)
from ..models.quantum import (TOLERANCE, DensityState, KrausSet, PovmElementSet,
                              as_square_matrix, is_hermitian)

# 测后态要求的最小结果概率
MIN_OUTCOME_PROBABILITY = 1e-12

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

MatrixLike = Union[DensityState, np.ndarray]


def basis_ket(index: int, dim: int) -> np.ndarray:
    ket = np.zeros(dim, dtype=complex)
    ket[index] = 1.0
    return ket


def projector(ket: Sequence[complex]) -> np.ndarray:
    vector = np.asarray(ket, dtype=complex).reshape(-1)
    vector = vector / np.linalg.norm(vector)
    return np.outer(vector, vector.conj())


def computational_basis_povm(dim: int) -> PovmElementSet:
    return PovmElementSet([projector(basis_ket(i, dim)) for i in range(dim)])


def maximally_mixed_state(dim: int) -> DensityState:
    return DensityState(np.eye(dim, dtype=complex) / dim)


def bell_state(name: str = "phi_plus") -> DensityState:
    """
    两比特 Bell 态

    phi_plus = (|00⟩+|11⟩)/√2，即 CHSH 例子中使用的最大纠缠态
    """
    kets = {
        "phi_plus": [1, 0, 0, 1],
        "phi_minus": [1, 0, 0, -1],
        "psi_plus": [0, 1, 1, 0],
        "psi_minus": [0, 1, -1, 0],
    }
    if name not in kets:
        raise ValueError(f"Unknown Bell state '{name}'. Known: {sorted(kets)}")
    return DensityState.from_ket(kets[name])


def projective_measurement(observable: np.ndarray) -> PovmElementSet:
    """
    把 ±1 本征值的可观测量转成投影测量

    结果编号约定：0 ↔ 本征值 +1，1 ↔ 本征值 -1（与 a → 1-2a 的关联函数约定一致）
    """
    matrix = as_square_matrix(observable)
    if not is_hermitian(matrix):
        raise QuantumValidationError("Observable must be Hermitian")
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    if np.max(np.abs(np.abs(eigenvalues) - 1.0)) > 1e-7:
        raise QuantumValidationError("Observable must have eigenvalues +1/-1")
    dim = matrix.shape[0]
    plus = np.zeros((dim, dim), dtype=complex)
    minus = np.zeros((dim, dim), dtype=complex)
    for value, vector in zip(eigenvalues, eigenvectors.T):
        if value > 0:
            plus += np.outer(vector, vector.conj())
        else:
            minus += np.outer(vector, vector.conj())
    return PovmElementSet([plus, minus])


def kraus_from_povm(povm: PovmElementSet) -> KrausSet:
    """平方根 Kraus 算子 M_i = √F_i（投影元素即为自身）"""
    return KrausSet([_psd_sqrt(element) for element in povm.elements])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    roots = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (eigenvectors * roots) @ eigenvectors.conj().T


def random_density_state(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityState:
    """Ginibre 随机混态，用于性质测试"""
    rank = rank or dim
    ginibre = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    matrix = ginibre @ ginibre.conj().T
    matrix = (matrix + matrix.conj().T) / 2
    return DensityState(matrix / np.trace(matrix).real)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    matrix = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (matrix + matrix.conj().T) / 2


def random_projective_povm(dim: int, rng: np.random.Generator, outcomes: int = 2) -> PovmElementSet:
    """随机基下的投影测量，把基矢按顺序分配到各结果上"""
    unitary, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    elements = [np.zeros((dim, dim), dtype=complex) for _ in range(outcomes)]
    for column in range(dim):
        vector = unitary[:, column]
        elements[column % outcomes] += np.outer(vector, vector.conj())
    return PovmElementSet(elements)


def born_probabilities(state: DensityState, povm: PovmElementSet) -> np.ndarray:
    """
    Born 规则：p_i = Tr(ρ F_i)

    返回值裁剪到 [0,1]，消除 -1e-17 这类数值残差
    """
    if state.dim != povm.dim:
        raise DimensionMismatchError(f"State dim {state.dim} != POVM dim {povm.dim}")

    probabilities = np.array([np.real(np.trace(state.matrix @ element)) for element in povm.elements])
    if np.any(probabilities < -TOLERANCE) or np.any(probabilities > 1 + TOLERANCE):
        raise InvalidPovmError(f"Born probabilities out of range: {probabilities}")
    if abs(probabilities.sum() - 1.0) > TOLERANCE:
        raise InvalidPovmError(f"Born probabilities sum to {probabilities.sum():.12f}")

    probabilities = np.clip(probabilities, 0.0, 1.0)
    logger.debug(f"Born probabilities: {probabilities}")
    return probabilities


def post_measurement_state(state: DensityState, kraus: KrausSet, outcome: int) -> DensityState:
    """测后态 M ρ M† / Tr(M ρ M†)"""
    if state.dim != kraus.dim:
        raise DimensionMismatchError(f"State dim {state.dim} != Kraus dim {kraus.dim}")
    if not 0 <= outcome < len(kraus.operators):
        raise IndexError(f"Outcome {outcome} out of range for {len(kraus.operators)} Kraus operators")

    operator = kraus.operators[outcome]
    unnormalized = operator @ state.matrix @ operator.conj().T
    probability = float(np.real(np.trace(unnormalized)))
    if probability <= MIN_OUTCOME_PROBABILITY:
        raise ImpossibleOutcomeError(f"Impossible outcome {outcome}: probability {probability:.3e}")

    result = unnormalized / probability
    return DensityState((result + result.conj().T) / 2)


def expectation(state: DensityState, observable: np.ndarray) -> float:
    return float(np.real(np.trace(state.matrix @ observable)))


def variance(state: DensityState, observable: np.ndarray) -> float:
    mean = expectation(state, observable)
    return float(np.real(np.trace(state.matrix @ observable @ observable))) - mean ** 2


def uncertainty_check(state: DensityState, x: np.ndarray, y: np.ndarray,
                      schrodinger: bool = False) -> Tuple[float, float]:
    """
    Robertson 不确定性关系

    lhs = δX²·δY²，rhs = ¼|Tr ρ[X,Y]|²；schrodinger=True 时在 rhs 上再加协方差项
    """
    x = as_square_matrix(x)
    y = as_square_matrix(y)
    if not (is_hermitian(x) and is_hermitian(y)):
        raise QuantumValidationError("Observables must be Hermitian")
    if x.shape != y.shape or x.shape[0] != state.dim:
        raise DimensionMismatchError("Observable and state dimensions must match")

    lhs = variance(state, x) * variance(state, y)
    commutator = x @ y - y @ x
    rhs = 0.25 * abs(np.trace(state.matrix @ commutator)) ** 2
    if schrodinger:
        anticommutator = x @ y + y @ x
        covariance = 0.5 * np.real(np.trace(state.matrix @ anticommutator)) - expectation(state, x) * expectation(state, y)
        rhs += covariance ** 2
    return float(lhs), float(rhs)


def tensor_product(a: MatrixLike, b: MatrixLike) -> MatrixLike:
    """Kronecker 积；两个密度矩阵的积仍是密度矩阵"""
    if isinstance(a, DensityState) and isinstance(b, DensityState):
        return DensityState(np.kron(a.matrix, b.matrix))
    left = a.matrix if isinstance(a, DensityState) else as_square_matrix(a)
    right = b.matrix if isinstance(b, DensityState) else as_square_matrix(b)
    return np.kron(left, right)


def tensor_all(matrices: List[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, matrices)


def mix_states(states: List[DensityState], weights: Sequence[float]) -> DensityState:
    weights = np.asarray(weights, dtype=float)
    if len(states) != len(weights) or abs(weights.sum() - 1.0) > TOLERANCE or np.any(weights < 0):
        raise QuantumValidationError("Mixture weights must be a probability vector matching the states")
    return DensityState(sum(w * s.matrix for w, s in zip(weights, states)))
