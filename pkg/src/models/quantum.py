"""
有限维量子对象：密度矩阵、POVM、Kraus 算子
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import linalg

from .errors import DimensionMismatchError, InvalidPovmError, QuantumValidationError

# 厄米性、归一化、半正定检查的统一容差
TOLERANCE = 1e-9


def as_square_matrix(values) -> np.ndarray:
    """转换为有限的复方阵"""
    matrix = np.asarray(values, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise DimensionMismatchError(f"Expected a non-empty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise QuantumValidationError("Matrix entries must be finite")
    return matrix


def is_hermitian(matrix: np.ndarray, tol: float = TOLERANCE) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol)


def is_positive_semidefinite(matrix: np.ndarray, tol: float = TOLERANCE) -> bool:
    """用完整的厄米特征分解判断半正定（秩亏的态也能正确处理）"""
    eigenvalues = linalg.eigh(matrix, eigvals_only=True)
    return bool(eigenvalues.min() >= -tol)


@dataclass(frozen=True, eq=False)
class DensityState:
    """密度矩阵 ρ：厄米、迹为1、半正定"""
    matrix: np.ndarray

    def __post_init__(self):
        matrix = as_square_matrix(self.matrix)
        if not is_hermitian(matrix):
            raise QuantumValidationError("Density matrix must be Hermitian")
        trace = np.trace(matrix)
        if abs(trace - 1.0) > TOLERANCE:
            raise QuantumValidationError(f"Density matrix trace must be 1, got {trace.real:.12f}")
        if not is_positive_semidefinite(matrix):
            raise QuantumValidationError("Density matrix must be positive semidefinite")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        """Tr ρ²"""
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "DensityState":
        """由态矢量构造投影算子 |ψ⟩⟨ψ|（自动归一化）"""
        vector = np.asarray(ket, dtype=complex).reshape(-1)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise QuantumValidationError("Ket must be non-zero")
        vector = vector / norm
        return cls(np.outer(vector, vector.conj()))


@dataclass(frozen=True, eq=False)
class PovmElementSet:
    """POVM {F_i}：每个元素厄米半正定，且 Σ F_i = I"""
    elements: List[np.ndarray]

    def __post_init__(self):
        if len(self.elements) == 0:
            raise InvalidPovmError("POVM must contain at least one element")
        elements = [as_square_matrix(e) for e in self.elements]
        dim = elements[0].shape[0]
        for element in elements:
            if element.shape[0] != dim:
                raise DimensionMismatchError("All POVM elements must share one dimension")
            if not is_hermitian(element) or not is_positive_semidefinite(element):
                raise InvalidPovmError("POVM elements must be Hermitian and positive semidefinite")
        total = sum(elements)
        if np.max(np.abs(total - np.eye(dim))) > TOLERANCE:
            raise InvalidPovmError("POVM elements must sum to the identity")
        object.__setattr__(self, "elements", elements)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Kraus 算子 {M_i}：Σ M_i† M_i = I，对应 POVM F_i = M_i† M_i"""
    operators: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.operators) == 0:
            raise InvalidPovmError("Kraus set must contain at least one operator")
        operators = [as_square_matrix(m) for m in self.operators]
        dim = operators[0].shape[0]
        if any(m.shape[0] != dim for m in operators):
            raise DimensionMismatchError("All Kraus operators must share one dimension")
        total = sum(m.conj().T @ m for m in operators)
        if np.max(np.abs(total - np.eye(dim))) > TOLERANCE:
            raise InvalidPovmError("Kraus operators must satisfy sum M^dagger M = I")
        object.__setattr__(self, "operators", operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def povm(self) -> PovmElementSet:
        return PovmElementSet([m.conj().T @ m for m in self.operators])
