#!/usr/bin/env python3
"""
Hermitian matrix kernel
Nhân đại số tuyến tính cho ma trận Hermitian phức: Cholesky, log-det,
nghịch đảo, vết (trace), tích Kronecker và trung bình mẫu.
"""

from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from constants import HERMITIAN_ATOL, HERMITIAN_RTOL, PD_DIAGONAL_FACTOR
from errors import EmptySample, NotHermitian, NotPositiveDefinite, ShapeError

ArrayLike = Union["HermitianMatrix", np.ndarray, Sequence[Sequence[complex]]]


def _hermitian_part(data: np.ndarray) -> np.ndarray:
    """(H + H^H) / 2 trên trục cuối; kết quả Hermitian chính xác từng bit"""
    return 0.5 * (data + np.conj(np.swapaxes(data, -1, -2)))


def _check_hermitian(data: np.ndarray) -> None:
    deviation = np.abs(data - np.conj(np.swapaxes(data, -1, -2)))
    scale = np.max(np.abs(data)) if data.size else 0.0
    if np.any(deviation > HERMITIAN_ATOL + HERMITIAN_RTOL * scale):
        raise NotHermitian(
            f"matrix is not Hermitian (max deviation {float(np.max(deviation)):.3g})"
        )


class HermitianMatrix:
    """Ma trận Hermitian m x m, bất biến sau khi tạo"""

    __slots__ = ("_data",)

    def __init__(self, entries: ArrayLike, check: bool = True):
        if isinstance(entries, HermitianMatrix):
            self._data = entries._data
            return
        data = np.array(entries, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] < 1:
            raise ShapeError(f"expected a non-empty square matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("matrix entries must be finite")
        if check:
            _check_hermitian(data)
        data = _hermitian_part(data)
        data.setflags(write=False)
        self._data = data

    @classmethod
    def identity(cls, m: int) -> "HermitianMatrix":
        return cls(np.eye(m, dtype=np.complex128), check=False)

    @classmethod
    def diagonal(cls, values: Iterable[float]) -> "HermitianMatrix":
        return cls(np.diag(np.asarray(list(values), dtype=np.float64)), check=False)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[complex]]) -> "HermitianMatrix":
        return cls(rows)

    @property
    def m(self) -> int:
        return self._data.shape[0]

    @property
    def entries(self) -> np.ndarray:
        """Mảng numpy chỉ đọc (read-only)"""
        return self._data

    def is_positive_definite(self) -> bool:
        try:
            cholesky(self)
        except NotPositiveDefinite:
            return False
        return True

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HermitianMatrix):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self) -> int:
        return hash(self._data.tobytes())

    def __repr__(self) -> str:
        return f"HermitianMatrix(m={self.m}, entries={self._data.tolist()!r})"


def _as_array(H: ArrayLike) -> np.ndarray:
    if isinstance(H, HermitianMatrix):
        return H.entries
    return HermitianMatrix(H).entries


def _pd_threshold(data: np.ndarray) -> float:
    m = data.shape[-1]
    return m * PD_DIAGONAL_FACTOR * float(np.max(np.abs(data)))


def cholesky(H: ArrayLike) -> np.ndarray:
    """Phân tích Cholesky H = A A^H, A tam giác dưới, đường chéo thực dương"""
    data = _as_array(H)
    try:
        factor = np.linalg.cholesky(data)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"matrix is not positive-definite: {e}") from e
    diagonal = factor.diagonal().real
    if np.any(diagonal <= _pd_threshold(data)):
        raise NotPositiveDefinite(
            f"Cholesky diagonal {float(diagonal.min()):.3g} below positive-definiteness threshold"
        )
    return factor


def log_det(H: ArrayLike) -> float:
    """log|H| = 2 sum log diag(A)"""
    factor = cholesky(H)
    return float(2.0 * np.sum(np.log(factor.diagonal().real)))


def inverse(H: ArrayLike) -> HermitianMatrix:
    """H^-1 qua nghiệm Cholesky"""
    factor = cholesky(H)
    m = factor.shape[0]
    solution = linalg.cho_solve((factor, True), np.eye(m, dtype=np.complex128))
    return HermitianMatrix(solution, check=False)


def trace(H: ArrayLike) -> float:
    return float(np.trace(_as_array(H)).real)


def trace_product(A: ArrayLike, B: ArrayLike) -> float:
    """tr(A B) = Re sum_ij A_ij conj(B_ij) cho A, B Hermitian"""
    a = _as_array(A)
    b = _as_array(B)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * np.conj(b)).real)


def kron(A: ArrayLike, B: ArrayLike) -> HermitianMatrix:
    """A (x) B; (A (x) B)[i*m+k, j*m+l] = A[i,j] B[k,l]"""
    return HermitianMatrix(np.kron(_as_array(A), _as_array(B)), check=False)


def sample_mean(matrices: Sequence[ArrayLike]) -> HermitianMatrix:
    """Trung bình cộng từng phần tử"""
    if len(matrices) == 0:
        raise EmptySample("cannot average an empty list of matrices")
    arrays = [_as_array(H) for H in matrices]
    shape = arrays[0].shape
    for index, array in enumerate(arrays):
        if array.shape != shape:
            raise ShapeError(f"matrix {index} has shape {array.shape}, expected {shape}")
    return HermitianMatrix(np.mean(np.stack(arrays), axis=0), check=False)


def _batched_log_det(stack: np.ndarray) -> np.ndarray:
    """log|Z_k| cho cả stack; lỗi mang chỉ số quan sát đầu tiên bị hỏng"""
    try:
        factors = np.linalg.cholesky(stack)
        diagonals = np.diagonal(factors, axis1=-2, axis2=-1).real
        thresholds = stack.shape[-1] * PD_DIAGONAL_FACTOR * np.max(np.abs(stack), axis=(1, 2))
        bad = np.flatnonzero(np.any(diagonals <= thresholds[:, None], axis=1))
        if bad.size == 0:
            return 2.0 * np.sum(np.log(diagonals), axis=1)
    except np.linalg.LinAlgError:
        pass
    # Tìm quan sát đầu tiên không xác định dương
    for index, Z in enumerate(stack):
        try:
            cholesky(HermitianMatrix(Z, check=False))
        except NotPositiveDefinite as e:
            raise NotPositiveDefinite(
                f"observation {index} is not positive-definite", index=index
            ) from e
    raise NotPositiveDefinite("sample contains a matrix that is not positive-definite")


class MatrixSample:
    """Mẫu N ma trận Hermitian xác định dương cùng các thống kê đủ đã cache"""

    __slots__ = ("_stack", "_mean", "_log_dets", "_log_det_mean", "_observations")

    def __init__(self, observations: Sequence[ArrayLike]):
        if len(observations) == 0:
            raise EmptySample("a sample needs at least one observation")
        arrays = [_as_array(H) for H in observations]
        shape = arrays[0].shape
        for index, array in enumerate(arrays):
            if array.shape != shape:
                raise ShapeError(f"observation {index} has shape {array.shape}, expected {shape}")
        self._init_stack(np.stack(arrays))

    @classmethod
    def from_stack(cls, stack: np.ndarray, check: bool = True) -> "MatrixSample":
        """Tạo mẫu từ mảng N x m x m (nhanh, không tạo từng HermitianMatrix)"""
        data = np.array(stack, dtype=np.complex128)
        if data.ndim != 3 or data.shape[1] != data.shape[2] or data.shape[1] < 1:
            raise ShapeError(f"expected an N x m x m stack, got shape {data.shape}")
        if data.shape[0] == 0:
            raise EmptySample("a sample needs at least one observation")
        if not np.all(np.isfinite(data)):
            raise ShapeError("sample entries must be finite")
        if check:
            _check_hermitian(data)
        sample = cls.__new__(cls)
        sample._init_stack(_hermitian_part(data))
        return sample

    def _init_stack(self, stack: np.ndarray) -> None:
        stack.setflags(write=False)
        self._stack = stack
        self._log_dets = _batched_log_det(stack)
        self._log_dets.setflags(write=False)
        self._mean = HermitianMatrix(np.mean(stack, axis=0), check=False)
        self._log_det_mean = log_det(self._mean)
        self._observations: Optional[List[HermitianMatrix]] = None

    @property
    def size(self) -> int:
        """N"""
        return self._stack.shape[0]

    @property
    def m(self) -> int:
        return self._stack.shape[1]

    @property
    def stack(self) -> np.ndarray:
        return self._stack

    @property
    def observations(self) -> List[HermitianMatrix]:
        if self._observations is None:
            self._observations = [HermitianMatrix(Z, check=False) for Z in self._stack]
        return self._observations

    @property
    def mean(self) -> HermitianMatrix:
        """Z-bar"""
        return self._mean

    @property
    def log_dets(self) -> np.ndarray:
        return self._log_dets

    @property
    def mean_log_det(self) -> float:
        """N^-1 sum_k log|Z_k|"""
        return float(np.mean(self._log_dets))

    @property
    def log_det_mean(self) -> float:
        """log|Z-bar|"""
        return self._log_det_mean

    @property
    def deficiency(self) -> float:
        """a = log|Z-bar| - N^-1 sum log|Z_k| >= 0"""
        return max(0.0, self._log_det_mean - self.mean_log_det)

    @property
    def traces(self) -> np.ndarray:
        """tr(Z_k)"""
        return np.trace(self._stack, axis1=1, axis2=2).real

    @property
    def squared_traces(self) -> np.ndarray:
        """tr(Z_k Z_k) = ||Z_k||_F^2"""
        return np.sum(np.abs(self._stack) ** 2, axis=(1, 2))

    def subset(self, indices: Sequence[int]) -> "MatrixSample":
        return MatrixSample.from_stack(self._stack[np.asarray(indices, dtype=np.intp)], check=False)

    def congruence(self, M: np.ndarray) -> "MatrixSample":
        """Z_k -> M Z_k M^H"""
        M = np.asarray(M, dtype=np.complex128)
        if M.shape != (self.m, self.m):
            raise ShapeError(f"transform must be {self.m} x {self.m}, got {M.shape}")
        transformed = M @ self._stack @ M.conj().T
        return MatrixSample.from_stack(transformed, check=False)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"MatrixSample(N={self.size}, m={self.m})"
