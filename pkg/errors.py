#!/usr/bin/env python3
"""
Exception hierarchy for the ENL estimation toolkit
Hệ thống ngoại lệ cho bộ công cụ ước lượng ENL

Mỗi lớp mang exit code mà CLI trả về khi gặp lỗi đó.
"""

from typing import Optional, Tuple

from constants import EXIT_DATA, EXIT_SOLVER, EXIT_USAGE


class ENLError(Exception):
    """Lớp gốc cho mọi lỗi của bộ công cụ"""

    exit_code = EXIT_DATA


class UsageError(ENLError):
    """Sai cú pháp dòng lệnh hoặc tham số"""

    exit_code = EXIT_USAGE


class ConfigError(UsageError):
    """Cấu hình không hợp lệ (lưới rỗng, replications < 1, ...)"""


class DataError(ENLError, ValueError):
    """Dữ liệu hoặc tham số nằm ngoài miền xác định"""

    exit_code = EXIT_DATA


class DomainError(DataError):
    """Argument outside the domain of a function (x <= 0, L <= m-1, ...)"""


class ShapeError(DataError):
    """Kích thước ma trận không khớp"""


class NotHermitian(ShapeError):
    """Ma trận không Hermitian"""


class NotPositiveDefinite(DataError):
    """Cholesky thất bại: ma trận không xác định dương"""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class EmptySample(DataError):
    """Mẫu rỗng"""


class DegenerateSample(DataError):
    """The estimator has no finite solution on this sample"""


class EmptyCell(DataError):
    """Không có replication thành công nào để tính metrics"""


class FormatError(DataError):
    """Header hoặc nội dung file WCOV1 không hợp lệ"""


class TruncationError(FormatError):
    """Payload WCOV1 ngắn hơn kích thước khai báo trong header"""


class BoundsError(DataError):
    """Vùng chọn nằm ngoài ảnh"""


class BadPixel(DataError):
    """Pixel không xác định dương trong vùng được trích"""

    def __init__(self, index: int, message: Optional[str] = None):
        super().__init__(message or f"pixel {index} is not positive-definite")
        self.index = index


class SizeError(DataError):
    """Kích thước subsample không hợp lệ"""


class SolverFailure(ENLError, ArithmeticError):
    """Newton-Raphson không hội tụ"""

    exit_code = EXIT_SOLVER

    def __init__(
        self,
        message: str,
        iterations: int = 0,
        last_iterate: float = float("nan"),
        residual: float = float("nan"),
        bracket: Tuple[float, float] = (float("nan"), float("nan")),
    ):
        super().__init__(
            f"{message} (iterations={iterations}, L={last_iterate:.6g}, "
            f"residual={residual:.3g}, bracket=[{bracket[0]:.6g}, {bracket[1]:.6g}])"
        )
        self.iterations = iterations
        self.last_iterate = last_iterate
        self.residual = residual
        self.bracket = bracket
