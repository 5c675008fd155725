#!/usr/bin/env python3
"""
PolSAR covariance image ingestion
Đọc/ghi ảnh ma trận hiệp phương sai (định dạng WCOV1), trích vùng và lấy
mẫu con không hoàn lại.

Định dạng WCOV1:
  dòng 1: header JSON UTF-8 kết thúc bằng '\\n'
          {"magic":"WCOV1","width":W,"height":H,"m":m,"nominal_looks":L|null,"byte_order":"LE"}
  payload: W*H*m*m số phức, mỗi số là cặp float64 little-endian (re, im),
           theo thứ tự pixel (row-major), mỗi pixel là ma trận m x m đầy đủ.
"""

import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from constants import (
    WCOV_BYTE_ORDER, WCOV_DTYPE, WCOV_HEADER_FIELDS, WCOV_MAGIC, WCOV_MAX_HEADER_BYTES,
)
from errors import (
    BadPixel, BoundsError, ConfigError, FormatError, NotPositiveDefinite, ShapeError, SizeError,
    TruncationError,
)
from hermitian_core import HermitianMatrix, MatrixSample, _check_hermitian, cholesky

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]


class CovarianceImage:
    """Ảnh PolSAR đa look: lưới height x width các ma trận Hermitian m x m"""

    def __init__(self, pixels: np.ndarray, nominal_looks: Optional[float] = None):
        data = np.array(pixels, dtype=np.complex128)
        if data.ndim != 4 or data.shape[2] != data.shape[3]:
            raise ShapeError(f"expected a height x width x m x m grid, got shape {data.shape}")
        height, width, m, _ = data.shape
        if height < 1 or width < 1 or m < 1:
            raise ShapeError(f"image dimensions must be positive, got shape {data.shape}")
        if nominal_looks is not None:
            nominal_looks = float(nominal_looks)
            if not math.isfinite(nominal_looks) or nominal_looks <= 0:
                raise ShapeError(f"nominal_looks must be positive, got {nominal_looks!r}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("pixel entries must be finite")
        _check_hermitian(data)
        data.setflags(write=False)
        self._pixels = data
        self.nominal_looks = nominal_looks
        self._bad_pixels: Optional[List[int]] = None

    @classmethod
    def from_sample(
        cls, sample: MatrixSample, width: int, height: int, nominal_looks: Optional[float] = None
    ) -> "CovarianceImage":
        """Xếp các quan sát của mẫu thành ảnh theo thứ tự row-major"""
        if sample.size != width * height:
            raise ShapeError(f"sample has {sample.size} matrices, image needs {width * height}")
        return cls(sample.stack.reshape(height, width, sample.m, sample.m), nominal_looks)

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def m(self) -> int:
        return self._pixels.shape[2]

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    def pixel(self, x: int, y: int) -> HermitianMatrix:
        return HermitianMatrix(self._pixels[y, x], check=False)

    def bad_pixels(self) -> List[int]:
        """Chỉ số phẳng (y*width + x) của các pixel không xác định dương"""
        if self._bad_pixels is None:
            flat = self._pixels.reshape(-1, self.m, self.m)
            bad = []
            for index, Z in enumerate(flat):
                try:
                    cholesky(HermitianMatrix(Z, check=False))
                except NotPositiveDefinite:
                    bad.append(index)
            if bad:
                logger.warning("image contains %d non-positive-definite pixels", len(bad))
            self._bad_pixels = bad
        return self._bad_pixels

    def header(self) -> Dict[str, object]:
        return {
            "magic": WCOV_MAGIC,
            "width": self.width,
            "height": self.height,
            "m": self.m,
            "nominal_looks": self.nominal_looks,
            "byte_order": WCOV_BYTE_ORDER,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CovarianceImage):
            return NotImplemented
        return (
            self.header() == other.header()
            and self._pixels.tobytes() == other._pixels.tobytes()
        )

    def __repr__(self) -> str:
        return (
            f"CovarianceImage(width={self.width}, height={self.height}, m={self.m}, "
            f"nominal_looks={self.nominal_looks})"
        )


@dataclass(frozen=True)
class RegionSpec:
    """Hình chữ nhật (x0, y0, w, h) trong ảnh"""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x0", "y0", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"region {name} must be an integer, got {value!r}")
        if self.w < 1 or self.h < 1:
            raise ConfigError(f"region must have w, h >= 1, got {self.w} x {self.h}")

    @classmethod
    def parse(cls, text: str) -> "RegionSpec":
        """'x0,y0,w,h'"""
        parts = text.split(",")
        if len(parts) != 4:
            raise ConfigError(f"region must be 'x0,y0,w,h', got {text!r}")
        try:
            x0, y0, w, h = (int(part) for part in parts)
        except ValueError:
            raise ConfigError(f"region must contain integers, got {text!r}") from None
        return cls(x0, y0, w, h)

    @classmethod
    def full(cls, image: CovarianceImage) -> "RegionSpec":
        return cls(0, 0, image.width, image.height)

    @property
    def size(self) -> int:
        return self.w * self.h


class CovarianceImageValidator:
    """Lớp kiểm tra tính hợp lệ của header WCOV1"""

    @staticmethod
    def validate_header(header: Dict[str, object]) -> List[str]:
        """Kiểm tra header và trả về danh sách lỗi"""
        errors = []

        missing = [name for name in WCOV_HEADER_FIELDS if name not in header]
        if missing:
            errors.append(f"missing header fields: {', '.join(missing)}")
        unknown = sorted(set(header) - set(WCOV_HEADER_FIELDS))
        if unknown:
            errors.append(f"unknown header fields: {', '.join(unknown)}")

        if header.get("magic") != WCOV_MAGIC:
            errors.append(f"bad magic {header.get('magic')!r} (expected {WCOV_MAGIC!r})")
        if header.get("byte_order") != WCOV_BYTE_ORDER:
            errors.append(f"unsupported byte order {header.get('byte_order')!r}")

        for name in ("width", "height", "m"):
            value = header.get(name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                errors.append(f"{name} must be a positive integer, got {value!r}")

        looks = header.get("nominal_looks")
        if looks is not None:
            if isinstance(looks, bool) or not isinstance(looks, (int, float)) or not looks > 0:
                errors.append(f"nominal_looks must be null or positive, got {looks!r}")

        return errors


class CovarianceImageParser:
    """Lớp phân tích nội dung file WCOV1"""

    @staticmethod
    def split_header(data: bytes) -> Dict[str, object]:
        newline = data.find(b"\n", 0, WCOV_MAX_HEADER_BYTES)
        if newline < 0:
            raise FormatError("WCOV1 header line not found (no newline in the first bytes)")
        try:
            header = json.loads(data[:newline].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"WCOV1 header is not valid JSON: {e}") from e
        if not isinstance(header, dict):
            raise FormatError("WCOV1 header must be a JSON object")
        header["_payload_offset"] = newline + 1
        return header

    @staticmethod
    def parse(data: bytes) -> CovarianceImage:
        header = CovarianceImageParser.split_header(data)
        offset = header.pop("_payload_offset")
        errors = CovarianceImageValidator.validate_header(header)
        if errors:
            raise FormatError("invalid WCOV1 header: " + "; ".join(errors))

        width, height, m = header["width"], header["height"], header["m"]
        expected = width * height * m * m * np.dtype(WCOV_DTYPE).itemsize
        payload = data[offset:]
        if len(payload) < expected:
            raise TruncationError(f"payload has {len(payload)} bytes, header declares {expected}")
        if len(payload) > expected:
            raise FormatError(
                f"payload has {len(payload)} bytes, more than the {expected} the header declares"
            )

        pixels = np.frombuffer(payload, dtype=WCOV_DTYPE).reshape(height, width, m, m)
        try:
            return CovarianceImage(pixels.astype(np.complex128), header["nominal_looks"])
        except ShapeError as e:
            raise FormatError(f"invalid pixel data: {e}") from e


class CovarianceImageWriter:
    """Lớp tạo nội dung file WCOV1"""

    @staticmethod
    def serialize(image: CovarianceImage) -> bytes:
        header = json.dumps(image.header(), separators=(",", ":")).encode("utf-8")
        payload = np.ascontiguousarray(image.pixels, dtype=WCOV_DTYPE).tobytes()
        return header + b"\n" + payload


def read_covariance_image(path: PathLike) -> CovarianceImage:
    """Đọc file WCOV1"""
    with open(path, "rb") as f:
        data = f.read()
    image = CovarianceImageParser.parse(data)
    logger.info("read %r from %s", image, path)
    return image


def write_covariance_image(image: CovarianceImage, path: PathLike) -> None:
    """Ghi file WCOV1"""
    with open(path, "wb") as f:
        f.write(CovarianceImageWriter.serialize(image))
    logger.info("wrote %r to %s", image, path)


def read_sigma(path: PathLike) -> HermitianMatrix:
    """Đọc ma trận hiệp phương sai từ file WCOV1 1 x 1"""
    image = read_covariance_image(path)
    if image.width != 1 or image.height != 1:
        raise FormatError(f"sigma file must hold a 1 x 1 image, got {image.width} x {image.height}")
    return image.pixel(0, 0)


def extract_region(image: CovarianceImage, region: RegionSpec) -> MatrixSample:
    """Trích các pixel của vùng thành mẫu theo thứ tự row-major"""
    if (
        region.x0 < 0 or region.y0 < 0
        or region.x0 + region.w > image.width
        or region.y0 + region.h > image.height
    ):
        raise BoundsError(f"region {region} outside image bounds {image.width} x {image.height}")

    bad = set(image.bad_pixels())
    if bad:
        for y in range(region.y0, region.y0 + region.h):
            for x in range(region.x0, region.x0 + region.w):
                if y * image.width + x in bad:
                    raise BadPixel(y * image.width + x)

    block = image.pixels[region.y0:region.y0 + region.h, region.x0:region.x0 + region.w]
    return MatrixSample.from_stack(block.reshape(-1, image.m, image.m), check=False)


def subsample_without_replacement(
    sample: MatrixSample, n: int, count: int, rng: np.random.Generator
) -> Iterator[MatrixSample]:
    """Sinh `count` mẫu con cỡ n; không hoàn lại trong mỗi mẫu con, độc lập giữa các mẫu con

    Tham số được kiểm tra ngay khi gọi, trước khi lấy phần tử đầu tiên.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise SizeError(f"subsample size must be a positive integer, got {n!r}")
    if n > sample.size:
        raise SizeError(f"subsample size {n} exceeds sample size {sample.size}")
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise SizeError(f"subsample count must be a positive integer, got {count!r}")
    return _subsamples(sample, int(n), int(count), rng)


def _subsamples(
    sample: MatrixSample, n: int, count: int, rng: np.random.Generator
) -> Iterator[MatrixSample]:
    for _ in range(count):
        yield sample.subset(rng.choice(sample.size, size=n, replace=False))
