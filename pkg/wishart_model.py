#!/usr/bin/env python3
"""
Scaled complex Wishart model
Phân phối Wishart phức có tỉ lệ: mật độ, log-likelihood, profile likelihood,
profile likelihood hiệu chỉnh Barndorff-Nielsen, ma trận thông tin quan sát
cho khối sigma, và bộ sinh mẫu.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from constants import SIGMA0_ROWS
from errors import DomainError, ShapeError
from hermitian_core import (
    HermitianMatrix, MatrixSample, cholesky, inverse, kron, log_det, trace, trace_product,
)
from special_functions import ln_multivariate_gamma

logger = logging.getLogger(__name__)

SAMPLING_METHODS = ("auto", "outer", "bartlett")


def builtin_sigma0() -> HermitianMatrix:
    """Ma trận hiệp phương sai Sigma_0 dựng sẵn (m = 3)"""
    return HermitianMatrix(SIGMA0_ROWS)


@dataclass(frozen=True)
class WishartParams:
    """Tham số (Sigma, L, m) của phân phối Wishart phức"""

    sigma: HermitianMatrix
    looks: float
    m: Optional[int] = None

    def __post_init__(self):
        sigma = HermitianMatrix(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        if self.m is None:
            object.__setattr__(self, "m", sigma.m)
        elif self.m != sigma.m:
            raise ShapeError(f"m = {self.m} does not match sigma dimension {sigma.m}")
        looks = float(self.looks)
        if not math.isfinite(looks) or not looks > self.m - 1:
            raise DomainError(f"looks must exceed m-1 = {self.m - 1}, got {self.looks!r}")
        object.__setattr__(self, "looks", looks)
        cholesky(sigma)

    @property
    def has_integer_looks(self) -> bool:
        return float(self.looks).is_integer()


def _check_dimension(m: int, params: WishartParams) -> None:
    if m != params.m:
        raise ShapeError(f"matrix dimension {m} does not match model dimension {params.m}")


def log_density(Zp: HermitianMatrix, params: WishartParams) -> float:
    """log f(Z'; Sigma, L)"""
    Zp = HermitianMatrix(Zp)
    _check_dimension(Zp.m, params)
    L, m = params.looks, params.m
    return (
        m * L * math.log(L)
        + (L - m) * log_det(Zp)
        - L * log_det(params.sigma)
        - ln_multivariate_gamma(L, m)
        - L * trace_product(inverse(params.sigma), Zp)
    )


def log_likelihood(sample: MatrixSample, params: WishartParams) -> float:
    """Log-likelihood đầy đủ của N quan sát, gồm hằng số -N m(m-1)/2 log(pi)"""
    _check_dimension(sample.m, params)
    L, m, N = params.looks, params.m, sample.size
    return (
        m * N * L * math.log(L)
        + (L - m) * float(np.sum(sample.log_dets))
        - L * N * log_det(params.sigma)
        - N * ln_multivariate_gamma(L, m)
        - N * L * trace_product(inverse(params.sigma), sample.mean)
    )


def _check_looks(L: float, m: int) -> float:
    L = float(L)
    if not math.isfinite(L) or not L > m - 1:
        raise DomainError(f"L must exceed m-1 = {m - 1}, got {L!r}")
    return L


def profile_log_likelihood(sample: MatrixSample, L: float) -> float:
    """Profile log-likelihood: Sigma thay bằng Z-bar"""
    m, N = sample.m, sample.size
    L = _check_looks(L, m)
    return (
        m * N * L * (math.log(L) - 1.0)
        + (L - m) * float(np.sum(sample.log_dets))
        - N * L * sample.log_det_mean
        - N * ln_multivariate_gamma(L, m)
    )


def bn_adjustment(sample: MatrixSample, L: float) -> float:
    """-1/2 log|J_sigma,sigma| = -(m^2/2)(log N + log L) - m log|Z-bar^-1|"""
    m, N = sample.m, sample.size
    L = _check_looks(L, m)
    # log|Z-bar^-1| = -log|Z-bar|
    return -0.5 * m * m * (math.log(N) + math.log(L)) + m * sample.log_det_mean


def bn_profile_log_likelihood(sample: MatrixSample, L: float) -> float:
    """Profile log-likelihood hiệu chỉnh Barndorff-Nielsen"""
    return profile_log_likelihood(sample, L) + bn_adjustment(sample, L)


@dataclass(frozen=True)
class ObservedInformation:
    """J_sigma,sigma = N L (Z-bar^-1 (x) Z-bar^-1) và log-det theo hai cách"""

    matrix: HermitianMatrix
    log_det: float
    log_det_closed_form: float


def observed_info_sigma(mean: HermitianMatrix, L: float, N: int) -> ObservedInformation:
    mean = HermitianMatrix(mean)
    if not L > 0:
        raise DomainError(f"L must be positive, got {L!r}")
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    m = mean.m
    mean_inverse = inverse(mean)
    matrix = HermitianMatrix(N * L * kron(mean_inverse, mean_inverse).entries, check=False)
    closed_form = m * m * (math.log(N) + math.log(L)) + 2 * m * log_det(mean_inverse)
    return ObservedInformation(matrix=matrix, log_det=log_det(matrix), log_det_closed_form=closed_form)


def expected_trace_moments(params: WishartParams) -> Tuple[float, float]:
    """(E tr Z, E tr(Z Z)) = (tr Sigma, tr(Sigma^2) + tr(Sigma)^2 / L)"""
    sigma_trace = trace(params.sigma)
    return sigma_trace, trace_product(params.sigma, params.sigma) + sigma_trace ** 2 / params.looks


def _standard_complex_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Phần thực và phần ảo độc lập, mỗi phần có phương sai 1/2"""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def _sample_outer(factor: np.ndarray, looks: int, n: int, rng: np.random.Generator) -> np.ndarray:
    m = factor.shape[0]
    w = _standard_complex_normal(rng, (n, looks, m))
    s = w @ factor.T  # mỗi hàng là A w_i
    return np.einsum("nli,nlj->nij", s, s.conj()) / looks


def _sample_bartlett(factor: np.ndarray, looks: float, n: int, rng: np.random.Generator) -> np.ndarray:
    m = factor.shape[0]
    T = np.zeros((n, m, m), dtype=np.complex128)
    for i in range(m):
        T[:, i, i] = np.sqrt(rng.gamma(looks - i, 1.0, size=n))
    rows, cols = np.tril_indices(m, k=-1)
    if rows.size:
        T[:, rows, cols] = _standard_complex_normal(rng, (n, rows.size))
    AT = factor @ T
    return AT @ np.conj(np.swapaxes(AT, 1, 2)) / looks


def sample(
    params: WishartParams, n: int, rng: np.random.Generator, method: str = "auto"
) -> MatrixSample:
    """Sinh n ma trận độc lập Z ~ W(Sigma, L)

    outer:    Z = L^-1 sum_{i=1}^{L} (A w_i)(A w_i)^H, A = cholesky(Sigma), L nguyên >= m
    bartlett: Z = L^-1 A T T^H A^H, phân tích Bartlett phức, L thực > m-1
    """
    if method not in SAMPLING_METHODS:
        raise DomainError(f"unknown sampling method {method!r}, expected one of {SAMPLING_METHODS}")
    if int(n) != n or n < 1:
        raise DomainError(f"number of draws must be a positive integer, got {n!r}")
    n = int(n)
    L, m = params.looks, params.m
    if method == "auto":
        method = "outer" if params.has_integer_looks and L >= m else "bartlett"
    factor = cholesky(params.sigma)
    if method == "outer":
        if not params.has_integer_looks or L < m:
            raise DomainError(f"outer-product sampling needs an integer L >= m = {m}, got {L!r}")
        stack = _sample_outer(factor, int(L), n, rng)
    else:
        stack = _sample_bartlett(factor, L, n, rng)
    logger.debug("sampled %d Wishart matrices (m=%d, L=%g, method=%s)", n, m, L, method)
    return MatrixSample.from_stack(stack, check=False)
