#!/usr/bin/env python3
"""
ENL estimators for the scaled complex Wishart distribution
Các bộ ước lượng số look tương đương: ML, MM1, MM2, IML (Cox-Snell) và BN

ML và BN là nghiệm của phương trình score, giải bằng Newton-Raphson có
bảo vệ (bracket + bisection). IML = L_ML - B(L_ML) với B là độ chệch bậc
hai dạng đóng.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from constants import (
    BRACKET_CAP, DEFAULT_ABS_TOLERANCE, DEFAULT_BRACKET_FLOOR_EPSILON, DEFAULT_MAX_ITERATIONS,
    DEGENERACY_THRESHOLD, MOMENT_DENOMINATOR_RTOL,
)
from errors import ConfigError, DegenerateSample, DomainError, SolverFailure
from hermitian_core import HermitianMatrix, MatrixSample, inverse, kron, trace, trace_product
from special_functions import multivariate_polygamma

logger = logging.getLogger(__name__)


class EstimatorId(str, Enum):
    """Định danh bộ ước lượng"""

    ML = "ML"
    MM1 = "MM1"
    MM2 = "MM2"
    IML = "IML"
    BN = "BN"

    @classmethod
    def parse(cls, text: str) -> "EstimatorId":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ConfigError(
                f"unknown estimator {text!r}, expected one of {', '.join(e.value for e in cls)}"
            ) from None

    @classmethod
    def coerce(cls, value: Union["EstimatorId", str]) -> "EstimatorId":
        """Chấp nhận EstimatorId hoặc tên không phân biệt hoa thường"""
        if isinstance(value, cls):
            return value
        if not isinstance(value, str):
            raise ConfigError(f"estimator must be a name, got {value!r}")
        return cls.parse(value)

    @classmethod
    def parse_list(cls, text: str) -> Tuple["EstimatorId", ...]:
        ids = tuple(cls.parse(part) for part in text.split(",") if part.strip())
        if not ids:
            raise ConfigError("estimator list is empty")
        if len(set(ids)) != len(ids):
            raise ConfigError(f"estimator list has duplicates: {text!r}")
        return ids


@dataclass(frozen=True)
class SolverOptions:
    """Tùy chọn cho Newton-Raphson có bảo vệ"""

    abs_tolerance: float = DEFAULT_ABS_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    bracket_floor_epsilon: float = DEFAULT_BRACKET_FLOOR_EPSILON

    def __post_init__(self):
        if not self.abs_tolerance > 0:
            raise ConfigError(f"abs_tolerance must be positive, got {self.abs_tolerance!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if not self.bracket_floor_epsilon > 0:
            raise ConfigError(
                f"bracket_floor_epsilon must be positive, got {self.bracket_floor_epsilon!r}"
            )


@dataclass(frozen=True)
class EstimateResult:
    """Kết quả một lần ước lượng L"""

    estimator_id: EstimatorId
    value: float
    converged: bool
    iterations: int = 0
    bias_applied: float = 0.0
    residual: float = 0.0
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> Dict[str, object]:
        return {
            "estimator": self.estimator_id.value,
            "value": self.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "bias_applied": self.bias_applied,
            "residual": self.residual,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class CumulantSet:
    """Các cumulant dạng đóng của log-likelihood Wishart theo L"""

    L: float
    m: int
    N: int
    kappa_LL_inv: float
    kappa_LLL: float
    kappa_LL_dL: float
    kappa_sigma_block_trace: float
    U_LL: float

    def bias(self) -> float:
        """Độ chệch bậc hai tổng quát, ghép lại từ các cumulant

        B = (k^{L,L})^2 (k_LL^(L) - k_LLL / 2) + k^{L,L} * contraction / (2L)
        """
        first = self.kappa_LL_inv ** 2 * (self.kappa_LL_dL - 0.5 * self.kappa_LLL)
        second = self.kappa_LL_inv * self.kappa_sigma_block_trace / (2.0 * self.L)
        return first + second


# ---------------------------------------------------------------------------
# Sigma
# ---------------------------------------------------------------------------

def estimate_sigma_ml(sample: MatrixSample) -> HermitianMatrix:
    """Sigma_ML = Z-bar (không chệch)"""
    return sample.mean


# ---------------------------------------------------------------------------
# Score functions
# ---------------------------------------------------------------------------

def _check_looks(L: float, m: int) -> float:
    L = float(L)
    if not math.isfinite(L) or not L > m - 1:
        raise DomainError(f"L must exceed m-1 = {m - 1}, got {L!r}")
    return L


def _score(m: int, deficiency: float, L: float) -> float:
    return m * math.log(L) - deficiency - multivariate_polygamma(0, L, m)


def _score_derivative(m: int, L: float) -> float:
    return m / L - multivariate_polygamma(1, L, m)


def score_ml(sample: MatrixSample, L: float) -> float:
    """g(L) = m log L + N^-1 sum log|Z_k| - log|Z-bar| - psi_m^(0)(L)"""
    L = _check_looks(L, sample.m)
    return _score(sample.m, sample.deficiency, L)


def score_ml_derivative(sample: MatrixSample, L: float) -> float:
    """g'(L) = m/L - psi_m^(1)(L)"""
    L = _check_looks(L, sample.m)
    return _score_derivative(sample.m, L)


def bn_score(sample: MatrixSample, L: float) -> float:
    """g(L) - m^2 / (2 N L)"""
    L = _check_looks(L, sample.m)
    m = sample.m
    return _score(m, sample.deficiency, L) - m * m / (2.0 * sample.size * L)


# ---------------------------------------------------------------------------
# Safeguarded Newton-Raphson
# ---------------------------------------------------------------------------

@dataclass
class _Root:
    value: float
    iterations: int
    residual: float
    notes: Tuple[str, ...]


def _solve_decreasing(
    f: Callable[[float], float],
    df: Callable[[float], float],
    m: int,
    start: Optional[float],
    opts: SolverOptions,
) -> _Root:
    """Nghiệm duy nhất của hàm giảm f trên (m-1, inf)

    Bracket [m-1+eps, hi], hi nhân đôi từ max(2m, 2 L0) cho đến khi f(hi) < 0.
    Bước Newton bị loại nếu rơi ra ngoài bracket; khi đó dùng bisection.
    """
    lo = m - 1 + opts.bracket_floor_epsilon * max(1, m)
    f_lo = f(lo)
    if not f_lo > 0:
        raise SolverFailure("score is not positive at the bracket floor", 0, lo, f_lo, (lo, lo))

    anchor = start if start is not None and math.isfinite(start) and start > lo else float(m)
    hi = max(2.0 * m, 2.0 * anchor)
    f_hi = f(hi)
    while f_hi >= 0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise DegenerateSample(
                f"score stays non-negative up to L = {BRACKET_CAP:g}; the estimate diverges"
            )
        f_hi = f(hi)

    if start is not None and math.isfinite(start) and lo < start < hi:
        x, notes = float(start), ("newton-start:mm2",)
    else:
        x, notes = 0.5 * (lo + hi), ("newton-start:midpoint",)

    fx = f(x)
    iterations = 0
    while abs(fx) > opts.abs_tolerance:
        if iterations >= opts.max_iterations:
            raise SolverFailure("Newton-Raphson did not converge", iterations, x, fx, (lo, hi))
        if fx > 0:
            lo = x
        else:
            hi = x
        slope = df(x)
        candidate = x - fx / slope if slope < 0 else float("nan")
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if candidate == x:
            # Bracket đã co về độ phân giải của float
            raise SolverFailure("bracket collapsed before reaching tolerance", iterations, x, fx, (lo, hi))
        x = candidate
        fx = f(x)
        iterations += 1

    logger.debug("root L=%.12g after %d iterations (residual %.3g)", x, iterations, fx)
    return _Root(x, iterations, fx, notes)


def _check_not_degenerate(sample: MatrixSample) -> float:
    deficiency = sample.deficiency
    if deficiency < DEGENERACY_THRESHOLD * sample.m:
        raise DegenerateSample(
            f"log-det deficiency a = {deficiency:.3g} is zero: all observations are equal "
            f"(or N = 1) and the likelihood estimate of L diverges"
        )
    return deficiency


def _newton_start(sample: MatrixSample) -> Optional[float]:
    try:
        return estimate_L_mm2(sample).value
    except DegenerateSample:
        return None


def estimate_L_ml(sample: MatrixSample, opts: Optional[SolverOptions] = None) -> EstimateResult:
    """Nghiệm của g(L) = 0"""
    opts = opts or SolverOptions()
    deficiency = _check_not_degenerate(sample)
    m = sample.m
    root = _solve_decreasing(
        lambda L: _score(m, deficiency, L),
        lambda L: _score_derivative(m, L),
        m, _newton_start(sample), opts,
    )
    return EstimateResult(EstimatorId.ML, root.value, True, root.iterations, 0.0, root.residual, root.notes)


def estimate_L_bn(sample: MatrixSample, opts: Optional[SolverOptions] = None) -> EstimateResult:
    """Nghiệm của g(L) - m^2/(2NL) = 0 (profile likelihood hiệu chỉnh)"""
    opts = opts or SolverOptions()
    deficiency = _check_not_degenerate(sample)
    m, N = sample.m, sample.size
    shift = m * m / (2.0 * N)
    root = _solve_decreasing(
        lambda L: _score(m, deficiency, L) - shift / L,
        lambda L: _score_derivative(m, L) + shift / (L * L),
        m, _newton_start(sample), opts,
    )
    return EstimateResult(EstimatorId.BN, root.value, True, root.iterations, 0.0, root.residual, root.notes)


# ---------------------------------------------------------------------------
# Trace moment estimators
# ---------------------------------------------------------------------------

def _moment_ratio(numerator: float, second_moment: float, subtracted: float, name: EstimatorId) -> float:
    denominator = second_moment - subtracted
    if not denominator > MOMENT_DENOMINATOR_RTOL * abs(second_moment):
        raise DegenerateSample(f"{name.value}: non-positive moment denominator ({denominator:.3g})")
    return numerator / denominator


def estimate_L_mm1(sample: MatrixSample) -> EstimateResult:
    """tr(Z-bar Z-bar) / (N^-1 sum tr(Z_i)^2 - tr(Z-bar)^2)"""
    if sample.size < 2:
        raise DegenerateSample("MM1 needs at least two observations")
    mean_trace = trace(sample.mean)
    value = _moment_ratio(
        trace_product(sample.mean, sample.mean),
        float((sample.traces ** 2).mean()),
        mean_trace ** 2,
        EstimatorId.MM1,
    )
    return EstimateResult(EstimatorId.MM1, value, True)


def estimate_L_mm2(sample: MatrixSample) -> EstimateResult:
    """tr(Z-bar)^2 / (N^-1 sum tr(Z_i Z_i) - tr(Z-bar Z-bar))"""
    if sample.size < 2:
        raise DegenerateSample("MM2 needs at least two observations")
    value = _moment_ratio(
        trace(sample.mean) ** 2,
        float(sample.squared_traces.mean()),
        trace_product(sample.mean, sample.mean),
        EstimatorId.MM2,
    )
    return EstimateResult(EstimatorId.MM2, value, True)


# ---------------------------------------------------------------------------
# Cox-Snell correction
# ---------------------------------------------------------------------------

def _check_bias_args(L: float, m: int, N: int) -> float:
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    return _check_looks(L, m)


def cox_snell_bias(L: float, m: int, N: int) -> float:
    """B(L) = m^2 / (2NL d) - (m/L^2 + psi_m^(2)(L)) / (2N d^2), d = psi_m^(1)(L) - m/L"""
    L = _check_bias_args(L, m, N)
    d = multivariate_polygamma(1, L, m) - m / L
    if not d > 0:
        raise DomainError(f"psi_m^(1)(L) - m/L = {d:.3g} must be positive")
    return m * m / (2.0 * N * L * d) - (m / L ** 2 + multivariate_polygamma(2, L, m)) / (2.0 * N * d * d)


def kronecker_contraction(sigma: HermitianMatrix) -> float:
    """sum_ij (S (x) S)_ij conj(((S (x) S)^-1)_ij) với S = Sigma; bằng m^2"""
    block = kron(sigma, sigma)
    return trace_product(block, inverse(block))


def cumulants(L: float, m: int, N: int, sigma: Optional[HermitianMatrix] = None) -> CumulantSet:
    L = _check_bias_args(L, m, N)
    m, N = int(m), int(N)
    trigamma_sum = multivariate_polygamma(1, L, m)
    third = -N * (m / L ** 2 + multivariate_polygamma(2, L, m))
    contraction = float(m * m) if sigma is None else kronecker_contraction(sigma)
    return CumulantSet(
        L=L,
        m=m,
        N=N,
        kappa_LL_inv=1.0 / (N * (trigamma_sum - m / L)),
        kappa_LLL=third,
        kappa_LL_dL=third,
        kappa_sigma_block_trace=contraction,
        U_LL=N * m / L - N * trigamma_sum,
    )


def estimate_L_iml(
    sample: MatrixSample,
    opts: Optional[SolverOptions] = None,
    ml_result: Optional[EstimateResult] = None,
) -> EstimateResult:
    """L_IML = L_ML - B(L_ML)"""
    ml = ml_result if ml_result is not None else estimate_L_ml(sample, opts)
    bias = cox_snell_bias(ml.value, sample.m, sample.size)
    value = ml.value - bias
    notes = ml.notes
    if value <= sample.m - 1:
        logger.debug("IML estimate %.6g falls below the support m-1 = %d", value, sample.m - 1)
        notes = notes + ("below-support",)
    return EstimateResult(EstimatorId.IML, value, ml.converged, ml.iterations, bias, ml.residual, notes)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def estimate(
    sample: MatrixSample, estimator_id: EstimatorId, opts: Optional[SolverOptions] = None
) -> EstimateResult:
    estimator_id = EstimatorId.coerce(estimator_id)
    if estimator_id is EstimatorId.ML:
        return estimate_L_ml(sample, opts)
    if estimator_id is EstimatorId.MM1:
        return estimate_L_mm1(sample)
    if estimator_id is EstimatorId.MM2:
        return estimate_L_mm2(sample)
    if estimator_id is EstimatorId.IML:
        return estimate_L_iml(sample, opts)
    return estimate_L_bn(sample, opts)


def estimate_all(
    sample: MatrixSample,
    estimator_ids: Iterable[EstimatorId],
    opts: Optional[SolverOptions] = None,
) -> List[EstimateResult]:
    """Chạy nhiều bộ ước lượng trên cùng một mẫu; IML dùng lại nghiệm ML

    Lỗi của một bộ ước lượng được ném ra ngay (kèm tên bộ ước lượng ở log).
    """
    results: List[EstimateResult] = []
    ml_result: Optional[EstimateResult] = None
    for estimator_id in estimator_ids:
        estimator_id = EstimatorId.coerce(estimator_id)
        try:
            if estimator_id is EstimatorId.ML or (estimator_id is EstimatorId.IML and ml_result is None):
                ml_result = estimate_L_ml(sample, opts)
            if estimator_id is EstimatorId.ML:
                result = ml_result
            elif estimator_id is EstimatorId.IML:
                result = estimate_L_iml(sample, opts, ml_result)
            else:
                result = estimate(sample, estimator_id, opts)
        except (DegenerateSample, SolverFailure, DomainError) as e:
            logger.error("estimator %s failed: %s", estimator_id.value, e)
            raise
        results.append(result)
    return results
