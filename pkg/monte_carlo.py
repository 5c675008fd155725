#!/usr/bin/env python3
"""
Monte Carlo experiment runner
Chạy thí nghiệm Monte Carlo có seed trên lưới (L, N), tính mean/MSE/CV/bias
cho từng bộ ước lượng, lập bảng độ chệch theo N và chạy giao thức dữ liệu
thực (lấy mẫu con không hoàn lại từ một vùng ảnh).

Mỗi replication r của ô (L_i, N_j) dùng luồng ngẫu nhiên riêng
SeedSequence(seed, spawn_key=(i, j, r)), nên kết quả không phụ thuộc số
thread. Mọi bộ ước lượng chạy trên cùng một mẫu (thiết kế ghép cặp).
"""

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, IO, List, Optional, Sequence, Tuple

import numpy as np

from constants import (
    BIAS_CSV_COLUMNS, BIAS_ORDERING, CELL_CSV_COLUMNS, CV_DEFINITION, DEFAULT_LOOKS_GRID,
    DEFAULT_REPLICATIONS, DEFAULT_SAMPLE_SIZE_GRID, DEFAULT_SEED, ESTIMATOR_NAMES,
    FLOAT_FORMAT, REPLICATION_CHUNK, REPORT_FORMAT_VERSION, THREADS_ENV_VAR, VERSION,
)
from errors import ConfigError, DataError, EmptyCell, SizeError, SolverFailure
from estimators import (
    EstimatorId, SolverOptions, cox_snell_bias, estimate, estimate_L_iml, estimate_L_ml,
)
from hermitian_core import HermitianMatrix, MatrixSample
from polsar_io import subsample_without_replacement
from wishart_model import SAMPLING_METHODS, WishartParams, builtin_sigma0, sample

logger = logging.getLogger(__name__)

DrawFunction = Callable[[int, int, int], MatrixSample]


def format_float(value: float) -> str:
    if value is None or math.isnan(value):
        return ""
    return format(value, FLOAT_FORMAT)


def _estimator_name(estimator) -> str:
    if isinstance(estimator, EstimatorId):
        return estimator.value
    return EstimatorId.parse(estimator).value


def _json_float(value: float) -> Optional[float]:
    return None if value is None or math.isnan(value) else float(value)


def _sigma_to_json(sigma: HermitianMatrix) -> List[List[List[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in sigma.entries]


def resolve_threads(requested: Optional[int] = None) -> int:
    """Số worker: --threads > biến môi trường ENL_THREADS > os.cpu_count()"""
    if requested is None:
        env = os.environ.get(THREADS_ENV_VAR, "").strip()
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from None
        else:
            requested = os.cpu_count() or 1
    if isinstance(requested, bool) or int(requested) != requested or requested < 1:
        raise ConfigError(f"thread count must be a positive integer, got {requested!r}")
    return int(requested)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Cấu hình thí nghiệm mô phỏng; mặc định là lưới L x N chuẩn với Sigma_0"""

    sigma: HermitianMatrix = field(default_factory=builtin_sigma0)
    looks_grid: Tuple[float, ...] = DEFAULT_LOOKS_GRID
    sample_size_grid: Tuple[int, ...] = DEFAULT_SAMPLE_SIZE_GRID
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    estimators: Tuple[EstimatorId, ...] = tuple(EstimatorId(name) for name in ESTIMATOR_NAMES)
    solver: SolverOptions = field(default_factory=SolverOptions)
    sampling_method: str = "auto"

    def __post_init__(self):
        sigma = HermitianMatrix(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        m = sigma.m

        looks = tuple(float(L) for L in self.looks_grid)
        if not looks:
            raise ConfigError("looks grid is empty")
        for L in looks:
            if not math.isfinite(L) or L < m:
                raise ConfigError(f"every L in the looks grid must be >= m = {m}, got {L:g}")
        object.__setattr__(self, "looks_grid", looks)

        sizes = tuple(self.sample_size_grid)
        if not sizes:
            raise ConfigError("sample size grid is empty")
        for N in sizes:
            if isinstance(N, bool) or int(N) != N or N < 1:
                raise ConfigError(f"sample sizes must be positive integers, got {N!r}")
        object.__setattr__(self, "sample_size_grid", tuple(int(N) for N in sizes))

        if len(set(looks)) != len(looks) or len(set(sizes)) != len(sizes):
            raise ConfigError("grids must not contain duplicate values")

        if isinstance(self.replications, bool) or int(self.replications) != self.replications \
                or self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications!r}")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")

        ids = tuple(EstimatorId.coerce(e) for e in self.estimators)
        if not ids or len(set(ids)) != len(ids):
            raise ConfigError("estimator list must be non-empty without duplicates")
        object.__setattr__(self, "estimators", ids)

        if self.sampling_method not in SAMPLING_METHODS:
            raise ConfigError(f"sampling method must be one of {SAMPLING_METHODS}")

    @property
    def m(self) -> int:
        return self.sigma.m

    def as_dict(self) -> Dict[str, object]:
        return {
            "protocol": "simulation",
            "sigma": _sigma_to_json(self.sigma),
            "m": self.m,
            "looks_grid": list(self.looks_grid),
            "sample_size_grid": list(self.sample_size_grid),
            "replications": self.replications,
            "seed": self.seed,
            "estimators": [e.value for e in self.estimators],
            "sampling_method": self.sampling_method,
            "solver": {
                "abs_tolerance": self.solver.abs_tolerance,
                "max_iterations": self.solver.max_iterations,
                "bracket_floor_epsilon": self.solver.bracket_floor_epsilon,
            },
        }


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    mean: float
    mse: float
    cv: float
    bias: float
    count: int


def metrics(estimates: Sequence[float], true_L: float) -> Metrics:
    """mean, MSE quanh true_L, CV = sd(n-1)/mean, bias = mean - true_L

    Một replication duy nhất cho CV = 0.
    """
    values = np.asarray(estimates, dtype=np.float64)
    if values.size == 0:
        raise EmptyCell("no successful replications to summarize")
    mean = float(values.mean())
    mse = float(np.mean((values - true_L) ** 2))
    cv = float(values.std(ddof=1) / mean) if values.size > 1 else 0.0
    return Metrics(mean=mean, mse=mse, cv=abs(cv), bias=mean - true_L, count=int(values.size))


@dataclass(frozen=True)
class CellMetrics:
    """Kết quả của một bộ ước lượng trên một ô (L, N)"""

    estimator_id: EstimatorId
    true_L: float
    N: int
    mean: float
    mse: float
    cv: float
    bias: float
    failures: int
    successes: int

    @property
    def key(self) -> Tuple[str, float, int]:
        return self.estimator_id.value, self.true_L, self.N

    def as_row(self) -> Dict[str, str]:
        return {
            "estimator": self.estimator_id.value,
            "L": format_float(self.true_L),
            "N": str(self.N),
            "mean": format_float(self.mean),
            "mse": format_float(self.mse),
            "cv": format_float(self.cv),
            "bias": format_float(self.bias),
            "failures": str(self.failures),
        }

    def as_dict(self) -> Dict[str, object]:
        return {
            "estimator": self.estimator_id.value,
            "L": self.true_L,
            "N": self.N,
            "mean": _json_float(self.mean),
            "mse": _json_float(self.mse),
            "cv": _json_float(self.cv),
            "bias": _json_float(self.bias),
            "failures": self.failures,
            "successes": self.successes,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """Bảng kết quả: một CellMetrics cho mỗi bộ (estimator, L, N)"""

    config: Dict[str, object]
    cells: Tuple[CellMetrics, ...]
    wall_time: float
    version: str = VERSION

    def __post_init__(self):
        keys = [cell.key for cell in self.cells]
        if len(set(keys)) != len(keys):
            raise ConfigError("report has more than one cell per (estimator, L, N)")

    def cell(self, estimator: str, L: float, N: int) -> CellMetrics:
        key = (_estimator_name(estimator), float(L), int(N))
        for cell in self.cells:
            if cell.key == key:
                return cell
        raise KeyError(f"no cell for estimator={key[0]}, L={L:g}, N={N}")

    @property
    def estimators(self) -> Tuple[EstimatorId, ...]:
        seen: List[EstimatorId] = []
        for cell in self.cells:
            if cell.estimator_id not in seen:
                seen.append(cell.estimator_id)
        return tuple(seen)

    @property
    def looks(self) -> Tuple[float, ...]:
        return tuple(sorted({cell.true_L for cell in self.cells}))

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(sorted({cell.N for cell in self.cells}))

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.DictWriter(stream, fieldnames=CELL_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for cell in self.cells:
            writer.writerow(cell.as_row())

    def as_dict(self) -> Dict[str, object]:
        return {
            "kind": "experiment",
            "format_version": REPORT_FORMAT_VERSION,
            "version": self.version,
            "cv_definition": CV_DEFINITION,
            "config": self.config,
            "wall_time": self.wall_time,
            "cells": [cell.as_dict() for cell in self.cells],
        }

    def to_json(self, stream: IO[str]) -> None:
        json.dump(self.as_dict(), stream, indent=2)
        stream.write("\n")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def _estimate_paired(
    sample_: MatrixSample, estimator_ids: Sequence[EstimatorId], opts: SolverOptions
) -> np.ndarray:
    """Giá trị của từng bộ ước lượng trên cùng một mẫu; NaN nếu thất bại"""
    values = np.full(len(estimator_ids), np.nan)
    ml_result = None
    ml_error: Optional[Exception] = None
    for k, estimator_id in enumerate(estimator_ids):
        try:
            if estimator_id in (EstimatorId.ML, EstimatorId.IML):
                if ml_error is not None:
                    raise ml_error
                if ml_result is None:
                    try:
                        ml_result = estimate_L_ml(sample_, opts)
                    except (DataError, SolverFailure) as e:
                        ml_error = e
                        raise
                if estimator_id is EstimatorId.ML:
                    result = ml_result
                else:
                    result = estimate_L_iml(sample_, opts, ml_result)
            else:
                result = estimate(sample_, estimator_id, opts)
        except (DataError, SolverFailure) as e:
            logger.debug("replication failure for %s: %s", estimator_id.value, e)
            continue
        values[k] = result.value
    return values


def _run_grid(
    n_looks: int,
    n_sizes: int,
    replications: int,
    estimator_ids: Sequence[EstimatorId],
    opts: SolverOptions,
    draw: DrawFunction,
    threads: int,
) -> np.ndarray:
    """Buffer kết quả [L-index, N-index, estimator, replication]"""
    values = np.full((n_looks, n_sizes, len(estimator_ids), replications), np.nan)
    tasks = [
        (li, ni, start, min(start + REPLICATION_CHUNK, replications))
        for li in range(n_looks)
        for ni in range(n_sizes)
        for start in range(0, replications, REPLICATION_CHUNK)
    ]

    def work(task: Tuple[int, int, int, int]) -> None:
        li, ni, start, stop = task
        for r in range(start, stop):
            try:
                drawn = draw(li, ni, r)
            except DataError as e:
                logger.debug("replication %d of cell (%d, %d) could not be drawn: %s", r, li, ni, e)
                continue
            values[li, ni, :, r] = _estimate_paired(drawn, estimator_ids, opts)

    logger.info("running %d tasks on %d thread(s)", len(tasks), threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(work, task) for task in tasks]
        for future in futures:
            future.result()
    return values


def _aggregate(
    values: np.ndarray,
    looks: Sequence[float],
    sizes: Sequence[int],
    estimator_ids: Sequence[EstimatorId],
) -> Tuple[CellMetrics, ...]:
    cells = []
    replications = values.shape[-1]
    for k, estimator_id in enumerate(estimator_ids):
        for li, L in enumerate(looks):
            for ni, N in enumerate(sizes):
                row = values[li, ni, k]
                ok = row[~np.isnan(row)]
                failures = replications - ok.size
                try:
                    summary = metrics(ok, L)
                    mean, mse, cv, bias = summary.mean, summary.mse, summary.cv, summary.bias
                except EmptyCell:
                    logger.warning(
                        "%s failed on every replication at L=%g, N=%d", estimator_id.value, L, N
                    )
                    mean = mse = cv = bias = float("nan")
                if failures:
                    logger.info(
                        "%s at L=%g, N=%d: %d of %d replications failed",
                        estimator_id.value, L, N, failures, replications,
                    )
                cells.append(CellMetrics(
                    estimator_id=estimator_id,
                    true_L=float(L),
                    N=int(N),
                    mean=mean,
                    mse=mse,
                    cv=cv,
                    bias=bias,
                    failures=int(failures),
                    successes=int(ok.size),
                ))
    return tuple(cells)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Chạy giao thức mô phỏng trên toàn lưới (L, N)"""
    threads = resolve_threads(threads)
    params = [WishartParams(config.sigma, L) for L in config.looks_grid]

    def draw(li: int, ni: int, r: int) -> MatrixSample:
        rng = _stream(config.seed, li, ni, r)
        return sample(params[li], config.sample_size_grid[ni], rng, config.sampling_method)

    started = time.perf_counter()
    values = _run_grid(
        len(config.looks_grid), len(config.sample_size_grid), config.replications,
        config.estimators, config.solver, draw, threads,
    )
    cells = _aggregate(
        values, config.looks_grid, config.sample_size_grid, config.estimators,
    )
    wall_time = time.perf_counter() - started
    logger.info("experiment finished: %d cells in %.2fs", len(cells), wall_time)
    return ExperimentReport(config=config.as_dict(), cells=cells, wall_time=wall_time)


def run_subsample_experiment(
    sample_: MatrixSample,
    sizes: Sequence[int],
    count: int,
    seed: int,
    reference_looks: float,
    estimators: Sequence[EstimatorId] = tuple(EstimatorId(name) for name in ESTIMATOR_NAMES),
    opts: Optional[SolverOptions] = None,
    threads: Optional[int] = None,
) -> ExperimentReport:
    """Giao thức dữ liệu thực: `count` mẫu con cỡ n cho mỗi n trong `sizes`

    Metrics được tính so với reference_looks (thường là số look danh định của ảnh).
    """
    opts = opts or SolverOptions()
    threads = resolve_threads(threads)
    sizes = tuple(sizes)
    if not sizes:
        raise ConfigError("subsample size list is empty")
    for n in sizes:
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ConfigError(f"subsample sizes must be positive integers, got {n!r}")
        if n > sample_.size:
            raise SizeError(f"subsample size {n} exceeds region size {sample_.size}")
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise ConfigError(f"subsample count must be >= 1, got {count!r}")
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    reference_looks = float(reference_looks)
    if not math.isfinite(reference_looks) or reference_looks <= 0:
        raise ConfigError(f"reference looks must be positive, got {reference_looks!r}")
    estimator_ids = tuple(EstimatorId.coerce(e) for e in estimators)

    def draw(li: int, ni: int, r: int) -> MatrixSample:
        rng = _stream(seed, ni, r)
        return next(subsample_without_replacement(sample_, sizes[ni], 1, rng))

    started = time.perf_counter()
    values = _run_grid(1, len(sizes), int(count), estimator_ids, opts, draw, threads)
    cells = _aggregate(values, (reference_looks,), sizes, estimator_ids)
    wall_time = time.perf_counter() - started
    config = {
        "protocol": "subsample",
        "region_size": sample_.size,
        "m": sample_.m,
        "subsample_sizes": [int(n) for n in sizes],
        "count": int(count),
        "seed": int(seed),
        "reference_looks": reference_looks,
        "estimators": [e.value for e in estimator_ids],
    }
    logger.info("subsample experiment finished: %d cells in %.2fs", len(cells), wall_time)
    return ExperimentReport(config=config, cells=cells, wall_time=wall_time)


# ---------------------------------------------------------------------------
# Bias table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiasRow:
    L: float
    N: int
    biases: Dict[str, float]
    closed_form_ml: float
    ordering_holds: Optional[bool]


def _ordering_verdict(biases: Dict[str, float]) -> Optional[bool]:
    """B(MM1) >= B(MM2) >= B(ML) >= B(BN) >= B(IML); None khi thiếu bộ ước lượng"""
    if any(name not in biases or math.isnan(biases[name]) for name in BIAS_ORDERING):
        return None
    chain = [biases[name] for name in BIAS_ORDERING]
    return all(a >= b for a, b in zip(chain, chain[1:]))


@dataclass(frozen=True)
class BiasTable:
    """Độ chệch thực nghiệm theo N cho từng bộ ước lượng, kèm B(L) dạng đóng của ML"""

    estimators: Tuple[str, ...]
    rows: Tuple[BiasRow, ...]

    def series(self, estimator: str, L: float) -> List[Tuple[int, float]]:
        """[(N, bias)] theo thứ tự N tăng dần"""
        name = _estimator_name(estimator)
        return [(row.N, row.biases[name]) for row in self.rows if row.L == float(L)]

    def to_csv(self, stream: IO[str]) -> None:
        columns = list(BIAS_CSV_COLUMNS[:2]) + [f"bias_{name}" for name in self.estimators] \
            + list(BIAS_CSV_COLUMNS[2:])
        writer = csv.DictWriter(stream, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            record = {"L": format_float(row.L), "N": str(row.N)}
            for name in self.estimators:
                record[f"bias_{name}"] = format_float(row.biases[name])
            record["closed_form_ml"] = format_float(row.closed_form_ml)
            record["ordering"] = "" if row.ordering_holds is None else str(row.ordering_holds).lower()
            writer.writerow(record)

    def as_dict(self) -> Dict[str, object]:
        return {
            "kind": "bias_table",
            "format_version": REPORT_FORMAT_VERSION,
            "version": VERSION,
            "estimators": list(self.estimators),
            "rows": [
                {
                    "L": row.L,
                    "N": row.N,
                    "biases": {name: _json_float(value) for name, value in row.biases.items()},
                    "closed_form_ml": _json_float(row.closed_form_ml),
                    "ordering": row.ordering_holds,
                }
                for row in self.rows
            ],
        }

    def to_json(self, stream: IO[str]) -> None:
        json.dump(self.as_dict(), stream, indent=2)
        stream.write("\n")


def bias_table(report: ExperimentReport) -> BiasTable:
    """Chuỗi độ chệch theo N cho từng (estimator, L) và kết luận về thứ tự độ chệch"""
    names = tuple(e.value for e in report.estimators)
    m = int(report.config.get("m", 0))
    if len(report.sizes) < 2:
        logger.info("report covers a single sample size; each series has one point")
    rows = []
    for L in report.looks:
        for N in report.sizes:
            biases = {name: report.cell(name, L, N).bias for name in names}
            try:
                closed_form = cox_snell_bias(L, m, N) if m else float("nan")
            except DataError:
                closed_form = float("nan")
            verdict = _ordering_verdict(biases)
            if verdict is False:
                logger.info("bias ordering does not hold at L=%g, N=%d", L, N)
            rows.append(BiasRow(L=L, N=N, biases=biases, closed_form_ml=closed_form, ordering_holds=verdict))
    return BiasTable(estimators=names, rows=tuple(rows))
