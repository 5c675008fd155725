#!/usr/bin/env python3
"""
Constants and configuration for the ENL estimation toolkit
Các hằng số và cấu hình cho bộ công cụ ước lượng số look tương đương (ENL)
"""

import math

VERSION = "1.0.0"

# Built-in covariance matrix Sigma_0 (E-SAR, urban area), row-major.
# Phần tử dưới đường chéo là liên hợp của phần tử đối xứng.
SIGMA0_ROWS = [
    [962892 + 0j, 19171 - 3579j, -154638 + 191388j],
    [19171 + 3579j, 56707 + 0j, -5798 + 16812j],
    [-154638 - 191388j, -5798 - 16812j, 472251 + 0j],
]

# Monte Carlo defaults (simulation protocol)
DEFAULT_LOOKS_GRID = (4, 6, 8, 12)
DEFAULT_SAMPLE_SIZE_GRID = (9, 49, 121)
DEFAULT_REPLICATIONS = 5500
DEFAULT_SEED = 0

# Actual-data protocol defaults
DEFAULT_SUBSAMPLE_SIZES = (9, 36, 121, 144)
DEFAULT_SUBSAMPLE_COUNT = 5500

# Estimator identifiers, in the order reports list them
ESTIMATOR_NAMES = ("ML", "MM1", "MM2", "IML", "BN")

# Expected bias ordering, largest first
BIAS_ORDERING = ("MM1", "MM2", "ML", "BN", "IML")

# Solver defaults
DEFAULT_ABS_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_BRACKET_FLOOR_EPSILON = 1e-6
BRACKET_CAP = 1e6
DEGENERACY_THRESHOLD = 1e-12  # nhân với m
MOMENT_DENOMINATOR_RTOL = 1e-12

# Special functions
POLYGAMMA_MAX_ORDER = 2
POLYGAMMA_SHIFT_THRESHOLD = 10.0
LOG_PI = math.log(math.pi)

# Bernoulli numbers B_2, B_4, ..., B_16 for the asymptotic polygamma series
BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

# Linear algebra thresholds
PD_DIAGONAL_FACTOR = 1e-14  # nhân với m * max|entry|
HERMITIAN_RTOL = 1e-10
HERMITIAN_ATOL = 1e-12

# WCOV1 file format
WCOV_MAGIC = "WCOV1"
WCOV_BYTE_ORDER = "LE"
WCOV_DTYPE = "<c16"  # cặp float64 little-endian (re, im)
WCOV_HEADER_FIELDS = ("magic", "width", "height", "m", "nominal_looks", "byte_order")
WCOV_MAX_HEADER_BYTES = 4096

# Report formats
REPORT_FORMAT_VERSION = 1
CELL_CSV_COLUMNS = ("estimator", "L", "N", "mean", "mse", "cv", "bias", "failures")
# Bias table: L, N, then one bias_<estimator> column per estimator, then these
BIAS_CSV_COLUMNS = ("L", "N", "closed_form_ml", "ordering")
ESTIMATE_CSV_COLUMNS = (
    "estimator", "value", "converged", "iterations", "bias_applied", "residual", "N", "m",
)
CV_DEFINITION = "sample standard deviation (n-1) / sample mean"
FLOAT_FORMAT = ".10g"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3

# Environment variable for the default worker count
THREADS_ENV_VAR = "ENL_THREADS"

# Replications per worker task in the Monte Carlo runner
REPLICATION_CHUNK = 250
