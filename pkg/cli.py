#!/usr/bin/env python3
"""
Command Line Interface for the ENL estimation toolkit
Giao diện dòng lệnh: simulate, estimate, bias, sample

Exit code: 0 thành công, 1 lỗi cú pháp/cấu hình, 2 lỗi dữ liệu, 3 solver không hội tụ.
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from typing import Callable, IO, Iterator, List, Optional, Sequence

import numpy as np

from constants import (
    DEFAULT_ABS_TOLERANCE, DEFAULT_LOOKS_GRID, DEFAULT_MAX_ITERATIONS, DEFAULT_REPLICATIONS,
    DEFAULT_SAMPLE_SIZE_GRID, DEFAULT_SEED, DEFAULT_SUBSAMPLE_COUNT, DEFAULT_SUBSAMPLE_SIZES,
    ESTIMATE_CSV_COLUMNS, ESTIMATOR_NAMES,
    EXIT_DATA, EXIT_OK, EXIT_USAGE, REPORT_FORMAT_VERSION, VERSION,
)
from errors import DomainError, ENLError, UsageError
from estimators import EstimatorId, SolverOptions, estimate_all
from hermitian_core import HermitianMatrix
from monte_carlo import (
    ExperimentConfig, bias_table, format_float, run_experiment, run_subsample_experiment,
)
from polsar_io import (
    CovarianceImage, CovarianceImageWriter, RegionSpec, extract_region, read_covariance_image,
    read_sigma, write_covariance_image,
)
from wishart_model import SAMPLING_METHODS, WishartParams, builtin_sigma0, sample

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser ném UsageError thay vì thoát với mã 2"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _parse_list(text: str, convert: Callable[[str], object], flag: str) -> list:
    try:
        values = [convert(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{flag}: cannot parse {text!r}") from None
    if not values:
        raise UsageError(f"{flag}: empty list")
    return values


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


@contextlib.contextmanager
def _output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", newline="", encoding="utf-8") as f:
            yield f


class ENLToolCLI:
    """Lớp xử lý giao diện dòng lệnh"""

    def __init__(self):
        self.parser = self._create_parser()

    def _create_parser(self) -> argparse.ArgumentParser:
        """Tạo argument parser"""
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("-v", "--verbose", action="count", default=0,
                            help="In cấu hình và tiến trình ra stderr (-vv: debug)")

        output = argparse.ArgumentParser(add_help=False)
        output.add_argument("--format", choices=("csv", "json"), default="csv",
                            help="Định dạng đầu ra (mặc định: csv)")
        output.add_argument("--out", metavar="PATH", help="Ghi ra file thay vì stdout")

        solver = argparse.ArgumentParser(add_help=False)
        solver.add_argument("--tolerance", type=float, default=DEFAULT_ABS_TOLERANCE,
                            help=f"Dung sai tuyệt đối của Newton-Raphson (mặc định: {DEFAULT_ABS_TOLERANCE:g})")
        solver.add_argument("--max-iterations", type=int, default=DEFAULT_MAX_ITERATIONS,
                            help=f"Số vòng lặp Newton tối đa (mặc định: {DEFAULT_MAX_ITERATIONS})")

        experiment = argparse.ArgumentParser(add_help=False)
        experiment.add_argument("--defaults", action="store_true",
                                help="Dùng lưới mặc định L in {4,6,8,12}, N in {9,49,121}, Sigma_0")
        experiment.add_argument("--looks", help="Danh sách L, ví dụ 4,6,8,12")
        experiment.add_argument("--sizes", help="Danh sách N, ví dụ 9,49,121")
        experiment.add_argument("--reps", type=int, default=DEFAULT_REPLICATIONS,
                                help=f"Số replication mỗi ô (mặc định: {DEFAULT_REPLICATIONS})")
        experiment.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Seed gốc")
        experiment.add_argument("--estimators", default=",".join(ESTIMATOR_NAMES),
                                help="Tập bộ ước lượng, ví dụ ml,iml,bn")
        experiment.add_argument("--threads", type=int, help="Số thread (mặc định: ENL_THREADS hoặc số lõi)")
        experiment.add_argument("--method", choices=SAMPLING_METHODS, default="auto",
                                help="Phương pháp sinh mẫu Wishart")
        sigma_group = experiment.add_mutually_exclusive_group()
        sigma_group.add_argument("--sigma", metavar="FILE", help="Ma trận Sigma (file WCOV1 1x1)")
        sigma_group.add_argument("--builtin-sigma0", action="store_true",
                                 help="Dùng Sigma_0 dựng sẵn (mặc định)")

        parser = _ArgumentParser(
            prog="enl",
            description="ENL Toolkit - Ước lượng số look tương đương cho phân phối Wishart phức",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Ví dụ sử dụng:
  python main.py simulate --defaults --seed 42 --format csv
  python main.py sample --builtin-sigma0 --looks 4 --width 150 --height 150 --seed 1 --out img.wcov
  python main.py estimate img.wcov --region 0,0,11,11 --estimators ml,iml,bn
  python main.py estimate img.wcov --subsample-sizes 9,36,121,144 --count 5500 --seed 3
  python main.py bias --looks 4 --sizes 9,49,121 --reps 2000 --seed 5
            """,
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
        subparsers.required = True

        subparsers.add_parser("simulate", parents=[common, output, experiment, solver],
                              help="Chạy thí nghiệm Monte Carlo và in bảng metrics")
        subparsers.add_parser("bias", parents=[common, output, experiment, solver],
                              help="Bảng độ chệch theo N và kiểm tra thứ tự độ chệch")

        est = subparsers.add_parser("estimate", parents=[common, output, solver],
                                    help="Ước lượng L trên một vùng của ảnh WCOV1")
        est.add_argument("input", help="File ảnh WCOV1")
        est.add_argument("--region", help="Vùng x0,y0,w,h (mặc định: toàn ảnh)")
        est.add_argument("--estimators", default=",".join(ESTIMATOR_NAMES),
                         help="Tập bộ ước lượng, ví dụ ml,iml,bn")
        est.add_argument("--subsample-sizes",
                         help="Giao thức dữ liệu thực: các cỡ mẫu con, ví dụ "
                              + ",".join(str(n) for n in DEFAULT_SUBSAMPLE_SIZES))
        est.add_argument("--count", type=int, default=DEFAULT_SUBSAMPLE_COUNT,
                         help=f"Số mẫu con cho mỗi cỡ (mặc định: {DEFAULT_SUBSAMPLE_COUNT})")
        est.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Seed cho việc lấy mẫu con")
        est.add_argument("--reference-looks", type=float,
                         help="L tham chiếu cho metrics (mặc định: nominal_looks của ảnh)")
        est.add_argument("--threads", type=int, help="Số thread cho giao thức mẫu con")

        smp = subparsers.add_parser("sample", parents=[common],
                                    help="Sinh ảnh WCOV1 gồm các pixel Wishart i.i.d.")
        smp.add_argument("--looks", type=float, required=True, help="Số look L")
        smp.add_argument("--width", type=int, required=True)
        smp.add_argument("--height", type=int, required=True)
        smp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        smp.add_argument("--nominal-looks", type=float,
                         help="nominal_looks ghi vào header (mặc định: --looks)")
        smp.add_argument("--method", choices=SAMPLING_METHODS, default="auto")
        smp.add_argument("--out", metavar="PATH", help="File đầu ra (mặc định: stdout)")
        smp_sigma = smp.add_mutually_exclusive_group()
        smp_sigma.add_argument("--sigma", metavar="FILE", help="Ma trận Sigma (file WCOV1 1x1)")
        smp_sigma.add_argument("--builtin-sigma0", action="store_true",
                               help="Dùng Sigma_0 dựng sẵn (mặc định)")

        return parser

    def run(self, args: Optional[Sequence[str]] = None) -> int:
        """Chạy CLI với các tham số"""
        try:
            parsed_args = self.parser.parse_args(args)
        except UsageError as e:
            print(f"usage error: {e}", file=sys.stderr)
            return EXIT_USAGE
        except SystemExit as e:
            # --help / --version
            return int(e.code or 0)

        _configure_logging(parsed_args.verbose)
        try:
            return self._execute(parsed_args)
        except KeyboardInterrupt:
            print("interrupted", file=sys.stderr)
            return EXIT_USAGE
        except ENLError as e:
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
        except BrokenPipeError:
            # Đầu đọc đóng pipe sớm (ví dụ `| head`): dữ liệu còn lại đổ vào devnull
            devnull = os.open(os.devnull, os.O_WRONLY)
            os.dup2(devnull, sys.stdout.fileno())
            return EXIT_OK
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA

    def _execute(self, args) -> int:
        """Thực thi lệnh"""
        handlers = {
            "simulate": self._run_simulate,
            "bias": self._run_bias,
            "estimate": self._run_estimate,
            "sample": self._run_sample,
        }
        return handlers[args.command](args)

    # ------------------------------------------------------------------
    # simulate / bias
    # ------------------------------------------------------------------

    @staticmethod
    def _solver_options(args) -> SolverOptions:
        return SolverOptions(abs_tolerance=args.tolerance, max_iterations=args.max_iterations)

    @staticmethod
    def _load_sigma(args) -> HermitianMatrix:
        if args.sigma:
            return read_sigma(args.sigma)
        return builtin_sigma0()

    def _experiment_config(self, args) -> ExperimentConfig:
        """Dựng ExperimentConfig từ các flag"""
        if args.defaults:
            looks, sizes = list(DEFAULT_LOOKS_GRID), list(DEFAULT_SAMPLE_SIZE_GRID)
        elif args.looks is None or args.sizes is None:
            raise UsageError("--looks and --sizes are required unless --defaults is given")
        else:
            looks, sizes = [], []
        if args.looks is not None:
            looks = _parse_list(args.looks, float, "--looks")
        if args.sizes is not None:
            sizes = _parse_list(args.sizes, int, "--sizes")

        config = ExperimentConfig(
            sigma=self._load_sigma(args),
            looks_grid=tuple(looks),
            sample_size_grid=tuple(sizes),
            replications=args.reps,
            seed=args.seed,
            estimators=EstimatorId.parse_list(args.estimators),
            solver=self._solver_options(args),
            sampling_method=args.method,
        )
        logger.info("resolved configuration: %s", json.dumps(config.as_dict()))
        return config

    def _run_simulate(self, args) -> int:
        config = self._experiment_config(args)
        report = run_experiment(config, threads=args.threads)
        with _output(args.out) as stream:
            if args.format == "json":
                report.to_json(stream)
            else:
                report.to_csv(stream)
        return EXIT_OK

    def _run_bias(self, args) -> int:
        config = self._experiment_config(args)
        table = bias_table(run_experiment(config, threads=args.threads))
        with _output(args.out) as stream:
            if args.format == "json":
                table.to_json(stream)
            else:
                table.to_csv(stream)
        return EXIT_OK

    # ------------------------------------------------------------------
    # estimate
    # ------------------------------------------------------------------

    def _run_estimate(self, args) -> int:
        image = read_covariance_image(args.input)
        region = RegionSpec.parse(args.region) if args.region else RegionSpec.full(image)
        estimator_ids = EstimatorId.parse_list(args.estimators)
        logger.info(
            "resolved configuration: input=%s region=%s estimators=%s",
            args.input, region, ",".join(e.value for e in estimator_ids),
        )
        region_sample = extract_region(image, region)

        if args.subsample_sizes is not None:
            return self._run_subsample(args, image, region_sample, estimator_ids)

        results = estimate_all(region_sample, estimator_ids, self._solver_options(args))
        with _output(args.out) as stream:
            if args.format == "json":
                json.dump({
                    "kind": "estimates",
                    "format_version": REPORT_FORMAT_VERSION,
                    "version": VERSION,
                    "input": args.input,
                    "region": [region.x0, region.y0, region.w, region.h],
                    "N": region_sample.size,
                    "m": region_sample.m,
                    "results": [result.as_dict() for result in results],
                }, stream, indent=2)
                stream.write("\n")
            else:
                writer = csv.DictWriter(stream, fieldnames=ESTIMATE_CSV_COLUMNS, lineterminator="\n")
                writer.writeheader()
                for result in results:
                    writer.writerow({
                        "estimator": result.estimator_id.value,
                        "value": format_float(result.value),
                        "converged": str(result.converged).lower(),
                        "iterations": str(result.iterations),
                        "bias_applied": format_float(result.bias_applied),
                        "residual": format_float(result.residual),
                        "N": str(region_sample.size),
                        "m": str(region_sample.m),
                    })
        return EXIT_OK

    def _run_subsample(self, args, image: CovarianceImage, region_sample, estimator_ids) -> int:
        """Giao thức dữ liệu thực trên vùng đã chọn"""
        sizes: List[int] = _parse_list(args.subsample_sizes, int, "--subsample-sizes")
        reference = args.reference_looks if args.reference_looks is not None else image.nominal_looks
        if reference is None:
            raise UsageError("--reference-looks is required when the image has no nominal_looks")
        report = run_subsample_experiment(
            region_sample, sizes, args.count, args.seed, reference, estimator_ids,
            opts=self._solver_options(args), threads=args.threads,
        )
        with _output(args.out) as stream:
            if args.format == "json":
                report.to_json(stream)
            else:
                report.to_csv(stream)
        return EXIT_OK

    # ------------------------------------------------------------------
    # sample
    # ------------------------------------------------------------------

    def _run_sample(self, args) -> int:
        if args.width < 1 or args.height < 1:
            raise UsageError(f"--width and --height must be positive, got {args.width} x {args.height}")
        if args.seed < 0:
            raise UsageError(f"--seed must be non-negative, got {args.seed}")
        sigma = self._load_sigma(args)
        if not args.looks >= sigma.m:
            raise DomainError(f"--looks must be at least m = {sigma.m}, got {args.looks:g}")
        params = WishartParams(sigma, args.looks)
        nominal = args.nominal_looks if args.nominal_looks is not None else args.looks
        logger.info(
            "resolved configuration: looks=%g width=%d height=%d seed=%d method=%s nominal_looks=%g",
            params.looks, args.width, args.height, args.seed, args.method, nominal,
        )
        rng = np.random.default_rng(np.random.SeedSequence(args.seed))
        drawn = sample(params, args.width * args.height, rng, args.method)
        image = CovarianceImage.from_sample(drawn, args.width, args.height, nominal)
        if args.out:
            write_covariance_image(image, args.out)
        else:
            sys.stdout.buffer.write(CovarianceImageWriter.serialize(image))
            sys.stdout.buffer.flush()
        return EXIT_OK
