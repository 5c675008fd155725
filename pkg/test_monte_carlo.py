#!/usr/bin/env python3
"""
Tests for the Monte Carlo runner
Test cho monte_carlo: metrics, tính tái lập, bảng độ chệch và các ô tham chiếu
"""

import io
import json
import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from constants import CELL_CSV_COLUMNS, ESTIMATOR_NAMES, THREADS_ENV_VAR
from errors import ConfigError, EmptyCell, SizeError
from estimators import EstimatorId, cox_snell_bias, estimate_L_ml
from monte_carlo import (
    ExperimentConfig, bias_table, metrics, resolve_threads, run_experiment,
    run_subsample_experiment,
)
from wishart_model import WishartParams, builtin_sigma0, sample


class TestMetrics(unittest.TestCase):
    """Test metrics()"""

    def test_constant_estimates(self):
        result = metrics([4, 4, 4], 4)
        self.assertEqual((result.mean, result.mse, result.cv, result.bias), (4.0, 0.0, 0.0, 0.0))

    def test_two_estimates(self):
        result = metrics([3, 5], 4)
        self.assertEqual(result.mean, 4.0)
        self.assertEqual(result.mse, 1.0)
        self.assertAlmostEqual(result.cv, math.sqrt(2) / 4, places=12)
        self.assertEqual(result.bias, 0.0)

    def test_single_estimate(self):
        result = metrics([5.0], 4)
        self.assertEqual(result.cv, 0.0)
        self.assertEqual(result.bias, 1.0)

    def test_empty(self):
        with self.assertRaises(EmptyCell):
            metrics([], 4)

    def test_variance_decomposition(self):
        """MSE = population variance + bias^2"""
        values = np.random.default_rng(0).gamma(4.0, 1.1, size=101)
        result = metrics(values, 4.0)
        self.assertGreaterEqual(result.mse, result.bias ** 2)
        self.assertAlmostEqual(result.mse, float(values.var()) + result.bias ** 2, places=12)


class TestExperimentConfig(unittest.TestCase):
    """Test ExperimentConfig validation"""

    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.looks_grid, (4.0, 6.0, 8.0, 12.0))
        self.assertEqual(config.sample_size_grid, (9, 49, 121))
        self.assertEqual(config.replications, 5500)
        self.assertEqual(config.sigma, builtin_sigma0())
        self.assertEqual([e.value for e in config.estimators], list(ESTIMATOR_NAMES))

    def test_invalid(self):
        for kwargs in (
            {"replications": 0},
            {"looks_grid": ()},
            {"sample_size_grid": ()},
            {"looks_grid": (2.5,)},
            {"sample_size_grid": (0,)},
            {"estimators": ()},
            {"seed": -1},
            {"sampling_method": "magic"},
        ):
            with self.assertRaises(ConfigError, msg=str(kwargs)):
                ExperimentConfig(**kwargs)

    def test_as_dict(self):
        record = ExperimentConfig(replications=10, seed=3).as_dict()
        self.assertEqual(record["protocol"], "simulation")
        self.assertEqual(record["m"], 3)
        self.assertEqual(record["sigma"][0][0], [962892.0, 0.0])
        json.dumps(record)


class TestThreads(unittest.TestCase):
    """Test the worker count precedence"""

    def setUp(self):
        self.saved = os.environ.pop(THREADS_ENV_VAR, None)

    def tearDown(self):
        os.environ.pop(THREADS_ENV_VAR, None)
        if self.saved is not None:
            os.environ[THREADS_ENV_VAR] = self.saved

    def test_precedence(self):
        os.environ[THREADS_ENV_VAR] = "3"
        self.assertEqual(resolve_threads(), 3)
        self.assertEqual(resolve_threads(2), 2)
        del os.environ[THREADS_ENV_VAR]
        self.assertGreaterEqual(resolve_threads(), 1)

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            resolve_threads(0)
        os.environ[THREADS_ENV_VAR] = "many"
        with self.assertRaises(ConfigError):
            resolve_threads()


class TestRunExperiment(unittest.TestCase):
    """Test run_experiment on small grids"""

    def small_config(self, **kwargs) -> ExperimentConfig:
        options = {"looks_grid": (4, 6), "sample_size_grid": (9, 16), "replications": 40, "seed": 42}
        options.update(kwargs)
        return ExperimentConfig(**options)

    def csv_text(self, report) -> str:
        stream = io.StringIO()
        report.to_csv(stream)
        return stream.getvalue()

    def test_reproducible_across_threads(self):
        config = self.small_config()
        one = run_experiment(config, threads=1)
        many = run_experiment(config, threads=4)
        self.assertEqual(self.csv_text(one), self.csv_text(many))

    def test_single_replication(self):
        config = self.small_config(looks_grid=(4,), sample_size_grid=(9,), replications=1)
        first = run_experiment(config, threads=1)
        second = run_experiment(config, threads=2)
        self.assertEqual(self.csv_text(first), self.csv_text(second))
        for cell in first.cells:
            if cell.successes:
                self.assertEqual(cell.cv, 0.0)

    def test_report_shape(self):
        report = run_experiment(self.small_config(), threads=2)
        self.assertEqual(len(report.cells), 5 * 2 * 2)
        for cell in report.cells:
            self.assertEqual(cell.successes + cell.failures, 40)
            self.assertGreaterEqual(cell.mse, 0.0)
            self.assertGreaterEqual(cell.cv, 0.0)
            self.assertAlmostEqual(cell.bias, cell.mean - cell.true_L, places=12)
        cell = report.cell("ml", 6, 16)
        self.assertEqual((cell.estimator_id, cell.true_L, cell.N), (EstimatorId.ML, 6.0, 16))
        with self.assertRaises(KeyError):
            report.cell("ml", 5, 16)

    def test_paired_design(self):
        """Every estimator sees the same sample: ML equals the direct estimate on the replication's draw"""
        config = self.small_config(looks_grid=(4,), sample_size_grid=(9,), replications=1,
                                   estimators=(EstimatorId.ML,))
        report = run_experiment(config, threads=1)
        rng = np.random.default_rng(np.random.SeedSequence(42, spawn_key=(0, 0, 0)))
        drawn = sample(WishartParams(builtin_sigma0(), 4), 9, rng)
        self.assertEqual(report.cell("ML", 4, 9).mean, estimate_L_ml(drawn).value)

    def test_csv_and_json(self):
        report = run_experiment(self.small_config(replications=5), threads=1)
        lines = self.csv_text(report).splitlines()
        self.assertEqual(lines[0], ",".join(CELL_CSV_COLUMNS))
        self.assertEqual(len(lines), 1 + 20)
        stream = io.StringIO()
        report.to_json(stream)
        payload = json.loads(stream.getvalue())
        self.assertEqual(payload["kind"], "experiment")
        self.assertEqual(payload["format_version"], 1)
        self.assertEqual(len(payload["cells"]), 20)
        self.assertEqual(payload["config"]["replications"], 5)


class TestBiasTable(unittest.TestCase):
    """Test bias_table()"""

    def test_single_estimator(self):
        config = ExperimentConfig(looks_grid=(4,), sample_size_grid=(9, 49), replications=20,
                                  estimators=(EstimatorId.ML,))
        table = bias_table(run_experiment(config, threads=1))
        self.assertEqual(table.estimators, ("ML",))
        self.assertEqual([n for n, _ in table.series("ML", 4)], [9, 49])
        for row in table.rows:
            self.assertIsNone(row.ordering_holds)
            self.assertAlmostEqual(row.closed_form_ml, cox_snell_bias(4, 3, row.N), places=12)

    def test_ordering_holds_at_four_looks(self):
        config = ExperimentConfig(looks_grid=(4,), sample_size_grid=(9, 49, 121), replications=2000, seed=5)
        table = bias_table(run_experiment(config))
        for row in table.rows:
            self.assertTrue(row.ordering_holds, f"ordering fails at N={row.N}: {row.biases}")
        stream = io.StringIO()
        table.to_csv(stream)
        header = stream.getvalue().splitlines()[0]
        self.assertEqual(
            header, "L,N,bias_ML,bias_MM1,bias_MM2,bias_IML,bias_BN,closed_form_ml,ordering"
        )


class TestReferenceCells(unittest.TestCase):
    """Full 5500-replication cells compared with the published reference values"""

    @classmethod
    def setUpClass(cls):
        config = ExperimentConfig(looks_grid=(4,), sample_size_grid=(9, 49), replications=5500, seed=7)
        cls.report = run_experiment(config)

    def test_small_sample_means(self):
        expected = {"ML": (4.339, 0.04), "IML": (3.998, 0.03), "BN": (4.090, 0.03),
                    "MM2": (4.957, 0.10), "MM1": (6.278, 0.30)}
        for name, (mean, tolerance) in expected.items():
            cell = self.report.cell(name, 4, 9)
            self.assertLess(abs(cell.mean - mean), tolerance, f"{name}: {cell.mean}")

    def test_small_sample_ml_spread(self):
        cell = self.report.cell("ML", 4, 9)
        self.assertLess(abs(cell.mse / 0.414 - 1), 0.10)
        self.assertLess(abs(cell.cv / 0.126 - 1), 0.10)

    def test_closed_form_bias(self):
        """Closed-form B(L) against the empirical ML bias"""
        for N, tolerance in ((9, 0.25), (49, 0.15)):
            empirical = self.report.cell("ML", 4, N).bias
            closed = cox_snell_bias(4, 3, N)
            self.assertLess(abs(closed / empirical - 1), tolerance)

    def test_no_failures(self):
        for cell in self.report.cells:
            self.assertEqual(cell.failures, 0)


class TestLargeLooks(unittest.TestCase):
    """Reference values at L = 12"""

    @classmethod
    def setUpClass(cls):
        config = ExperimentConfig(looks_grid=(12,), sample_size_grid=(9, 121), replications=5500, seed=11,
                                  estimators=(EstimatorId.ML, EstimatorId.IML))
        cls.report = run_experiment(config)

    def test_large_sample(self):
        self.assertLess(abs(self.report.cell("IML", 12, 121).mean - 11.995), 0.02)
        self.assertLess(abs(self.report.cell("ML", 12, 121).mean - 12.100), 0.02)
        self.assertLess(abs(self.report.cell("IML", 12, 121).mse / 0.222 - 1), 0.10)

    def test_negative_corrected_bias_for_small_samples(self):
        self.assertLess(self.report.cell("IML", 12, 9).bias, 0.0)
        self.assertGreater(self.report.cell("ML", 12, 9).bias, 0.0)


class TestDefaultGrid(unittest.TestCase):
    """Toàn bộ lưới mặc định L x N, 5500 replication, thiết kế ghép cặp"""

    @classmethod
    def setUpClass(cls):
        cls.report = run_experiment(ExperimentConfig(seed=42), threads=4)
        cls.table = bias_table(cls.report)

    def test_grid_shape(self):
        self.assertEqual(len(self.report.cells), 60)
        self.assertEqual(len(self.table.rows), 12)

    def test_ordering_holds_in_every_cell(self):
        """B(MM1) >= B(MM2) >= B(ML) >= B(BN) >= B(IML) với mọi L, kể cả 6, 8, 12"""
        for row in self.table.rows:
            self.assertIs(row.ordering_holds, True, f"L={row.L:g}, N={row.N}: {row.biases}")
        self.assertEqual({row.L for row in self.table.rows}, {4.0, 6.0, 8.0, 12.0})

    def test_closed_form_bias_for_larger_samples(self):
        """B(L) dạng đóng khớp độ chệch ML thực nghiệm ở mọi ô N >= 49"""
        for row in self.table.rows:
            if row.N < 49:
                continue
            empirical = row.biases["ML"]
            self.assertGreater(empirical, 0.0)
            self.assertLess(abs(row.closed_form_ml / empirical - 1), 0.15,
                            f"L={row.L:g}, N={row.N}: {row.closed_form_ml} vs {empirical}")

    def test_bias_shrinks_with_sample_size(self):
        for L in (4, 6, 8, 12):
            series = [abs(bias) for _, bias in self.table.series("ML", L)]
            self.assertEqual(series, sorted(series, reverse=True), f"L={L}")


class TestSubsampleExperiment(unittest.TestCase):
    """Test the actual-data protocol on a homogeneous synthetic region"""

    @classmethod
    def setUpClass(cls):
        cls.region = sample(WishartParams(builtin_sigma0(), 4), 900, np.random.default_rng(123))

    def test_corrected_mean_closer_to_region_estimate(self):
        whole = estimate_L_ml(self.region).value
        report = run_subsample_experiment(self.region, (9,), 500, seed=3, reference_looks=4,
                                          estimators=(EstimatorId.ML, EstimatorId.IML))
        ml = report.cell("ML", 4, 9).mean
        iml = report.cell("IML", 4, 9).mean
        self.assertLess(abs(iml - whole), abs(ml - whole))
        self.assertEqual(report.config["protocol"], "subsample")

    def test_deterministic(self):
        runs = [
            run_subsample_experiment(self.region, (9, 36), 20, seed=8, reference_looks=4, threads=t)
            for t in (1, 3)
        ]
        texts = []
        for report in runs:
            stream = io.StringIO()
            report.to_csv(stream)
            texts.append(stream.getvalue())
        self.assertEqual(texts[0], texts[1])
        self.assertEqual(len(runs[0].cells), 5 * 2)

    def test_invalid_arguments(self):
        with self.assertRaises(SizeError):
            run_subsample_experiment(self.region, (901,), 5, seed=0, reference_looks=4)
        with self.assertRaises(ConfigError):
            run_subsample_experiment(self.region, (9,), 0, seed=0, reference_looks=4)
        with self.assertRaises(ConfigError):
            run_subsample_experiment(self.region, (9,), 5, seed=0, reference_looks=0)

    def test_failures_counted(self):
        """n = 1 leaves every estimator without a finite answer"""
        report = run_subsample_experiment(self.region, (1,), 5, seed=0, reference_looks=4)
        for cell in report.cells:
            self.assertEqual(cell.failures, 5)
            self.assertTrue(math.isnan(cell.mean))


if __name__ == '__main__':
    unittest.main()
