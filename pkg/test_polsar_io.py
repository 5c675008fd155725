#!/usr/bin/env python3
"""
Unit tests for PolSAR image I/O
Test đơn vị cho polsar_io: định dạng WCOV1, trích vùng và lấy mẫu con
"""

import json
import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from constants import WCOV_MAGIC
from errors import (
    BadPixel, BoundsError, ConfigError, FormatError, NotHermitian, SizeError, TruncationError,
)
from estimators import EstimatorId, estimate, estimate_L_ml
from polsar_io import (
    CovarianceImage, CovarianceImageParser, CovarianceImageValidator, CovarianceImageWriter,
    RegionSpec, extract_region, read_covariance_image, read_sigma, subsample_without_replacement,
    write_covariance_image,
)
from wishart_model import WishartParams, builtin_sigma0, sample


def synthetic_image(width: int, height: int, L: float = 4, seed: int = 0,
                    nominal_looks=4) -> CovarianceImage:
    drawn = sample(WishartParams(builtin_sigma0(), L), width * height, np.random.default_rng(seed))
    return CovarianceImage.from_sample(drawn, width, height, nominal_looks)


def wcov_bytes(header: dict, payload: bytes) -> bytes:
    return json.dumps(header).encode("utf-8") + b"\n" + payload


class TestCovarianceImageFormat(unittest.TestCase):
    """Test WCOV1 parse/serialize"""

    def setUp(self):
        self.image = synthetic_image(4, 3, seed=1)
        self.data = CovarianceImageWriter.serialize(self.image)
        self.header = CovarianceImageParser.split_header(self.data)
        self.offset = self.header.pop("_payload_offset")

    def test_header_layout(self):
        self.assertEqual(self.header["magic"], WCOV_MAGIC)
        self.assertEqual((self.header["width"], self.header["height"], self.header["m"]), (4, 3, 3))
        self.assertEqual(self.header["nominal_looks"], 4.0)
        self.assertEqual(len(self.data) - self.offset, 4 * 3 * 9 * 16)
        self.assertEqual(CovarianceImageValidator.validate_header(self.header), [])

    def test_file_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "image.wcov")
            write_covariance_image(self.image, path)
            loaded = read_covariance_image(path)
        self.assertEqual(loaded, self.image)
        np.testing.assert_array_equal(loaded.pixel(2, 1).entries, self.image.pixels[1, 2])

    def test_null_nominal_looks(self):
        image = synthetic_image(2, 2, nominal_looks=None)
        loaded = CovarianceImageParser.parse(CovarianceImageWriter.serialize(image))
        self.assertIsNone(loaded.nominal_looks)

    def test_truncated_payload(self):
        with self.assertRaises(TruncationError):
            CovarianceImageParser.parse(self.data[:-16])

    def test_trailing_bytes(self):
        with self.assertRaises(FormatError) as ctx:
            CovarianceImageParser.parse(self.data + b"\x00" * 16)
        self.assertNotIsInstance(ctx.exception, TruncationError)

    def test_invalid_headers(self):
        payload = self.data[self.offset:]
        bad_headers = [
            dict(self.header, magic="WCOV2"),
            dict(self.header, m=0),
            dict(self.header, width=-1),
            dict(self.header, byte_order="BE"),
            dict(self.header, nominal_looks=0),
            dict(self.header, extra=1),
            {k: v for k, v in self.header.items() if k != "height"},
        ]
        for header in bad_headers:
            self.assertTrue(CovarianceImageValidator.validate_header(header), header)
            with self.assertRaises(FormatError):
                CovarianceImageParser.parse(wcov_bytes(header, payload))

    def test_header_not_json(self):
        with self.assertRaises(FormatError):
            CovarianceImageParser.parse(b"not json\n" + b"\x00" * 16)
        with self.assertRaises(FormatError):
            CovarianceImageParser.parse(b"[1, 2]\n")
        with self.assertRaises(FormatError):
            CovarianceImageParser.parse(b"x" * 5000)

    def test_non_hermitian_pixel(self):
        pixels = np.array(self.image.pixels)
        pixels[0, 0, 0, 1] += 1000.0
        with self.assertRaises(NotHermitian):
            CovarianceImage(pixels)

    def test_read_sigma(self):
        sigma = builtin_sigma0()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "sigma.wcov")
            write_covariance_image(CovarianceImage(sigma.entries[None, None]), path)
            self.assertEqual(read_sigma(path), sigma)
            write_covariance_image(synthetic_image(2, 1), path)
            with self.assertRaises(FormatError):
                read_sigma(path)


class TestRegion(unittest.TestCase):
    """Test RegionSpec and extract_region"""

    def setUp(self):
        self.image = synthetic_image(5, 4, seed=2)

    def test_parse(self):
        self.assertEqual(RegionSpec.parse("1,2,3,2"), RegionSpec(1, 2, 3, 2))
        self.assertEqual(RegionSpec.parse("1,2,3,2").size, 6)
        for text in ("1,2,3", "a,b,c,d", "0,0,0,1"):
            with self.assertRaises(ConfigError):
                RegionSpec.parse(text)

    def test_full_region(self):
        region = extract_region(self.image, RegionSpec.full(self.image))
        self.assertEqual(region.size, 20)
        np.testing.assert_array_equal(region.stack, self.image.pixels.reshape(20, 3, 3))

    def test_single_pixel_region(self):
        region = extract_region(self.image, RegionSpec(3, 2, 1, 1))
        self.assertEqual(region.size, 1)
        np.testing.assert_array_equal(region.stack[0], self.image.pixels[2, 3])

    def test_row_major_order(self):
        region = extract_region(self.image, RegionSpec(1, 1, 2, 2))
        expected = [self.image.pixels[1, 1], self.image.pixels[1, 2],
                    self.image.pixels[2, 1], self.image.pixels[2, 2]]
        np.testing.assert_array_equal(region.stack, np.stack(expected))

    def test_out_of_bounds(self):
        for region in (RegionSpec(4, 0, 2, 1), RegionSpec(0, 3, 1, 2), RegionSpec(-1, 0, 1, 1)):
            with self.assertRaises(BoundsError):
                extract_region(self.image, region)

    def test_bad_pixel(self):
        pixels = np.array(self.image.pixels)
        pixels[2, 3] = 0.0
        image = CovarianceImage(pixels, 4)
        self.assertEqual(image.bad_pixels(), [2 * 5 + 3])
        with self.assertRaises(BadPixel) as ctx:
            extract_region(image, RegionSpec(2, 1, 3, 3))
        self.assertEqual(ctx.exception.index, 13)
        self.assertEqual(extract_region(image, RegionSpec(0, 0, 3, 2)).size, 6)


class TestEstimationOnImages(unittest.TestCase):
    """Estimators applied to synthetic images with known L"""

    def setUp(self):
        self.image = synthetic_image(30, 30, L=4, seed=3)

    def test_whole_image_ml(self):
        result = estimate_L_ml(extract_region(self.image, RegionSpec.full(self.image)))
        self.assertLess(abs(result.value / 4 - 1), 0.08)

    def test_region_estimates(self):
        region = extract_region(self.image, RegionSpec(5, 7, 11, 11))
        self.assertEqual(region.size, 121)
        for estimator_id in (EstimatorId.ML, EstimatorId.IML, EstimatorId.BN):
            self.assertLess(abs(estimate(region, estimator_id).value - 4), 0.6, estimator_id)


class TestSubsampling(unittest.TestCase):
    """Test subsample_without_replacement"""

    def setUp(self):
        self.sample = extract_region(synthetic_image(6, 5, seed=4), RegionSpec(0, 0, 6, 5))

    def test_full_size_is_permutation(self):
        (subsample,) = subsample_without_replacement(self.sample, 30, 1, np.random.default_rng(0))
        self.assertEqual(subsample.size, 30)
        key = lambda Z: Z.tobytes()  # noqa: E731
        self.assertEqual(sorted(map(key, subsample.stack)), sorted(map(key, self.sample.stack)))

    def test_no_repeats_within_subsample(self):
        for subsample in subsample_without_replacement(self.sample, 12, 5, np.random.default_rng(1)):
            self.assertEqual(len({Z.tobytes() for Z in subsample.stack}), 12)

    def test_reproducible(self):
        first = list(subsample_without_replacement(self.sample, 1, 3, np.random.default_rng(9)))
        second = list(subsample_without_replacement(self.sample, 1, 3, np.random.default_rng(9)))
        self.assertEqual(len(first), 3)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.stack, b.stack)

    def test_invalid_sizes(self):
        rng = np.random.default_rng(0)
        for n, count in ((31, 1), (0, 1), (5, 0), (2.5, 1)):
            with self.assertRaises(SizeError):
                subsample_without_replacement(self.sample, n, count, rng)

    def test_errors_raised_before_iteration(self):
        """Lỗi cỡ mẫu xuất hiện ngay khi gọi, không đợi next()"""
        small = self.sample.subset(range(5))
        with self.assertRaises(SizeError):
            subsample_without_replacement(small, 10, 1, np.random.default_rng(0))


if __name__ == '__main__':
    unittest.main()
