import unittest
import numpy as np
from cxrseg import exceptions as exc
from cxrseg import rasters
from .common import temp_dir


def write_pgm(path, data, maxval, plain=False, comment=None):
    rows, cols = data.shape
    header = b'P2' if plain else b'P5'
    lines = [header]
    if comment:
        lines.append(b'# ' + comment.encode())

    lines.append(f'{cols} {rows}'.encode())
    lines.append(str(maxval).encode())
    head = b'\n'.join(lines) + b'\n'
    if plain:
        body = ' '.join(str(int(v)) for v in data.ravel()).encode() + b'\n'
    else:
        dtype = '>u2' if maxval > 255 else 'u1'
        body = data.astype(dtype).tobytes()

    path.write_bytes(head + body)
    return path


class TestPng(unittest.TestCase):

    def setUp(self):
        self.base = temp_dir('rasters')
        self.rng = np.random.default_rng(0)

    def test_counts_round_trip(self):
        for bitdepth in (8, 16):
            counts = self.rng.integers(0, 2 ** bitdepth, size=(7, 11))
            path = self.base / f'counts-{bitdepth}.png'
            rasters.write_png_counts(path, counts, bitdepth=bitdepth)
            np.testing.assert_array_equal(rasters.read_png_counts(path), counts)

    def test_read_raster_scales(self):
        path = self.base / 'scale.png'
        rasters.write_png_counts(path, np.array([[0, 255], [51, 102]]))
        image = rasters.read_raster(path)
        assert image.dtype == np.float32
        np.testing.assert_allclose(image, [[0, 1], [0.2, 0.4]], rtol=1e-6)

    def test_mask_round_trip_is_exact(self):
        counts = (self.rng.random((30, 34)) < 0.4).astype(int) * 255
        source = self.base / 'source-mask.png'
        rasters.write_png_counts(source, counts)
        stack = rasters.complement_mask(rasters.read_mask(source))
        exported = self.base / 'exported-mask.png'
        rasters.write_mask(exported, stack[..., 1])
        np.testing.assert_array_equal(rasters.read_png_counts(exported), counts)

    def test_corrupt_png(self):
        path = self.base / 'corrupt.png'
        path.write_bytes(b'\x89PNG\r\n\x1a\nnot really')
        with self.assertRaises(exc.DecodeError):
            rasters.read_raster(path)

    def test_missing_file(self):
        with self.assertRaises(exc.DecodeError):
            rasters.read_raster(self.base / 'missing.png')

    def test_unsupported_suffix(self):
        path = self.base / 'image.tiff'
        path.write_bytes(b'II*\x00')
        with self.assertRaises(exc.DecodeError):
            rasters.read_raster(path)


class TestPgm(unittest.TestCase):

    def setUp(self):
        self.base = temp_dir('pgm')
        self.rng = np.random.default_rng(1)

    def test_binary_8(self):
        data = self.rng.integers(0, 256, size=(5, 9))
        path = write_pgm(self.base / 'b8.pgm', data, 255, comment='eight bit')
        counts, maxval = rasters.read_pgm(path)
        assert maxval == 255
        np.testing.assert_array_equal(counts, data)

    def test_binary_16(self):
        data = self.rng.integers(0, 4096, size=(4, 3))
        path = write_pgm(self.base / 'b16.pgm', data, 4095)
        counts, maxval = rasters.read_pgm(path)
        assert maxval == 4095
        np.testing.assert_array_equal(counts, data)
        np.testing.assert_allclose(rasters.read_raster(path), data / 4095, rtol=1e-6)

    def test_plain(self):
        data = self.rng.integers(0, 16, size=(3, 4))
        path = write_pgm(self.base / 'plain.pgm', data, 15, plain=True, comment='plain')
        counts, _ = rasters.read_pgm(path)
        np.testing.assert_array_equal(counts, data)

    def test_pgm_mask_ingest(self):
        data = (self.rng.random((6, 6)) < 0.5).astype(int)
        path = write_pgm(self.base / 'mask.pgm', data * 255, 255)
        np.testing.assert_array_equal(rasters.read_mask(path), data)

    def test_truncated(self):
        path = self.base / 'short.pgm'
        path.write_bytes(b'P5\n4 4\n255\n' + bytes(10))
        with self.assertRaises(exc.DecodeError):
            rasters.read_pgm(path)

    def test_not_a_graymap(self):
        path = self.base / 'color.pgm'
        path.write_bytes(b'P6\n1 1\n255\n' + bytes(3))
        with self.assertRaises(exc.DecodeError):
            rasters.read_pgm(path)

    def test_header_ends_early(self):
        path = self.base / 'header.pgm'
        path.write_bytes(b'P5\n4 ')
        with self.assertRaises(exc.DecodeError):
            rasters.read_pgm(path)


class TestPreprocessing(unittest.TestCase):

    def test_resize_shape(self):
        image = np.random.default_rng(2).random((40, 50)).astype(np.float32)
        out = rasters.resize(image, 30, 34)
        assert out.shape == (30, 34)
        assert out.dtype == np.float32

    def test_resize_same_size_copies(self):
        image = np.ones((4, 4))
        out = rasters.resize(image, 4, 4)
        np.testing.assert_array_equal(out, image)
        assert out is not image

    def test_resize_constant(self):
        out = rasters.resize(np.full((7, 9), 0.25), 20, 3)
        np.testing.assert_allclose(out, 0.25)

    def test_nearest_keeps_masks_binary(self):
        mask = (np.random.default_rng(3).random((31, 17)) < 0.5).astype(np.float32)
        out = rasters.resize(mask, 300, 340, 'nearest')
        assert out.shape == (300, 340)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_nearest_integer_upscale(self):
        mask = np.array([[0, 1], [1, 0]])
        out = rasters.resize(mask, 4, 4, 'nearest')
        np.testing.assert_array_equal(out, np.kron(mask, np.ones((2, 2), dtype=int)))

    def test_resize_errors(self):
        with self.assertRaises(exc.DataError):
            rasters.resize(np.ones((0, 3)), 2, 2)

        with self.assertRaises(exc.ConfigError):
            rasters.resize(np.ones((3, 3)), 2, 2, 'cubic')

    def test_histogram_equalize(self):
        rng = np.random.default_rng(4)
        image = rng.random((32, 32)) ** 3
        out = rasters.histogram_equalize(image)
        assert out.dtype == np.float32
        assert 0 < out.min() and out.max() == 1.0
        order = np.argsort(image.ravel())
        assert np.all(np.diff(out.ravel()[order]) >= 0)

    def test_equalize_constant(self):
        out = rasters.histogram_equalize(np.full((6, 7), 0.5))
        np.testing.assert_array_equal(out, np.ones((6, 7)))

    def test_equalize_two_levels(self):
        image = np.full((4, 4), 0.8)
        image[0] = 0.2
        out = rasters.histogram_equalize(image)
        np.testing.assert_allclose(out[0], 0.25)
        np.testing.assert_allclose(out[1:], 1.0)

    def test_complement(self):
        lung = np.array([[0, 1], [1, 1]])
        stack = rasters.complement_mask(lung)
        np.testing.assert_array_equal(stack.sum(axis=-1), 1)
        np.testing.assert_array_equal(stack[..., 1], lung)

    def test_complement_rejects_gray(self):
        with self.assertRaises(exc.DataError):
            rasters.complement_mask(np.array([[0, 0.5]]))

    def test_stack_masks_must_partition(self):
        a = np.array([[1, 0]])
        b = np.array([[0, 1]])
        np.testing.assert_array_equal(rasters.stack_masks([a, b])[0], np.eye(2))
        with self.assertRaises(exc.DataError):
            rasters.stack_masks([a, a])
