""" grayscale raster files and the per image preprocessing """

from pathlib import Path
import numpy as np
import png
from scipy import ndimage
from cxrseg import exceptions as exc
from cxrseg.utils import logd

log = logd.getChild('rasters')

SUFFIXES = '.png', '.pgm'


def _decode_png(path):
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        planes = info['planes']
        data = np.vstack([np.asarray(row, dtype=np.uint32) for row in rows])
    except (png.Error, OSError, ValueError) as e:
        raise exc.DecodeError(f'could not decode {path}: {e}') from e

    data = data.reshape(height, width, planes)
    if info['greyscale']:
        data = data[..., 0]
    else:
        # drop alpha, average the colors
        data = np.round(data[..., :3].mean(axis=-1)).astype(np.uint32)

    return data, 2 ** info['bitdepth'] - 1


def read_png_counts(path):
    """ raw integer samples of a PNG as [rows, cols] """
    data, _ = _decode_png(path)
    return data


def write_png_counts(path, counts, bitdepth=8):
    counts = np.asarray(counts)
    if counts.ndim != 2:
        raise exc.ShapeMismatchError('raster', dimension='rank', expected=2, actual=counts.ndim)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    writer = png.Writer(counts.shape[1], counts.shape[0], greyscale=True, bitdepth=bitdepth)
    with open(path, 'wb') as f:
        writer.write(f, counts.astype(int).tolist())


def _pgm_tokens(blob):
    """ header tokens and the offset of the raster that follows them """
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(blob):
            raise exc.DecodeError('pgm header ends early')

        c = blob[i:i + 1]
        if c == b'#':
            while i < len(blob) and blob[i:i + 1] not in (b'\n', b'\r'):
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(blob) and not blob[i:i + 1].isspace() and blob[i:i + 1] != b'#':
                i += 1

            tokens.append(blob[start:i].decode('ascii'))

    # a single whitespace byte separates the header from binary data
    return tokens, i + 1


def read_pgm(path):
    """ P5 (binary) or P2 (plain) graymaps as [rows, cols] integers and maxval """
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise exc.DecodeError(f'could not read {path}: {e}') from e

    try:
        (magic, width, height, maxval), offset = _pgm_tokens(blob)
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError as e:
        raise exc.DecodeError(f'bad pgm header in {path}') from e

    if magic not in ('P5', 'P2') or not 0 < maxval < 65536:
        raise exc.DecodeError(f'{path} is not a graymap (magic {magic} maxval {maxval})')

    count = width * height
    if magic == 'P2':
        values = blob[offset - 1:].split()
        if len(values) < count:
            raise exc.DecodeError(f'{path} has {len(values)} of {count} samples')

        data = np.array([int(v) for v in values[:count]], dtype=np.uint32)
    else:
        dtype = np.dtype('>u2') if maxval > 255 else np.dtype('u1')
        raw = blob[offset:offset + count * dtype.itemsize]
        if len(raw) < count * dtype.itemsize:
            raise exc.DecodeError(f'{path} is truncated')

        data = np.frombuffer(raw, dtype=dtype).astype(np.uint32)

    return data.reshape(height, width), maxval


def read_raster(path):
    """ a grayscale image as 32 bit floats in [0, 1] """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == '.pgm':
        data, maxval = read_pgm(path)
    elif suffix == '.png':
        data, maxval = _decode_png(path)
    else:
        raise exc.DecodeError(f'unsupported raster format {path}')

    return (data / maxval).astype(np.float32)


def write_raster(path, image, bitdepth=8):
    image = np.asarray(image)
    maxval = 2 ** bitdepth - 1
    write_png_counts(path, np.round(np.clip(image, 0, 1) * maxval), bitdepth=bitdepth)


def read_mask(path):
    """ a binary plane, anything above half intensity is foreground """
    return (read_raster(path) > 0.5).astype(np.float32)


def write_mask(path, plane):
    plane = np.asarray(plane)
    _check_binary(plane)
    write_png_counts(path, plane.astype(np.uint8) * 255, bitdepth=8)


def _check_binary(plane):
    if not np.isin(plane, (0, 1)).all():
        raise exc.DataError('mask planes must be binary')


def resize(image, target_rows=300, target_cols=340, mode='bilinear'):
    """ resample to exactly target_rows x target_cols on a half pixel grid """
    image = np.asarray(image)
    rows, cols = image.shape[:2]
    if 0 in (rows, cols, target_rows, target_cols):
        raise exc.DataError(f'cannot resize {rows}x{cols} to {target_rows}x{target_cols}')

    if (rows, cols) == (target_rows, target_cols):
        return image.copy()

    if mode == 'nearest':
        r = np.minimum(((2 * np.arange(target_rows) + 1) * rows) // (2 * target_rows), rows - 1)
        c = np.minimum(((2 * np.arange(target_cols) + 1) * cols) // (2 * target_cols), cols - 1)
        return image[r[:, None], c[None, :]]
    elif mode != 'bilinear':
        raise exc.ConfigError(f'unknown resize mode {mode!r}', field='mode')

    r = np.clip((np.arange(target_rows) + 0.5) * rows / target_rows - 0.5, 0, rows - 1)
    c = np.clip((np.arange(target_cols) + 0.5) * cols / target_cols - 0.5, 0, cols - 1)
    grid = np.meshgrid(r, c, indexing='ij')
    return ndimage.map_coordinates(image.astype(np.float64), grid, order=1,
                                   mode='nearest').astype(image.dtype)


def histogram_equalize(image, bins=256):
    """ map every pixel to the cumulative fraction of pixels in its bin or below """
    image = np.asarray(image)
    index = np.clip((image * bins).astype(np.int64), 0, bins - 1)
    cdf = np.cumsum(np.bincount(index.ravel(), minlength=bins)) / index.size
    return cdf[index].astype(np.float32)


def complement_mask(lung):
    """ [non-lung, lung] one-hot stack from a binary lung plane """
    lung = np.asarray(lung)
    if lung.ndim != 2:
        raise exc.ShapeMismatchError('mask plane', dimension='rank', expected=2, actual=lung.ndim)

    _check_binary(lung)
    lung = lung.astype(np.float32)
    return np.stack([1 - lung, lung], axis=-1)


def stack_masks(planes):
    """ one-hot stack from one binary plane per class """
    planes = [np.asarray(p) for p in planes]
    for p in planes:
        _check_binary(p)

    stack = np.stack(planes, axis=-1).astype(np.float32)
    if not (stack.sum(axis=-1) == 1).all():
        raise exc.DataError('class masks must cover every pixel exactly once')

    return stack
