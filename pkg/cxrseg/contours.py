""" contour aware loss weights

w(x) = w_c(x) + w0 * exp(-d(x)^2 / (2 sigma^2)) where d is the distance to
the nearest boundary pixel of the foreground and w_c balances classes.
"""

import hashlib
from pathlib import Path
import numpy as np
from scipy import ndimage
from cxrseg import exceptions as exc
from cxrseg.utils import logd, run_parallel

log = logd.getChild('contours')

# 16 bit cache files store round(w * CACHE_SCALE)
CACHE_SCALE = 256
CACHE_MAX = 65535


def boundary_pixels(plane):
    """ foreground pixels with at least one background 4-neighbor inside the image """
    fg = np.asarray(plane) > 0.5
    bg_neighbor = np.zeros_like(fg)
    bg_neighbor[1:, :] |= ~fg[:-1, :]
    bg_neighbor[:-1, :] |= ~fg[1:, :]
    bg_neighbor[:, 1:] |= ~fg[:, :-1]
    bg_neighbor[:, :-1] |= ~fg[:, 1:]
    return fg & bg_neighbor


def distance_to_boundary(plane):
    """ exact euclidean distance to the nearest boundary pixel, inf when there is none """
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise exc.ShapeMismatchError('mask plane', dimension='rank', expected=2, actual=plane.ndim)

    if not np.isin(plane, (0, 1)).all():
        raise exc.DataError('mask planes must be binary')

    boundary = boundary_pixels(plane)
    if not boundary.any():
        return np.full(plane.shape, np.inf)

    return ndimage.distance_transform_edt(~boundary)


def balance_weights(y, positive_class=1):
    """ inverse class frequency scaled so that the mean weight is 1 """
    y = np.asarray(y)
    labels = y.argmax(axis=-1)
    counts = np.bincount(labels.ravel(), minlength=y.shape[-1])
    if counts[positive_class] == 0:
        log.warning('no foreground pixels, class balance falls back to 1')
        return np.ones(labels.shape)

    present = np.count_nonzero(counts)
    per_class = np.zeros(len(counts))
    nonzero = counts > 0
    per_class[nonzero] = labels.size / (present * counts[nonzero])
    return per_class[labels]


def contour_weight_map(y, w0=10.0, sigma=5.0, balance=False, positive_class=1,
                       contour_classes='positive'):
    """ per pixel weights for a one-hot [rows, cols, classes] stack """
    y = np.asarray(y)
    if y.ndim != 3:
        raise exc.ShapeMismatchError('mask stack', dimension='rank', expected=3, actual=y.ndim)

    if not 0 <= positive_class < y.shape[-1]:
        raise exc.ClassIndexError(f'class {positive_class} outside 0..{y.shape[-1] - 1}')

    if w0 < 0:
        raise exc.ConfigError(f'must be >= 0 got {w0}', field='contour_w0')

    if not sigma > 0:
        raise exc.ConfigError(f'must be > 0 got {sigma}', field='contour_sigma')

    if contour_classes == 'positive':
        d = distance_to_boundary(y[..., positive_class])
    elif contour_classes == 'all':
        d = np.min([distance_to_boundary(y[..., k]) for k in range(y.shape[-1])], axis=0)
    else:
        raise exc.ConfigError(f'unknown value {contour_classes!r}', field='contour_classes')

    wc = balance_weights(y, positive_class) if balance else np.ones(d.shape)
    return wc + w0 * np.exp(-(d * d) / (2 * sigma * sigma))


def cache_path(mask_path):
    mask_path = Path(mask_path)
    return mask_path.with_name(mask_path.stem + '.weights.png')


def weights_key(w0, sigma, balance, positive_class, contour_classes):
    """ digest of everything a cached weight map depends on """
    text = '|'.join((repr(float(w0)), repr(float(sigma)), str(bool(balance)),
                     str(int(positive_class)), str(contour_classes), str(CACHE_SCALE)))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def keyed_cache_path(path, key):
    path = Path(path)
    return path.with_name(f'{path.stem}-{key}{path.suffix}')


def weight_maps_for_dataset(stacks, w0=10.0, sigma=5.0, balance=False, positive_class=1,
                            contour_classes='positive', jobs=1, cache_paths=None):
    """ weight maps for many mask stacks

    cache_paths, if given, are base names from cache_path, the files
    actually read and written carry a digest of the weight parameters.
    Maps whose largest weight does not fit the 16 bit cache are not
    cached. """
    from cxrseg import rasters
    stacks = list(stacks)
    if cache_paths is None:
        cache_paths = [None] * len(stacks)
    else:
        key = weights_key(w0, sigma, balance, positive_class, contour_classes)
        cache_paths = [keyed_cache_path(p, key) for p in cache_paths]

    def one(pair):
        stack, path = pair
        if path is not None and path.exists():
            return rasters.read_png_counts(path) / CACHE_SCALE

        w = contour_weight_map(stack, w0, sigma, balance, positive_class, contour_classes)
        if path is not None:
            counts = np.round(w * CACHE_SCALE)
            if counts.max() > CACHE_MAX:
                log.warning(f'weights up to {w.max():.1f} exceed the cache range, '
                            f'not caching {path}')
                return w

            counts = np.clip(counts, 1, CACHE_MAX).astype(np.uint16)
            rasters.write_png_counts(path, counts, bitdepth=16)
            log.debug(f'cached weights {path}')
            # what later runs will read back
            return counts / CACHE_SCALE

        return w

    return run_parallel(one, zip(stacks, cache_paths), jobs=jobs)
