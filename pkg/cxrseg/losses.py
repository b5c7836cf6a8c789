""" Dice and Tanimoto overlap measures and the confusion-count metrics

Soft measures are computed for each class (last axis) over every other
axis and then averaged over classes. A 1-D input is a single class.
The soft_* functions take and return tape tensors so they can sit at
the end of a forward pass, the others take arrays and return floats.
"""

from dataclasses import dataclass
import numpy as np
from cxrseg import exceptions as exc
from cxrseg.tensor import Tensor


def _as_input(x):
    if isinstance(x, Tensor):
        return x

    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)

    return Tensor(arr)


def _check_pair(yhat, y):
    if yhat.shape != y.shape:
        if len(yhat.shape) != len(y.shape):
            raise exc.ShapeMismatchError('prediction and labels', dimension='rank',
                                         expected=len(y.shape), actual=len(yhat.shape))
        for axis, (a, b) in enumerate(zip(y.shape, yhat.shape)):
            if a != b:
                dimension = 'classes' if axis == len(y.shape) - 1 else f'axis {axis}'
                raise exc.ShapeMismatchError('prediction and labels', dimension=dimension,
                                             expected=a, actual=b)


def _check_smoothing(s):
    if not s > 0:
        raise exc.ConfigError(f'must be > 0 got {s}', field='smoothing')


def _class_sums(t):
    if t.ndim == 1:
        return t.sum()

    return t.sum(axis=tuple(range(t.ndim - 1)))


def _weights_for(w, yhat):
    w = np.asarray(w.data if isinstance(w, Tensor) else w)
    plane_shape = yhat.shape if yhat.ndim == 1 else yhat.shape[:-1]
    if w.shape != plane_shape:
        raise exc.ShapeMismatchError('weight map', dimension='shape',
                                     expected=plane_shape, actual=w.shape)

    if not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise exc.DataError('weight maps must be finite and strictly positive')

    w = w.astype(yhat.dtype, copy=False)
    return Tensor(w if yhat.ndim == 1 else w[..., None])


def soft_dice(yhat, y, s=1.0):
    _check_pair(yhat, y)
    overlap = _class_sums(yhat * y)
    return ((2 * overlap + s) / (_class_sums(yhat) + _class_sums(y) + s)).mean()


def soft_tanimoto(yhat, y, s=1.0, w=None):
    _check_pair(yhat, y)
    overlap = yhat * y
    magnitude = yhat.square() + y.square()
    if w is not None:
        overlap = overlap * w
        magnitude = magnitude * w

    overlap = _class_sums(overlap)
    return ((overlap + s) / (_class_sums(magnitude) - overlap + s)).mean()


def soft_tanimoto_with_complement(yhat, y, s=1.0, w=None):
    return (soft_tanimoto(yhat, y, s, w) + soft_tanimoto(1 - yhat, 1 - y, s, w)) / 2


def soft_dice_loss(yhat, y, s=1.0):
    _check_smoothing(s)
    return 1 - soft_dice(_as_input(yhat), _as_input(y), s)


def soft_tanimoto_loss(yhat, y, s=1.0, w=None):
    """ 1 - complemented Tanimoto, with every pixel sum weighted when w is given """
    _check_smoothing(s)
    yhat, y = _as_input(yhat), _as_input(y)
    if w is not None:
        w = _weights_for(w, yhat)

    return 1 - soft_tanimoto_with_complement(yhat, y, s, w)


def dice_coefficient(yhat, y, s=1.0):
    _check_smoothing(s)
    return float(soft_dice(_as_input(yhat), _as_input(y), s).data)


def dice_loss(yhat, y, s=1.0):
    return float(soft_dice_loss(yhat, y, s).data)


def tanimoto(yhat, y, s=1.0):
    _check_smoothing(s)
    return float(soft_tanimoto(_as_input(yhat), _as_input(y), s).data)


def tanimoto_with_complement(yhat, y, s=1.0):
    _check_smoothing(s)
    return float(soft_tanimoto_with_complement(_as_input(yhat), _as_input(y), s).data)


def tanimoto_loss(yhat, y, s=1.0):
    return float(soft_tanimoto_loss(yhat, y, s).data)


def weighted_tanimoto_loss(yhat, y, w, s=1.0):
    return float(soft_tanimoto_loss(yhat, y, s, w).data)


def argmax_channels(prediction):
    """ one-hot of the most probable class, ties go to the lower index """
    prediction = np.asarray(prediction.data if isinstance(prediction, Tensor) else prediction)
    index = prediction.argmax(axis=-1)
    return np.eye(prediction.shape[-1], dtype=np.float32)[index]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(pred_hard, y, positive_class=1):
    pred_hard, y = np.asarray(pred_hard), np.asarray(y)
    _check_pair(pred_hard, y)
    classes = y.shape[-1]
    if not 0 <= positive_class < classes:
        raise exc.ClassIndexError(f'class {positive_class} outside 0..{classes - 1}')

    predicted = pred_hard[..., positive_class] > 0.5
    actual = y[..., positive_class] > 0.5
    return ConfusionCounts(tp=int(np.count_nonzero(predicted & actual)),
                           fp=int(np.count_nonzero(predicted & ~actual)),
                           fn=int(np.count_nonzero(~predicted & actual)),
                           tn=int(np.count_nonzero(~predicted & ~actual)))


def metrics_from_counts(c):
    if c.tp == c.fp == c.fn == 0:
        return {'dice': 1.0, 'precision': 1.0, 'recall': 1.0, 'f1': 1.0}

    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    dice = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    return {'dice': dice, 'precision': precision, 'recall': recall, 'f1': f1}
