""" deterministic geometric augmentation of a sample and its masks

Every sample in every epoch gets its own random stream keyed by
(seed, epoch, ordinal), so the parameters a sample receives do not
depend on the order or number of workers processing the batch.
"""

from dataclasses import dataclass, replace
import numpy as np
from scipy import ndimage
from cxrseg import exceptions as exc
from cxrseg.config import setting
from cxrseg.utils import keyed_rng, STREAM_AUGMENT

SCALE_EPSILON = 1e-6


@dataclass
class Sample:
    sample_id: str
    image: np.ndarray  # [rows, cols] float32 in [0, 1]
    masks: np.ndarray  # [rows, cols, classes] one-hot float32
    weights: np.ndarray = None  # [rows, cols] positive

    def __post_init__(self):
        if self.image.shape != self.masks.shape[:2]:
            raise exc.ShapeMismatchError(f'{self.sample_id} image and masks', dimension='shape',
                                         expected=self.masks.shape[:2], actual=self.image.shape)

        if self.weights is not None and self.weights.shape != self.image.shape:
            raise exc.ShapeMismatchError(f'{self.sample_id} weights', dimension='shape',
                                         expected=self.image.shape, actual=self.weights.shape)

    @property
    def shape(self):
        return self.image.shape


@dataclass
class AugmentRanges:
    augment: bool = setting(True, 'bool', 'augment training samples')
    rotation_deg: float = setting(15.0, 'float', 'rotation drawn from +-rotation_deg')
    shear_deg: float = setting(8.0, 'float', 'shear drawn from +-shear_deg')
    shift_fraction: float = setting(0.1, 'float', 'shift drawn from +-fraction of each dimension')
    scale_min: float = setting(0.9, 'float', 'smallest zoom factor')
    scale_max: float = setting(1.1, 'float', 'largest zoom factor')
    flip_probability: float = setting(0.5, 'float', 'chance of each mirror flip')

    @classmethod
    def identity(cls):
        return cls(rotation_deg=0.0, shear_deg=0.0, shift_fraction=0.0,
                   scale_min=1.0, scale_max=1.0, flip_probability=0.0)


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float = 0.0
    shear_deg: float = 0.0
    shift_rows: float = 0.0  # fractions of the image size
    shift_cols: float = 0.0
    flip_h: bool = False
    flip_v: bool = False
    scale: float = 1.0

    @property
    def is_geometric_identity(self):
        return (self.rotation_deg == 0 and self.shear_deg == 0 and self.shift_rows == 0
                and self.shift_cols == 0 and self.scale == 1)


def draw_augment_params(rng, ranges=None):
    """ draws in a fixed order: rotation, shear, shift rows, shift cols, flips, scale """
    r = AugmentRanges() if ranges is None else ranges
    rotation = rng.uniform(-r.rotation_deg, r.rotation_deg)
    shear = rng.uniform(-r.shear_deg, r.shear_deg)
    shift_rows = rng.uniform(-r.shift_fraction, r.shift_fraction)
    shift_cols = rng.uniform(-r.shift_fraction, r.shift_fraction)
    flip_h = bool(rng.random() < r.flip_probability)
    flip_v = bool(rng.random() < r.flip_probability)
    scale = rng.uniform(r.scale_min, r.scale_max)
    # +0.0 folds the -0.0 a zero width range can produce
    return AugmentParams(rotation_deg=float(rotation) + 0.0,
                         shear_deg=float(shear) + 0.0,
                         shift_rows=float(shift_rows) + 0.0,
                         shift_cols=float(shift_cols) + 0.0,
                         flip_h=flip_h,
                         flip_v=flip_v,
                         scale=float(scale))


def params_for(seed, epoch, ordinal, ranges=None):
    return draw_augment_params(keyed_rng(seed, STREAM_AUGMENT, epoch, ordinal), ranges)


def forward_matrix(p):
    """ 2x2 map of centered (x, y) = (col, row) offsets, rotation after shear after scale

    Rows grow downward, a positive rotation turns the picture counterclockwise
    as displayed. """
    theta = np.deg2rad(p.rotation_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    rotate = np.array([[cos, sin], [-sin, cos]])
    shear = np.array([[1.0, np.tan(np.deg2rad(p.shear_deg))], [0.0, 1.0]])
    return rotate @ shear @ (p.scale * np.eye(2))


def source_coordinates(shape, p):
    """ where each output pixel reads from in the input, as (rows, cols) arrays """
    rows, cols = shape
    center_r, center_c = (rows - 1) / 2, (cols - 1) / 2
    inverse = np.linalg.inv(forward_matrix(p))
    out_r, out_c = np.meshgrid(np.arange(rows, dtype=np.float64),
                               np.arange(cols, dtype=np.float64), indexing='ij')
    x = out_c - center_c - p.shift_cols * cols
    y = out_r - center_r - p.shift_rows * rows
    src_x = inverse[0, 0] * x + inverse[0, 1] * y
    src_y = inverse[1, 0] * x + inverse[1, 1] * y
    return src_y + center_r, src_x + center_c


def _flip(array, p):
    if p.flip_h:
        array = np.flip(array, axis=1)
    if p.flip_v:
        array = np.flip(array, axis=0)

    return np.ascontiguousarray(array)


def apply_augment(sample, p):
    """ one affine transform, reflected at the borders, then the flips

    The image is sampled bilinearly, masks and weights by nearest neighbor. """
    if abs(p.scale) < SCALE_EPSILON:
        raise exc.AugmentError(f'scale {p.scale} collapses the image')

    if p.is_geometric_identity:
        image, masks = sample.image.copy(), sample.masks.copy()
        weights = None if sample.weights is None else sample.weights.copy()
    else:
        coords = source_coordinates(sample.shape, p)
        def warp(plane, order):
            return ndimage.map_coordinates(plane, coords, order=order,
                                           mode='reflect').astype(plane.dtype)

        image = warp(sample.image, 1)
        masks = np.stack([warp(sample.masks[..., k], 0) for k in range(sample.masks.shape[-1])],
                         axis=-1)
        weights = None if sample.weights is None else warp(sample.weights, 0)

    image, masks = _flip(image, p), _flip(masks, p)
    weights = None if weights is None else _flip(weights, p)
    return replace(sample, image=image, masks=masks, weights=weights)
