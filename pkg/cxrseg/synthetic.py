""" desk scale stand-in for chest radiographs

Two smooth bright elliptical lungs on a textured background, crossed by
rib stripes and the odd opacity patch. The masks are the ellipses
themselves so the ground truth is exact.
"""

import json
from pathlib import Path
import numpy as np
from scipy import ndimage
from cxrseg import exceptions as exc
from cxrseg import rasters
from cxrseg.datasets import ManifestEntry, split_manifest, write_manifest
from cxrseg.losses import confusion_counts, metrics_from_counts
from cxrseg.utils import logd, keyed_rng, STREAM_SYNTH

log = logd.getChild('synthetic')

MIN_SIDE = 16
AREA_RANGE = 0.15, 0.55
MAX_ATTEMPTS = 20


def _lungs(rng, rows, cols):
    """ (center row, center col, vertical semi-axis, horizontal semi-axis, tilt) per lung """
    row_center = rows * (0.5 + rng.uniform(-0.1, 0.1))
    lungs = []
    for side, col_fraction in ((-1, 0.28), (1, 0.72)):
        lungs.append((row_center + rows * rng.uniform(-0.03, 0.03),
                      cols * (col_fraction + rng.uniform(-0.05, 0.05)),
                      rows * rng.uniform(0.24, 0.34),
                      cols * rng.uniform(0.12, 0.16),
                      np.deg2rad(side * rng.uniform(0, 12))))

    return lungs


def _ellipse_radius(rr, cc, lung):
    """ squared normalized radius, 1 on the outline """
    r0, c0, a, b, tilt = lung
    dy, dx = rr - r0, cc - c0
    cos, sin = np.cos(tilt), np.sin(tilt)
    along = dy * cos + dx * sin
    across = -dy * sin + dx * cos
    return (along / a) ** 2 + (across / b) ** 2


def _ribs(rng, rr, cc, rows, cols):
    out = np.zeros(rr.shape)
    for _ in range(rng.integers(5, 9)):
        r0 = rows * rng.uniform(0.1, 0.9)
        slope = rng.uniform(-0.3, 0.3)
        bend = rng.uniform(-1.5, 1.5) / cols
        width = rows * rng.uniform(0.012, 0.025)
        centerline = r0 + slope * (cc - cols / 2) + bend * (cc - cols / 2) ** 2
        out += rng.uniform(0.04, 0.09) * np.exp(-((rr - centerline) / width) ** 2)

    return out


def _patches(rng, rr, cc, rows, cols):
    out = np.zeros(rr.shape)
    for _ in range(rng.integers(0, 3)):
        r0, c0 = rows * rng.uniform(0.2, 0.8), cols * rng.uniform(0.15, 0.85)
        sigma = rows * rng.uniform(0.04, 0.08)
        out += rng.uniform(-0.12, 0.12) * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * sigma ** 2))

    return out


def synthetic_sample(seed, index, rows, cols):
    """ image in [0, 1] and binary lung plane for one sample """
    rng = keyed_rng(seed, STREAM_SYNTH, index)
    rr, cc = np.meshgrid(np.arange(rows, dtype=np.float64), np.arange(cols, dtype=np.float64),
                         indexing='ij')
    for _ in range(MAX_ATTEMPTS):
        lungs = _lungs(rng, rows, cols)
        radii = np.minimum(*(_ellipse_radius(rr, cc, lung) for lung in lungs))
        lung = (radii <= 1).astype(np.float32)
        if AREA_RANGE[0] <= lung.mean() <= AREA_RANGE[1]:
            break
    else:
        raise exc.DataError(f'could not place lungs covering {AREA_RANGE} of a {rows}x{cols} image')

    texture = ndimage.gaussian_filter(rng.normal(size=(rows, cols)), sigma=max(rows, cols) / 12)
    texture *= 0.05 / (texture.std() + 1e-12)
    image = (0.25 + texture
             + 0.35 / (1 + np.exp(-8 * (1 - radii)))
             + _ribs(rng, rr, cc, rows, cols)
             + _patches(rng, rr, cc, rows, cols)
             + rng.normal(0, 0.01, size=(rows, cols)))
    return np.clip(image, 0, 1).astype(np.float32), lung


def mean_mask_baseline(lungs):
    """ mean Dice of the thresholded average mask against every mask """
    lungs = np.asarray(lungs)
    mean_mask = (lungs.mean(axis=0) >= 0.5).astype(np.float32)
    predicted = rasters.complement_mask(mean_mask)
    dices = [metrics_from_counts(confusion_counts(predicted, rasters.complement_mask(l)))['dice']
             for l in lungs]
    return float(np.mean(dices))


def generate_synthetic_dataset(count, rows, cols, seed, out_dir, val_fraction=0.2):
    if count < 2:
        raise exc.DataError(f'need at least 2 samples got {count}')

    if rows < MIN_SIDE or cols < MIN_SIDE:
        raise exc.DataError(f'{rows}x{cols} is too small for two lungs, '
                            f'both sides must be at least {MIN_SIDE}')

    out_dir = Path(out_dir)
    entries, lungs = [], []
    width = len(str(count - 1))
    for index in range(count):
        sample_id = f'synth-{index:0{width}d}'
        image, lung = synthetic_sample(seed, index, rows, cols)
        image_rel, mask_rel = f'images/{sample_id}.png', f'masks/{sample_id}.png'
        rasters.write_raster(out_dir / image_rel, image)
        rasters.write_mask(out_dir / mask_rel, lung)
        entries.append(ManifestEntry(sample_id, image_rel, (mask_rel,), sample_id))
        lungs.append(lung)

    manifest = split_manifest(entries, val_fraction, seed, root=out_dir)
    write_manifest(manifest, out_dir / 'manifest.tsv')
    baseline = mean_mask_baseline(lungs)
    if baseline >= 0.9:
        log.warning(f'mean mask baseline dice {baseline:.3f} leaves little headroom')

    summary = {'count': count, 'rows': rows, 'cols': cols, 'seed': seed,
               'val_count': len(manifest.split('val')),
               'mean_mask_dice': baseline,
               'lung_fraction': [float(l.mean()) for l in lungs]}
    with open(out_dir / 'synthetic.json', 'wt') as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    log.info(f'wrote {count} synthetic samples to {out_dir}, mean mask dice {baseline:.3f}')
    return manifest
