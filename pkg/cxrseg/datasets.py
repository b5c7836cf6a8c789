""" manifests, leakage free splits and the batch stream """

import csv
import math
from dataclasses import dataclass, replace, field
from pathlib import Path
import numpy as np
from cxrseg import exceptions as exc
from cxrseg import rasters
from cxrseg.augment import Sample, apply_augment, params_for
from cxrseg.contours import weight_maps_for_dataset, cache_path
from cxrseg.utils import logd, keyed_rng, run_parallel, STREAM_SPLIT

log = logd.getChild('datasets')

MANIFEST_COLUMNS = 'sample_id', 'image_path', 'mask_path', 'group_id', 'split'
SPLITS = 'train', 'val'
# several per class masks share the mask_path column
MASK_SEPARATOR = '|'


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    image_path: str
    mask_paths: tuple
    group_id: str = None
    split: str = 'train'

    def __post_init__(self):
        if self.group_id is None:
            object.__setattr__(self, 'group_id', f'unknown:{self.sample_id}')

        if self.split not in SPLITS:
            raise exc.ManifestError(f'{self.sample_id}: unknown split {self.split!r}')

        if isinstance(self.mask_paths, str):
            object.__setattr__(self, 'mask_paths', tuple(self.mask_paths.split(MASK_SEPARATOR)))


@dataclass
class DatasetManifest:
    entries: list
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.entries)

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def groups(self, name):
        return {e.group_id for e in self.split(name)}

    def resolve(self, relative):
        path = Path(relative)
        return path if path.is_absolute() else self.root / path

    def validate(self, check_files=False):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise exc.ManifestError('duplicate sample ids')

        leaked = self.groups('train') & self.groups('val')
        if leaked:
            raise exc.LeakageError(f'groups in both splits: {sorted(leaked)[:5]}')

        if check_files:
            for e in self.entries:
                for p in (e.image_path,) + e.mask_paths:
                    if not self.resolve(p).exists():
                        raise exc.ManifestError(f'{e.sample_id}: missing file {p}')

        return self


def read_manifest(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise exc.ManifestError(f'could not read manifest {path}: {e}') from e

    reader = csv.DictReader(text.splitlines(), delimiter='\t')
    if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
        raise exc.ManifestError(f'{path}: header must be {" ".join(MANIFEST_COLUMNS)}')

    entries = []
    for lineno, row in enumerate(reader, 2):
        if None in row.values() or None in row:
            raise exc.ManifestError(f'{path} line {lineno}: wrong number of fields')

        try:
            entries.append(ManifestEntry(sample_id=row['sample_id'],
                                         image_path=row['image_path'],
                                         mask_paths=row['mask_path'],
                                         group_id=row['group_id'] or None,
                                         split=row['split']))
        except exc.ManifestError as e:
            raise exc.ManifestError(f'{path} line {lineno}: {e}') from e

    return DatasetManifest(entries, path.parent).validate()


def write_manifest(manifest, path):
    manifest.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wt', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, delimiter='\t', lineterminator='\n')
        writer.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            writer.writerow((e.sample_id, e.image_path, MASK_SEPARATOR.join(e.mask_paths),
                             e.group_id, e.split))

    return path


def split_manifest(entries, val_fraction, seed, root=None):
    """ assign whole groups to train or val

    Groups are visited in a seeded order and moved into val while they fit
    under the target, any shortfall is smaller than every group left over. """
    if not 0 < val_fraction < 1:
        raise exc.SplitError(f'val_fraction must be in (0, 1) got {val_fraction}')

    entries = list(entries.entries if isinstance(entries, DatasetManifest) else entries)
    if root is None:
        root = Path()

    groups = {}
    for e in entries:
        groups.setdefault(e.group_id, []).append(e)

    if len(groups) < 2:
        raise exc.SplitError(f'need at least 2 groups to split, have {len(groups)}')

    target = round(val_fraction * len(entries))
    names = sorted(groups)
    order = keyed_rng(seed, STREAM_SPLIT).permutation(len(names))
    val = set()
    count = 0
    for i in order:
        name = names[i]
        size = len(groups[name])
        if count + size <= target and len(val) + 1 < len(groups):
            val.add(name)
            count += size

    if not val:
        # every group is larger than the target, take the smallest one
        val.add(min(names, key=lambda n: (len(groups[n]), n)))
        count = len(groups[next(iter(val))])

    log.debug(f'split {len(entries)} samples into {len(entries) - count} train {count} val')
    manifest = DatasetManifest([replace(e, split='val' if e.group_id in val else 'train')
                                for e in entries], root)
    return manifest.validate()


def load_sample(manifest, entry):
    """ decode one manifest entry, failures are reported with its sample id """
    try:
        image = rasters.read_raster(manifest.resolve(entry.image_path))
        planes = [rasters.read_mask(manifest.resolve(p)) for p in entry.mask_paths]
        masks = (rasters.complement_mask(planes[0]) if len(planes) == 1 else
                 rasters.stack_masks(planes))
    except (exc.DataError, exc.ShapeMismatchError) as e:
        raise exc.SampleError(str(e), sample_id=entry.sample_id) from e

    return Sample(entry.sample_id, image, masks)


@dataclass
class WeightParams:
    contour_w0: float = 10.0
    contour_sigma: float = 5.0
    contour_balance: bool = False
    contour_classes: str = 'positive'
    positive_class: int = 1
    cache: bool = False


class SampleStore:
    """ decoded samples with their weight maps, loaded once per split """

    def __init__(self, manifest, weight_params=None, jobs=1, loader=None):
        self.manifest = manifest
        self.weight_params = weight_params
        self.jobs = jobs
        self.loader = loader if loader is not None else (lambda e: load_sample(manifest, e))
        self._samples = {}

    def samples(self, split):
        if split not in self._samples:
            entries = self.manifest.split(split)
            if not entries:
                raise exc.EmptySplitError(f'no samples in split {split!r}')

            samples = run_parallel(self.loader, entries, jobs=self.jobs)
            if self.weight_params is not None:
                wp = self.weight_params
                caches = ([cache_path(self.manifest.resolve(e.mask_paths[0])) for e in entries]
                          if wp.cache else None)
                maps = weight_maps_for_dataset([s.masks for s in samples], wp.contour_w0,
                                               wp.contour_sigma, wp.contour_balance,
                                               wp.positive_class, wp.contour_classes,
                                               jobs=self.jobs, cache_paths=caches)
                samples = [replace(s, weights=w.astype(np.float32))
                           for s, w in zip(samples, maps)]

            logd.info(f'loaded {len(samples)} {split} samples')
            self._samples[split] = samples

        return self._samples[split]


@dataclass
class Batch:
    images: np.ndarray  # [b, rows, cols, 1]
    masks: np.ndarray  # [b, rows, cols, classes]
    weights: np.ndarray  # [b, rows, cols] or None
    sample_ids: list

    def __len__(self):
        return len(self.sample_ids)


def batch_count(sample_count, batch_size):
    return math.ceil(sample_count / batch_size)


def collate(samples):
    shapes = {s.shape for s in samples}
    if len(shapes) != 1:
        raise exc.DataError(f'samples in one batch must share a shape got {sorted(shapes)}')

    weights = (None if any(s.weights is None for s in samples)
               else np.stack([s.weights for s in samples]))
    return Batch(np.stack([s.image for s in samples])[..., None],
                 np.stack([s.masks for s in samples]),
                 weights,
                 [s.sample_id for s in samples])


def batch_iterator(store, split, batch_size, seed, epoch, ranges=None, jobs=1):
    """ batches in manifest order, the last one may be short

    With ranges (and ranges.augment) every sample is augmented with the
    parameters keyed by (seed, epoch, ordinal within the split). """
    if batch_size < 1:
        raise exc.ConfigError(f'must be >= 1 got {batch_size}', field='batch_size')

    if isinstance(store, DatasetManifest):
        store = SampleStore(store, jobs=jobs)

    samples = store.samples(split)
    augment = ranges is not None and ranges.augment
    for start in range(0, len(samples), batch_size):
        chunk = list(enumerate(samples[start:start + batch_size], start))
        if augment:
            def one(pair):
                ordinal, sample = pair
                return apply_augment(sample, params_for(seed, epoch, ordinal, ranges))

            chunk = run_parallel(one, chunk, jobs=jobs)
        else:
            chunk = [s for _, s in chunk]

        yield collate(chunk)


def ingest_directory(images_dir, masks_dir, out_dir, target_rows=300, target_cols=340,
                     groups=None, val_fraction=0.05, seed=0, jobs=1):
    """ resize and equalize images, resize masks, write rasters and a split manifest

    Images and masks are paired by file stem. groups maps sample ids to
    patient ids, samples without one are their own group. """
    images_dir, masks_dir, out_dir = Path(images_dir), Path(masks_dir), Path(out_dir)
    masks = {p.stem: p for p in sorted(masks_dir.iterdir()) if p.suffix.lower() in rasters.SUFFIXES}
    images = [p for p in sorted(images_dir.iterdir()) if p.suffix.lower() in rasters.SUFFIXES]
    pairs = [(p, masks[p.stem]) for p in images if p.stem in masks]
    unmatched = len(images) - len(pairs)
    if unmatched:
        logd.warning(f'{unmatched} images have no mask and were skipped')

    if not pairs:
        raise exc.DataError(f'no image/mask pairs in {images_dir} and {masks_dir}')

    groups = {} if groups is None else groups

    def one(pair):
        image_path, mask_path = pair
        sample_id = image_path.stem
        image = rasters.read_raster(image_path)
        lung = rasters.read_mask(mask_path)
        image = rasters.histogram_equalize(rasters.resize(image, target_rows, target_cols, 'bilinear'))
        lung = rasters.resize(lung, target_rows, target_cols, 'nearest')
        rasters.complement_mask(lung)  # rejects anything that is not binary
        image_rel = Path('images', sample_id + '.png')
        mask_rel = Path('masks', sample_id + '.png')
        rasters.write_raster(out_dir / image_rel, image, bitdepth=16)
        rasters.write_mask(out_dir / mask_rel, lung)
        return ManifestEntry(sample_id, image_rel.as_posix(), (mask_rel.as_posix(),),
                             groups.get(sample_id))

    entries = run_parallel(one, pairs, jobs=jobs)
    manifest = split_manifest(entries, val_fraction, seed, root=out_dir)
    write_manifest(manifest, out_dir / 'manifest.tsv')
    logd.info(f'ingested {len(entries)} samples into {out_dir}')
    return manifest
