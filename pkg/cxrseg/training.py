""" the training loop, evaluation and prediction """

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
import numpy as np
from cxrseg import exceptions as exc
from cxrseg import rasters
from cxrseg.augment import AugmentRanges
from cxrseg.blocks import NetConfig, build_res_cr_net
from cxrseg.checkpoint import save_checkpoint, load_checkpoint
from cxrseg.config import (setting,
                           field_docs,
                           field_kinds,
                           dump_dataclass,
                           load_dataclass,
                           read_key_values)
from cxrseg.datasets import SampleStore, WeightParams, batch_iterator, read_manifest
from cxrseg.history import EpochRecord, HistoryWriter
from cxrseg.losses import (argmax_channels,
                           confusion_counts,
                           metrics_from_counts,
                           soft_tanimoto_loss,
                           tanimoto_with_complement)
from cxrseg.reports import write_metrics_csv, write_json
from cxrseg.schemas import EvaluationSummarySchema
from cxrseg.tensor import Tape, Tensor, backward
from cxrseg.utils import log as log_root, logt, keyed_rng, run_parallel, bind_file_handler, STREAM_DROPOUT

log = logt


@dataclass
class LossConfig:
    smoothing: float = setting(1.0, 'float', 'smoothing scalar s of every overlap measure')
    weighting: str = setting('per-pixel', 'choice:none|per-pixel',
                             'weight the training loss with contour weight maps')


@dataclass
class ContourConfig:
    contour_w0: float = setting(10.0, 'float', 'height of the raised border')
    contour_sigma: float = setting(5.0, 'float', 'width of the raised border in pixels')
    contour_balance: bool = setting(False, 'bool', 'inverse class frequency balance')
    contour_classes: str = setting('positive', 'choice:positive|all',
                                   'whose contours are raised')
    weight_cache: bool = setting(False, 'bool', 'cache weight maps as 16 bit png next to masks')


@dataclass
class RunConfig:
    epochs: int = setting(300, 'int', 'fixed epoch budget')
    batch_size: int = setting(8, 'int', 'samples per batch')
    learning_rate: float = setting(1e-3, 'float', 'adam step size, 0 freezes the weights')
    beta1: float = setting(0.9, 'float', 'adam first moment decay')
    beta2: float = setting(0.999, 'float', 'adam second moment decay')
    epsilon: float = setting(1e-7, 'float', 'adam denominator offset')
    seed: int = setting(0, 'int', 'seed of every random stream')
    checkpoint_every: int = setting(10, 'int', 'epochs between periodic checkpoints, 0 for none')
    positive_class: int = setting(1, 'int', 'class scored by dice, precision, recall and f1')
    manifest: Path = setting(None, 'path', 'dataset manifest')
    out_dir: Path = setting(None, 'path', 'run directory')


SECTIONS = (('net', NetConfig),
            ('loss', LossConfig),
            ('contour', ContourConfig),
            ('augment', AugmentRanges),
            ('run', RunConfig))

CONFIG_KEYS = {key: doc for _, cls in SECTIONS for key, doc in field_docs(cls).items()}


@dataclass
class TrainConfig:
    net: NetConfig = field(default_factory=NetConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    contour: ContourConfig = field(default_factory=ContourConfig)
    augment: AugmentRanges = field(default_factory=AugmentRanges)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self):
        self.net.validate()
        r = self.run
        if r.epochs < 1:
            raise exc.ConfigError(f'must be >= 1 got {r.epochs}', field='epochs')
        if r.batch_size < 1:
            raise exc.ConfigError(f'must be >= 1 got {r.batch_size}', field='batch_size')
        if r.learning_rate < 0:
            raise exc.ConfigError(f'must be >= 0 got {r.learning_rate}', field='learning_rate')
        for name in ('beta1', 'beta2'):
            if not 0 <= getattr(r, name) < 1:
                raise exc.ConfigError(f'must be in [0, 1) got {getattr(r, name)}', field=name)
        if not r.epsilon > 0:
            raise exc.ConfigError(f'must be > 0 got {r.epsilon}', field='epsilon')
        if not self.loss.smoothing > 0:
            raise exc.ConfigError(f'must be > 0 got {self.loss.smoothing}', field='smoothing')
        if not 0 <= r.positive_class < self.net.num_classes:
            raise exc.ConfigError(f'must be a class index got {r.positive_class}',
                                  field='positive_class')
        if self.augment.scale_min <= 0 or self.augment.scale_max < self.augment.scale_min:
            raise exc.ConfigError(f'bad scale range {self.augment.scale_min} '
                                  f'{self.augment.scale_max}', field='scale_min')

        return self

    def dumps(self):
        lines = []
        for section, _ in SECTIONS:
            lines.append(f'# {section}')
            lines.extend(dump_dataclass(getattr(self, section)))

        return '\n'.join(lines) + '\n'

    @classmethod
    def loads(cls, text):
        values = read_key_values(text, CONFIG_KEYS)
        return cls(**{section: load_dataclass(sc, values) for section, sc in SECTIONS})

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise exc.ConfigError(f'could not read {path}: {e}', field='config') from e

        return cls.loads(text)

    def override(self, **values):
        """ replace the given keys wherever they live, None leaves a key alone """
        sections = {}
        for key, value in values.items():
            if value is None:
                continue

            for section, sc in SECTIONS:
                if key in field_kinds(sc):
                    sections.setdefault(section, {})[key] = value
                    break
            else:
                raise exc.UnknownConfigKeyError('unknown key', field=key)

        return replace(self, **{section: replace(getattr(self, section), **kwargs)
                                for section, kwargs in sections.items()})

    def weight_params(self):
        c = self.contour
        return WeightParams(c.contour_w0, c.contour_sigma, c.contour_balance,
                            c.contour_classes, self.run.positive_class, c.weight_cache)


class Adam:
    """ bias corrected adaptive moments, parameters updated in place in a fixed order """

    def __init__(self, parameters, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.parameters = list(parameters)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps = 0
        self.m = [np.zeros_like(p.data) for p in self.parameters]
        self.v = [np.zeros_like(p.data) for p in self.parameters]

    def step(self, grads):
        self.steps += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1 - b1 ** self.steps
        correction2 = 1 - b2 ** self.steps
        for p, m, v in zip(self.parameters, self.m, self.v):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)

            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (self.learning_rate * (m / correction1)
                      / (np.sqrt(v / correction2) + self.epsilon))
            p.data -= update.astype(p.dtype, copy=False)


def parameter_norms(model):
    return {p.name: float(np.linalg.norm(p.data)) for p in model.parameters()}


def batch_loss(model, batch, cfg, training=False, rng=None):
    """ probabilities and the (weighted) Tanimoto loss of one batch """
    probs = model.forward(Tensor(batch.images, dtype=model.dtype), training=training, rng=rng)
    weights = batch.weights if cfg.loss.weighting == 'per-pixel' else None
    return probs, soft_tanimoto_loss(probs, batch.masks.astype(model.dtype, copy=False),
                                     cfg.loss.smoothing, weights)


def hard_dice(probs, masks, positive_class):
    """ dice of the argmax prediction of each sample """
    hard = argmax_channels(probs)
    return [metrics_from_counts(confusion_counts(h, m, positive_class))['dice']
            for h, m in zip(hard, masks)]


def validate_epoch(model, store, cfg, jobs=1):
    losses, metrics, dices = [], [], []
    for batch in batch_iterator(store, 'val', cfg.run.batch_size, cfg.run.seed, 0, None, jobs):
        probs, loss = batch_loss(model, batch, cfg, training=False)
        losses.append(float(loss.data))
        metrics.append(tanimoto_with_complement(probs.data, batch.masks, cfg.loss.smoothing))
        dices.extend(hard_dice(probs.data, batch.masks, cfg.run.positive_class))

    return float(np.mean(losses)), float(np.mean(metrics)), float(np.mean(dices))


def train(cfg, jobs=1, store=None):
    """ fixed budget training, returns the history and the run directory

    run directory contents: config.txt, history.csv, times.csv,
    train.log, best.ckpt, epoch-XXXX.ckpt, final.ckpt """
    cfg.validate()
    r = cfg.run
    if r.out_dir is None:
        raise exc.ConfigError('no run directory given', field='out_dir')

    run_dir = Path(r.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / 'config.txt').write_text(cfg.dumps())

    if store is None:
        if r.manifest is None:
            raise exc.ConfigError('no manifest given', field='manifest')

        store = SampleStore(read_manifest(r.manifest), cfg.weight_params(), jobs=jobs)

    for split in ('train', 'val'):
        store.samples(split)  # fail early on an empty split

    handler = bind_file_handler(run_dir / 'train.log')
    try:
        return fit(cfg, store, run_dir, jobs), run_dir
    finally:
        handler.close(log_root)


def fit(cfg, store, run_dir, jobs=1):
    r = cfg.run
    model = build_res_cr_net(cfg.net, seed=r.seed)
    optimizer = Adam(model.parameters(), r.learning_rate, r.beta1, r.beta2, r.epsilon)
    writer = HistoryWriter(run_dir)
    best = -np.inf
    for epoch in range(1, r.epochs + 1):
        start = time.perf_counter()
        losses, metrics, dices = [], [], []
        batches = batch_iterator(store, 'train', r.batch_size, r.seed, epoch, cfg.augment, jobs)
        for index, batch in enumerate(batches):
            rng = keyed_rng(r.seed, STREAM_DROPOUT, epoch, index)
            with Tape() as tape:
                probs, loss = batch_loss(model, batch, cfg, training=True, rng=rng)

            value = float(loss.data)
            if not np.isfinite(value):
                raise exc.NumericalFailureError(f'loss is {value} in epoch {epoch}',
                                                batch_index=index,
                                                diagnostics=parameter_norms(model))

            optimizer.step(backward(tape, loss))
            losses.append(value)
            metrics.append(tanimoto_with_complement(probs.data, batch.masks, cfg.loss.smoothing))
            dices.extend(hard_dice(probs.data, batch.masks, r.positive_class))
            log.debug(f'epoch {epoch} batch {index} loss {value:.5f}')

        val_loss, val_metric, val_dice = validate_epoch(model, store, cfg, jobs)
        record = EpochRecord(epoch, float(np.mean(losses)), float(np.mean(metrics)),
                             float(np.mean(dices)), val_loss, val_metric, val_dice)
        seconds = time.perf_counter() - start
        writer.append(record, seconds)
        log.info(f'epoch {epoch}/{r.epochs} loss {record.train_loss:.4f} '
                 f'val loss {val_loss:.4f} val tanimoto {val_metric:.4f} '
                 f'val dice {val_dice:.4f} {seconds:.1f}s')

        if val_metric > best:
            best = val_metric
            save_checkpoint(model, run_dir / 'best.ckpt')

        if r.checkpoint_every and epoch % r.checkpoint_every == 0:
            save_checkpoint(model, run_dir / f'epoch-{epoch:04d}.ckpt')

    save_checkpoint(model, run_dir / 'final.ckpt')
    return writer.history


def model_predictor(model):
    def predict(images):
        return model.forward(Tensor(images, dtype=model.dtype), training=False).data

    return predict


@dataclass
class Evaluation:
    rows: list  # per sample and class metric dicts
    aggregate: dict  # class -> mean metrics
    tanimoto: float
    paths: list = field(default_factory=list)


def evaluate(model_file, manifest, split='val', out_dir=None, classes=None, jobs=1,
             predictor=None, smoothing=1.0):
    """ per sample Dice, precision, recall and f1 plus the mean Tanimoto coefficient

    predictor maps a [b, rows, cols, 1] batch to class probabilities and
    defaults to the checkpointed model in inference mode. """
    if isinstance(manifest, (str, Path)):
        manifest = read_manifest(manifest)

    if predictor is None:
        model = load_checkpoint(model_file)
        predictor = model_predictor(model)
        num_classes = model.config.num_classes
    else:
        num_classes = None

    samples = SampleStore(manifest, jobs=jobs).samples(split)
    if num_classes is not None and samples[0].masks.shape[-1] != num_classes:
        raise exc.ShapeMismatchError(f'{model_file} and {split} masks', dimension='classes',
                                     expected=num_classes, actual=samples[0].masks.shape[-1])

    classes = [1] if classes is None else list(classes)

    def one(sample):
        probs = np.asarray(predictor(sample.image[None, ..., None]))[0]
        hard = argmax_channels(probs)
        rows = []
        for cls in classes:
            metrics = metrics_from_counts(confusion_counts(hard, sample.masks, cls))
            rows.append({'sample_id': sample.sample_id, 'class': cls, **metrics})

        return rows, tanimoto_with_complement(probs, sample.masks, smoothing)

    results = run_parallel(one, samples, jobs=jobs)
    rows = [row for sample_rows, _ in results for row in sample_rows]
    aggregate = {cls: {k: float(np.mean([row[k] for row in rows if row['class'] == cls]))
                       for k in ('dice', 'precision', 'recall', 'f1')}
                 for cls in classes}
    tanimoto = float(np.mean([t for _, t in results]))
    evaluation = Evaluation(rows, aggregate, tanimoto)
    if out_dir is not None:
        out_dir = Path(out_dir)
        summary = {'model': str(model_file), 'split': split, 'samples': len(samples),
                   'classes': classes, 'tanimoto': tanimoto,
                   'aggregate': {str(cls): m for cls, m in aggregate.items()}}
        EvaluationSummarySchema().validate_strict(summary)
        mean_rows = [{'sample_id': 'mean', 'class': cls, **m} for cls, m in aggregate.items()]
        evaluation.paths = [write_metrics_csv(rows + mean_rows, out_dir / 'metrics.csv'),
                            write_json(summary, out_dir / 'summary.json')]

    return evaluation


def predict(model_file, image_paths, out_dir, probabilities=False, equalize=False):
    """ argmax masks as {0, 255} png, one per input image at the input size

    Images that fail to decode are reported and skipped. """
    model = load_checkpoint(model_file)
    predictor = model_predictor(model)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    num_classes = model.config.num_classes
    written, failures = [], {}
    for path in image_paths:
        path = Path(path)
        try:
            image = rasters.read_raster(path)
        except exc.DecodeError as e:
            log.error(str(e))
            failures[path] = str(e)
            continue

        if equalize:
            image = rasters.histogram_equalize(image)

        probs = predictor(image[None, ..., None])[0]
        hard = argmax_channels(probs)
        if num_classes == 2:
            targets = [(out_dir / f'{path.stem}.mask.png', hard[..., 1])]
        else:
            targets = [(out_dir / f'{path.stem}.mask-{k}.png', hard[..., k])
                       for k in range(1, num_classes)]

        if probabilities:
            for k in range(num_classes):
                target = out_dir / f'{path.stem}.prob-{k}.png'
                rasters.write_raster(target, probs[..., k], bitdepth=16)
                written.append(target)

        for target, plane in targets:
            rasters.write_mask(target, plane)
            written.append(target)

    return written, failures
