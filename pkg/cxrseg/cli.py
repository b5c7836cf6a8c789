#!/usr/bin/env python3
from cxrseg.config import auth
__doc__ = f"""
cxrseg cli for training, evaluating and running lung segmentation networks.
Usage:
    cxrseg train      [options]
    cxrseg evaluate   [options] <model-file> [--class=<k>...]
    cxrseg predict    [options] <model-file> <image>...
    cxrseg plot       [options] <history-file>
    cxrseg synth-data [options]
    cxrseg ingest     [options] <images-dir> <masks-dir>
    cxrseg inspect    [options]

Commands:
    train       train a network from a manifest, writes a run directory

                options: --config --manifest --out --seed --epochs --batch-size

    evaluate    per sample dice, precision, recall and f1 plus mean tanimoto

                options: --manifest --split --class --out

    predict     write argmax masks as png for each image

                options: --out --probabilities --equalize

    plot        loss and metric svg charts from a history.csv

    synth-data  generate a synthetic dataset and its manifest

                options: --count --rows --cols --seed --val-fraction --out

    ingest      resize and equalize an image and mask directory into a dataset

                options: --rows --cols --groups --val-fraction --seed --out

    inspect     layer and parameter summary of the configured network

                options: --config --variants

Options:
    -c --config=FILE        key=value run configuration
    -m --manifest=FILE      dataset manifest, overrides the config
    -o --out=DIR            output directory, overrides the config
    -s --seed=SEED          seed of every random stream, overrides the config
    --epochs=N              epoch budget, overrides the config
    --batch-size=N          samples per batch, overrides the config
    --device=DEVICE         reserved, only none is supported  [default: none]

    --split=NAME            manifest split to evaluate        [default: val]
    --class=<k>             class index to score, repeatable
    --probabilities         also write per class probability rasters
    --equalize              histogram equalize images before predicting

    --count=N               number of synthetic samples       [default: 32]
    --rows=N                rows of generated or ingested rasters
    --cols=N                cols of generated or ingested rasters
    --val-fraction=F        fraction of groups held out for validation
    --groups=FILE           tab separated sample id to patient id table

    --variants              parameter counts of every architecture variant

    -j --jobs=N             number of parallel workers        [default: {auth.get('jobs')}]
    -v --verbose            print extra information
    --log-level=LEVEL       set python logging log level
"""

import sys
from pathlib import Path
from pyontutils import clifun as clif
from cxrseg import exceptions as exc
from cxrseg.utils import GetTimeNow, log, logd, logt, set_log_level

SYNTH_SIDE = 96
INGEST_ROWS, INGEST_COLS = 300, 340
SYNTH_VAL_FRACTION = 0.2
INGEST_VAL_FRACTION = 0.05


def _int(value, name):
    if value is None:
        return None

    try:
        return int(value)
    except ValueError as e:
        raise exc.ConfigError(f'not an integer {value!r}', field=name) from e


def _path(value):
    if value:
        return Path(value).expanduser().resolve()


class Options(clif.Options):

    @property
    def config(self):
        return _path(self._args['--config'])

    @property
    def manifest(self):
        return _path(self._args['--manifest'])

    @property
    def out(self):
        return _path(self._args['--out'])

    @property
    def seed(self):
        return _int(self._args['--seed'], 'seed')

    @property
    def epochs(self):
        return _int(self._args['--epochs'], 'epochs')

    @property
    def batch_size(self):
        return _int(self._args['--batch-size'], 'batch_size')

    @property
    def device(self):
        device = self._args['--device']
        if device != 'none':
            raise exc.ConfigError(f'only none is supported got {device!r}', field='device')

        return device

    @property
    def model_file(self):
        return _path(self._args['<model-file>'])

    @property
    def history_file(self):
        return _path(self._args['<history-file>'])

    @property
    def images(self):
        return [Path(i).expanduser() for i in self._args['<image>']]

    @property
    def images_dir(self):
        return _path(self._args['<images-dir>'])

    @property
    def masks_dir(self):
        return _path(self._args['<masks-dir>'])

    @property
    def split(self):
        return self._args['--split']

    @property
    def classes(self):
        classes = self._args['--class']
        return [_int(c, 'class') for c in classes] if classes else None

    @property
    def count(self):
        return _int(self._args['--count'], 'count')

    @property
    def rows(self):
        return _int(self._args['--rows'], 'rows')

    @property
    def cols(self):
        return _int(self._args['--cols'], 'cols')

    @property
    def val_fraction(self):
        vf = self._args['--val-fraction']
        if vf is None:
            return None

        try:
            return float(vf)
        except ValueError as e:
            raise exc.ConfigError(f'not a number {vf!r}', field='val_fraction') from e

    @property
    def groups(self):
        return _path(self._args['--groups'])

    @property
    def jobs(self):
        return _int(self._args['--jobs'], 'jobs')

    @property
    def log_level(self):
        ll = self._args['--log-level']
        if ll is None:
            return
        if ll.isdigit() or ll[0] == '-' and ll[1:].isdigit():
            return int(ll)
        else:
            return ll


def read_groups(path):
    """ sample id to group id from a two column tab separated file """
    groups = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith('#'):
            continue

        parts = line.split('\t')
        if len(parts) != 2:
            raise exc.ManifestError(f'{path} line {lineno}: expected sample_id<TAB>group_id')

        groups[parts[0].strip()] = parts[1].strip()

    return groups


class Main(clif.Dispatcher):

    def __init__(self, options, time_now=GetTimeNow()):
        self._time_now = time_now
        self._folder_timestamp = time_now.START_TIMESTAMP_SAFE
        super().__init__(options)
        if not self.options.verbose:
            set_log_level('INFO', log, logd, logt)
        else:
            set_log_level('DEBUG', log, logd, logt)

        if self.options.log_level:
            set_log_level(self.options.log_level, log, logd, logt)

        self.options.device  # reject anything but none before doing work

    def _train_config(self):
        from cxrseg.training import TrainConfig
        cfg = (TrainConfig.from_file(self.options.config)
               if self.options.config else TrainConfig())
        return cfg.override(epochs=self.options.epochs,
                            batch_size=self.options.batch_size,
                            seed=self.options.seed,
                            manifest=self.options.manifest,
                            out_dir=self.options.out)

    def train(self):
        from cxrseg.training import train
        cfg = self._train_config()
        if cfg.run.out_dir is None:
            run_path = auth.get_path('run-path')
            cfg = cfg.override(out_dir=Path(run_path) / self._folder_timestamp)

        history, run_dir = train(cfg, jobs=self.options.jobs)
        last = history[-1]
        print(f'{run_dir}\nepoch {last.epoch} val tanimoto {last.val_metric:.4f} '
              f'val dice {last.val_dice:.4f}')

    def evaluate(self):
        from cxrseg.reports import metrics_table
        from cxrseg.training import evaluate
        if self.options.manifest is None:
            raise exc.ConfigError('evaluate needs --manifest', field='manifest')

        evaluation = evaluate(self.options.model_file, self.options.manifest,
                              split=self.options.split, out_dir=self.options.out,
                              classes=self.options.classes, jobs=self.options.jobs)
        print(metrics_table(evaluation.aggregate))
        print(f'mean tanimoto {evaluation.tanimoto:.4f}')
        for path in evaluation.paths:
            print(path)

    def predict(self):
        from cxrseg.training import predict
        out = self.options.out if self.options.out else Path.cwd()
        written, failures = predict(self.options.model_file, self.options.images, out,
                                    probabilities=self.options.probabilities,
                                    equalize=self.options.equalize)
        for path in written:
            print(path)

        if failures:
            raise exc.DataError(f'{len(failures)} of {len(self.options.images)} images '
                                f'could not be read: {", ".join(str(p) for p in failures)}')

    def plot(self):
        from cxrseg.reports import plot_history
        for path in plot_history(self.options.history_file, self.options.out):
            print(path)

    def _data_out(self, name):
        if self.options.out is not None:
            return self.options.out

        data_path = auth.get_path('data-path')
        if data_path is None:
            raise exc.ConfigError(f'{name} needs --out or a data-path', field='out')

        return Path(data_path) / name

    def synth_data(self):
        from cxrseg.synthetic import generate_synthetic_dataset
        out = self._data_out('synthetic')
        seed = self.options.seed
        manifest = generate_synthetic_dataset(
            self.options.count,
            self.options.rows or SYNTH_SIDE,
            self.options.cols or SYNTH_SIDE,
            int(auth.get('default-seed')) if seed is None else seed,
            out,
            SYNTH_VAL_FRACTION if self.options.val_fraction is None else self.options.val_fraction)
        print(f'{out / "manifest.tsv"} train {len(manifest.split("train"))} '
              f'val {len(manifest.split("val"))}')

    def ingest(self):
        from cxrseg.datasets import ingest_directory
        out = self._data_out(self.options.images_dir.resolve().parent.name or 'ingested')
        groups = read_groups(self.options.groups) if self.options.groups else None
        seed = self.options.seed
        manifest = ingest_directory(
            self.options.images_dir, self.options.masks_dir, out,
            self.options.rows or INGEST_ROWS,
            self.options.cols or INGEST_COLS,
            groups,
            INGEST_VAL_FRACTION if self.options.val_fraction is None else self.options.val_fraction,
            int(auth.get('default-seed')) if seed is None else seed,
            self.options.jobs)
        print(f'{out / "manifest.tsv"} train {len(manifest.split("train"))} '
              f'val {len(manifest.split("val"))}')

    def inspect(self):
        from cxrseg import blocks
        from cxrseg.config import config
        from cxrseg.reports import layer_table, variant_table
        cfg = self._train_config().net
        if self.options.variants:
            print(variant_table(blocks.variant_counts(cfg), config.reference_param_count))
            return

        model = blocks.build_res_cr_net(cfg)
        delta = blocks.reference_delta(model)
        print(layer_table(blocks.layer_summary(model), delta['count']))
        print(f'reference {delta["reference"]:,} delta {delta["delta"]:+,}')


EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def exit_code(e):
    if isinstance(e, (exc.ConfigError, exc.KernelError)):
        return EXIT_USAGE
    elif isinstance(e, (exc.DataError, exc.CheckpointError, exc.ShapeMismatchError)):
        return EXIT_DATA
    elif isinstance(e, (exc.NumericalFailureError, exc.NonFiniteError)):
        return EXIT_NUMERICAL


def main():
    from docopt import docopt, parse_defaults
    from cxrseg import __version__
    args = docopt(__doc__, version=f'cxrseg {__version__}')
    defaults = {o.name:o.value if o.argcount else None for o in parse_defaults(__doc__)}
    options = Options(args, defaults)
    try:
        main = Main(options)
        main()
    except exc.CxrSegError as e:
        code = exit_code(e)
        if code is None:
            log.exception(e)
            raise

        log.error(str(e))
        if isinstance(e, exc.NumericalFailureError):
            for name, norm in e.diagnostics.items():
                log.error(f'{name} norm {norm:.6g}')

        sys.exit(code)
    except BaseException as e:
        if isinstance(e, SystemExit):
            raise

        log.exception(e)
        raise exc.CxrSegError(f'Command failed!\n{options!r}') from e


if __name__ == '__main__':
    main()
