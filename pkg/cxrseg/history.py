""" per epoch training records, one csv row each, appended as they happen """

import csv
import math
from dataclasses import dataclass, astuple
from pathlib import Path
from cxrseg import exceptions as exc

COLUMNS = ('epoch', 'train_loss', 'train_metric', 'train_dice',
           'val_loss', 'val_metric', 'val_dice')
TIME_COLUMNS = 'epoch', 'wall_time'


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_metric: float
    train_dice: float
    val_loss: float
    val_metric: float
    val_dice: float

    def row(self):
        return [str(self.epoch)] + [repr(float(v)) for v in astuple(self)[1:]]


class TrainingHistory:

    def __init__(self, records=None):
        self.records = []
        for record in records or ():
            self.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise exc.DataError(f'epoch {record.epoch} after {self.records[-1].epoch}')

        self.records.append(record)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @classmethod
    def read(cls, path):
        path = Path(path)
        try:
            lines = path.read_text().splitlines()
        except OSError as e:
            raise exc.HistoryParseError(f'could not read {path}: {e}') from e

        if not lines:
            raise exc.HistoryParseError('empty history', line=1)

        header = lines[0].split(',')
        if tuple(header) != COLUMNS:
            raise exc.HistoryParseError(f'header must be {",".join(COLUMNS)}', line=1)

        history = cls()
        for lineno, values in enumerate(csv.reader(lines[1:]), 2):
            if not values:
                continue

            if len(values) != len(COLUMNS):
                raise exc.HistoryParseError(f'expected {len(COLUMNS)} fields got {len(values)}',
                                            line=lineno)
            try:
                epoch = int(values[0])
                numbers = [float(v) for v in values[1:]]
            except ValueError as e:
                raise exc.HistoryParseError(str(e), line=lineno) from e

            if not all(math.isfinite(n) for n in numbers):
                raise exc.HistoryParseError('non-finite value', line=lineno)

            try:
                history.append(EpochRecord(epoch, *numbers))
            except exc.DataError as e:
                raise exc.HistoryParseError(str(e), line=lineno) from e

        if not history.records:
            raise exc.HistoryParseError('no epochs recorded', line=len(lines))

        return history


class HistoryWriter:
    """ append rows to history.csv and wall times to the times.csv sidecar

    Wall time lives in its own file so that history.csv of two runs with
    the same seed can be compared byte for byte. """

    def __init__(self, run_dir):
        self.path = Path(run_dir) / 'history.csv'
        self.times_path = Path(run_dir) / 'times.csv'
        self.history = TrainingHistory()
        for path, columns in ((self.path, COLUMNS), (self.times_path, TIME_COLUMNS)):
            with open(path, 'wt', newline='') as f:
                f.write(','.join(columns) + '\n')

    def append(self, record, wall_time):
        self.history.append(record)
        with open(self.path, 'at', newline='') as f:
            f.write(','.join(record.row()) + '\n')
            f.flush()

        with open(self.times_path, 'at', newline='') as f:
            f.write(f'{record.epoch},{wall_time:.3f}\n')
