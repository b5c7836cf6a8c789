import logging
import numpy as np
from pyontutils.utils_fast import makeSimpleLogger, utcnowtz, isoformat_safe

log = makeSimpleLogger('cxrseg')
logd = log.getChild('data')
logt = log.getChild('train')

# integer tags that keep the keyed random streams of different consumers apart
STREAM_INIT = 1
STREAM_AUGMENT = 2
STREAM_DROPOUT = 3
STREAM_SPLIT = 4
STREAM_SYNTH = 5


def keyed_rng(seed, *keys):
    """ Return a generator fully determined by seed and keys.

    Streams never depend on how many draws other streams made, so
    per-sample work can run in any order or on any number of workers. """
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError(f'rng keys must be non-negative {entropy}')

    return np.random.default_rng(np.random.SeedSequence(entropy))


def set_log_level(level, *logs):
    for _log in (logs if logs else (log, logd, logt)):
        _log.setLevel(level)


def run_parallel(function, items, jobs=1):
    """ apply function to every item, results in input order """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [function(item) for item in items]

    # no rate argument, Async would otherwise throttle to jobs calls per second
    from pyontutils.utils import Async, deferred
    return Async()(deferred(function)(item) for item in items)


class GetTimeNow:
    def __init__(self):
        self._start_time = utcnowtz()

    @property
    def START_TIMESTAMP_SAFE(self):
        return isoformat_safe(self._start_time)


class SimpleFileHandler:

    _FIRST = object()

    def __init__(self, log_file_path, *logs, mimic=_FIRST):
        self.log_file_handler = logging.FileHandler(str(log_file_path))
        if mimic is self._FIRST and logs:
            self.mimic(logs[0])
        elif mimic:
            self.mimic(mimic)

        for _log in logs:
            self(_log)

    def __call__(self, *logs_to_handle):
        for _log in logs_to_handle:
            _log.addHandler(self.log_file_handler)

    def mimic(self, _log):
        self.log_file_handler.setFormatter(_log.handlers[0].formatter)

    def close(self, *logs_to_release):
        for _log in logs_to_release:
            _log.removeHandler(self.log_file_handler)

        self.log_file_handler.close()


def bind_file_handler(log_file):
    """ send everything the package logs to log_file as well """
    return SimpleFileHandler(log_file, log)


def shape_str(shape):
    return '×'.join(str(s) for s in shape)
