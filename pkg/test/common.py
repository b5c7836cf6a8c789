import os
import atexit
import shutil
import tempfile
from pathlib import Path
import numpy as np
import pytest
from cxrseg.blocks import NetConfig
from cxrseg.utils import log

this_file = Path(__file__).resolve()
_pid = os.getpid()
temp_path = Path(tempfile.gettempdir(), f'.cxrseg-testing-base-{_pid}')

SLOW = 'CXRSEG_SLOW' in os.environ
skipif_not_slow = pytest.mark.skipif(not SLOW, reason='set CXRSEG_SLOW to run training to convergence')


def _cleanup():
    if temp_path.exists():
        shutil.rmtree(temp_path, ignore_errors=True)


atexit.register(_cleanup)


def temp_dir(name):
    """ a fresh directory under the per process testing base """
    temp_path.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f'{name}-', dir=temp_path))


def tiny_config(**kwargs):
    """ two conv type blocks with narrow branches """
    values = dict(n_conv_blocks=2,
                  branch_kernels=((3, 3), (3, 3)),
                  branch_dilations=((1, 1), (2, 2)),
                  branch_filters=4,
                  shortcut_filters=8,
                  dropout_rate=0.0)
    values.update(kwargs)
    return NetConfig(**values)


def random_onehot(rng, shape, classes=2):
    index = rng.integers(0, classes, size=shape)
    return np.eye(classes)[index]


def random_probabilities(rng, shape, classes=2):
    logits = rng.normal(size=(*shape, classes))
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


log.debug(f'testing base {temp_path}')
