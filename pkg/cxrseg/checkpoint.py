""" weights files

layout: magic (8 bytes), version (uint32 le), manifest length (uint64 le),
utf-8 json manifest, then every array as little endian float32 in
manifest order
"""

import json
import struct
from itertools import zip_longest
from pathlib import Path
import numpy as np
from cxrseg import exceptions as exc
from cxrseg.blocks import NetConfig, build_res_cr_net
from cxrseg.config import config
from cxrseg.schemas import CheckpointManifestSchema
from cxrseg.utils import log

log = log.getChild('checkpoint')

HEADER = struct.Struct('<8sIQ')
FORMAT = 'cxrseg-weights'
STORED = np.dtype('<f4')


def save_checkpoint(model, path):
    trainable = {t.name for t in model.parameters()}
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state().items():
        data = np.ascontiguousarray(tensor.data, dtype=STORED)
        entries.append({'name': name,
                        'shape': list(tensor.shape),
                        'trainable': name in trainable,
                        'offset': offset})
        chunks.append(data.tobytes())
        offset += data.nbytes

    manifest = {'format': FORMAT,
                'version': config.checkpoint_version,
                'config': model.config.dumps(),
                'entries': entries,
                'data_bytes': offset}
    CheckpointManifestSchema().validate_strict(manifest)
    blob = json.dumps(manifest, sort_keys=True).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + '.partial')
    with open(partial, 'wb') as f:
        f.write(HEADER.pack(config.checkpoint_magic, config.checkpoint_version, len(blob)))
        f.write(blob)
        for chunk in chunks:
            f.write(chunk)

    partial.replace(path)
    log.debug(f'wrote {path}')
    return path


def read_manifest(raw, path='<bytes>'):
    if len(raw) < HEADER.size:
        raise exc.TruncatedCheckpointError(f'{path} ends inside the header')

    magic, version, length = HEADER.unpack_from(raw)
    if magic != config.checkpoint_magic:
        raise exc.CheckpointError(f'{path} is not a weights file')

    if version != config.checkpoint_version:
        raise exc.CheckpointVersionError(f'{path} has version {version} '
                                         f'expected {config.checkpoint_version}')

    end = HEADER.size + length
    if len(raw) < end:
        raise exc.TruncatedCheckpointError(f'{path} ends inside the manifest')

    try:
        manifest = json.loads(raw[HEADER.size:end].decode('utf-8'))
    except ValueError as e:
        raise exc.CheckpointError(f'{path} has an unreadable manifest') from e

    try:
        CheckpointManifestSchema().validate_strict(manifest)
    except exc.ValidationError as e:
        raise exc.CheckpointError(f'{path} has an invalid manifest: {e}') from e

    data = raw[end:]
    if len(data) < manifest['data_bytes']:
        raise exc.TruncatedCheckpointError(f'{path} has {len(data)} of '
                                           f'{manifest["data_bytes"]} data bytes')
    elif len(data) > manifest['data_bytes']:
        raise exc.CheckpointError(f'{path} has trailing bytes')

    return manifest, data


def load_checkpoint(path, net_config=None):
    """ rebuild the model a weights file was saved from

    With net_config the model is built from it instead of the config
    echoed in the file and every array must match it by name and shape. """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise exc.CheckpointError(f'could not read {path}: {e}') from e

    manifest, data = read_manifest(raw, path)
    cfg = NetConfig.loads(manifest['config']) if net_config is None else net_config
    model = build_res_cr_net(cfg)
    items = list(model.state().items())
    pairs = zip_longest(items, manifest['entries'], fillvalue=None)
    for item, entry in pairs:
        name, tensor = (None, None) if item is None else item
        if tensor is None or entry is None:
            raise exc.CheckpointMismatchError(
                f'{path}', name=name if entry is None else entry['name'],
                expected=None if tensor is None else list(tensor.shape),
                actual=None if entry is None else entry['shape'])

        if entry['name'] != name or entry['shape'] != list(tensor.shape):
            raise exc.CheckpointMismatchError(f'{path}', name=name,
                                              expected=f'{name} {list(tensor.shape)}',
                                              actual=f'{entry["name"]} {entry["shape"]}')

        count = int(np.prod(entry['shape']))
        values = np.frombuffer(data, dtype=STORED, count=count, offset=entry['offset'])
        tensor.data[...] = values.reshape(entry['shape'])

    return model
