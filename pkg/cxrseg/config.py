import dataclasses
from pathlib import Path
import orthauth as oa
from cxrseg import exceptions as exc

auth = oa.configure_here('auth-config.py', __name__)


class config:
    # reference count reported for the five block, sixteen filter configuration
    reference_param_count = 59165
    checkpoint_magic = b'CXRSEGW\x00'
    checkpoint_version = 1


def setting(default, kind, doc, **kwargs):
    """ dataclass field carrying what the key=value reader needs """
    if isinstance(default, (list, dict, set)):
        return dataclasses.field(default_factory=lambda: type(default)(default),
                                 metadata={'kind': kind, 'doc': doc}, **kwargs)

    return dataclasses.field(default=default, metadata={'kind': kind, 'doc': doc}, **kwargs)


_truthy = {'true', 'yes', 'on', '1'}
_falsy = {'false', 'no', 'off', '0'}


def parse_value(kind, text, field):
    text = text.strip()
    try:
        if kind == 'int':
            return int(text)
        elif kind == 'float':
            return float(text)
        elif kind == 'bool':
            lower = text.lower()
            if lower in _truthy:
                return True
            elif lower in _falsy:
                return False

            raise ValueError(f'not a boolean {text!r}')
        elif kind == 'str':
            return text
        elif kind == 'path':
            return Path(text).expanduser() if text and text != 'none' else None
        elif kind == 'pairs':
            # 3x3,5x5,7x7
            pairs = []
            for chunk in text.split(','):
                a, b = chunk.strip().lower().split('x')
                pairs.append((int(a), int(b)))

            return tuple(pairs)
        elif kind.startswith('choice:'):
            choices = kind.split(':', 1)[1].split('|')
            if text not in choices:
                raise ValueError(f'{text!r} not one of {choices}')

            return text
        else:
            raise ValueError(f'unknown value kind {kind}')
    except ValueError as e:
        raise exc.ConfigError(str(e), field=field) from e


def format_value(kind, value):
    if kind == 'bool':
        return 'true' if value else 'false'
    elif kind == 'pairs':
        return ','.join(f'{a}x{b}' for a, b in value)
    elif kind == 'path':
        return 'none' if value is None else value.as_posix()
    elif kind == 'float':
        return repr(float(value))

    return str(value)


def field_kinds(cls):
    return {f.name: f.metadata['kind'] for f in dataclasses.fields(cls) if 'kind' in f.metadata}


def field_docs(cls):
    return {f.name: f.metadata['doc'] for f in dataclasses.fields(cls) if 'doc' in f.metadata}


def read_key_values(text, known_keys):
    """ parse flat key=value text

    # starts a comment, blank lines are ignored, later keys win """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        if '=' not in line:
            raise exc.ConfigError(f'line {lineno}: expected key=value got {raw!r}',
                                  field='config')

        key, value = (s.strip() for s in line.split('=', 1))
        if key not in known_keys:
            raise exc.UnknownConfigKeyError(f'unknown key on line {lineno}', field=key)

        values[key] = value

    return values


def dump_dataclass(obj):
    kinds = field_kinds(type(obj))
    return [f'{name} = {format_value(kind, getattr(obj, name))}' for name, kind in kinds.items()]


def load_dataclass(cls, values, **fixed):
    """ build cls from the string values whose keys are its fields """
    kinds = field_kinds(cls)
    kwargs = {name: parse_value(kinds[name], text, name)
              for name, text in values.items() if name in kinds}
    kwargs.update(fixed)
    return cls(**kwargs)
