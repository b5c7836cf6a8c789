class CxrSegError(Exception):
    """ base class for cxrseg errors """


class ShapeMismatchError(CxrSegError):
    """ two tensors or a tensor and a kernel disagree on a dimension """
    def __init__(self, msg, *, dimension=None, expected=None, actual=None):
        self.dimension = dimension
        self.expected = expected
        self.actual = actual
        if dimension is not None:
            msg = f'{msg}: {dimension} expected {expected} got {actual}'

        super().__init__(msg)


class KernelError(CxrSegError):
    """ a kernel was declared with an impossible geometry """


class ConfigError(CxrSegError):
    """ a configuration value is invalid """
    def __init__(self, msg, *, field=None):
        self.field = field
        if field is not None:
            msg = f'{field}: {msg}'

        super().__init__(msg)


class UnknownConfigKeyError(ConfigError):
    """ a configuration file contains a key nobody knows about """


class ClassIndexError(CxrSegError, IndexError):
    """ a class index is outside the channels of a mask stack """


class AugmentError(CxrSegError):
    """ augmentation parameters describe a degenerate transform """


class CycleError(CxrSegError):
    """ fatal: the tape is not in topological order """


class NonFiniteError(CxrSegError):
    """ a value that should be finite is NaN or Inf """
    def __init__(self, msg, *, coordinates=None):
        self.coordinates = coordinates
        if coordinates is not None:
            msg = f'{msg} at {coordinates}'

        super().__init__(msg)


class ValidationError(CxrSegError):
    def __init__(self, errors):
        self.errors = errors
        super().__init__(repr(self))

    def __repr__(self):
        msg = ', '.join([self._format_jsonschema_error(e) for e in self.errors])
        return self.__class__.__name__ + f'({msg})'

    def __str__(self):
        return repr(self)

    @staticmethod
    def _format_jsonschema_error(error):
        """Format a :py:class:`jsonschema.ValidationError` as a string."""
        if error.path:
            dotted_path = ".".join([str(c) for c in error.path])
            return "{path}: {message}".format(path=dotted_path, message=error.message)
        return error.message


class CheckpointError(CxrSegError):
    """ something is wrong with a weights file """


class CheckpointVersionError(CheckpointError):
    """ the weights file was written by an incompatible version """


class TruncatedCheckpointError(CheckpointError):
    """ the weights file ends before its manifest says it should """


class CheckpointMismatchError(CheckpointError):
    """ the weights file does not match the model it is loaded into """
    def __init__(self, msg, *, name=None, expected=None, actual=None):
        self.name = name
        self.expected = expected
        self.actual = actual
        if name is not None:
            msg = f'{msg}: first mismatch at {name} expected {expected} got {actual}'

        super().__init__(msg)


class DataError(CxrSegError):
    """ input data could not be used """


class DecodeError(DataError):
    """ a raster file could not be decoded """


class SampleError(DataError):
    """ a manifest sample could not be loaded """
    def __init__(self, msg, *, sample_id=None):
        self.sample_id = sample_id
        if sample_id is not None:
            msg = f'sample {sample_id!r}: {msg}'

        super().__init__(msg)


class ManifestError(DataError):
    """ a manifest file is malformed or references missing files """


class LeakageError(ManifestError):
    """ a group appears in both the training and the validation split """


class SplitError(DataError):
    """ the entries cannot be split as requested """


class EmptySplitError(DataError):
    """ the requested split has no samples """


class NumericalFailureError(CxrSegError):
    """ training produced a non-finite loss """
    def __init__(self, msg, *, batch_index=None, diagnostics=None):
        self.batch_index = batch_index
        self.diagnostics = diagnostics if diagnostics is not None else {}
        if batch_index is not None:
            msg = f'{msg} at batch {batch_index}'

        super().__init__(msg)


class HistoryParseError(DataError):
    """ a history file could not be parsed """
    def __init__(self, msg, *, line=None):
        self.line = line
        if line is not None:
            msg = f'line {line}: {msg}'

        super().__init__(msg)
