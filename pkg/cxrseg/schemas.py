import json
from pathlib import PurePath
import jsonschema
from cxrseg import exceptions as exc


class JEncode(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, PurePath):
            return obj.as_posix()
        elif isinstance(obj, tuple):
            return list(obj)
        elif hasattr(obj, 'item'):  # numpy scalars
            return obj.item()

        return json.JSONEncoder.default(self, obj)


class JSONSchema(object):

    schema = {}

    type_checker = jsonschema.Draft6Validator.TYPE_CHECKER.redefine_many(
        dict(array=(lambda c, i: isinstance(i, list) or isinstance(i, tuple))))

    validator_class = jsonschema.validators.extend(
        jsonschema.Draft6Validator,
        type_checker=type_checker)

    def __init__(self):
        format_checker = jsonschema.FormatChecker()
        self.validator = self.validator_class(self.schema,
                                              format_checker=format_checker)

    def validate_strict(self, data):
        # round trip so that tuples and paths look the way they will on disk
        appstruct = json.loads(json.dumps(data, cls=JEncode))
        errors = list(self.validator.iter_errors(appstruct))
        if errors:
            raise exc.ValidationError(errors)

        return appstruct


_shape = {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}}


class CheckpointManifestSchema(JSONSchema):
    schema = {
        'type': 'object',
        'required': ['format', 'version', 'config', 'entries', 'data_bytes'],
        'additionalProperties': False,
        'properties': {
            'format': {'type': 'string', 'enum': ['cxrseg-weights']},
            'version': {'type': 'integer', 'minimum': 1},
            'config': {'type': 'string'},
            'data_bytes': {'type': 'integer', 'minimum': 0},
            'entries': {
                'type': 'array',
                'items': {
                    'type': 'object',
                    'required': ['name', 'shape', 'trainable', 'offset'],
                    'additionalProperties': False,
                    'properties': {
                        'name': {'type': 'string', 'minLength': 1},
                        'shape': _shape,
                        'trainable': {'type': 'boolean'},
                        'offset': {'type': 'integer', 'minimum': 0},}}},}}


_metrics = {'type': 'object',
            'required': ['dice', 'precision', 'recall', 'f1'],
            'properties': {k: {'type': 'number', 'minimum': 0, 'maximum': 1}
                           for k in ('dice', 'precision', 'recall', 'f1')}}


class EvaluationSummarySchema(JSONSchema):
    schema = {
        'type': 'object',
        'required': ['model', 'split', 'samples', 'classes', 'tanimoto', 'aggregate'],
        'properties': {
            'model': {'type': 'string'},
            'split': {'type': 'string', 'enum': ['train', 'val']},
            'samples': {'type': 'integer', 'minimum': 1},
            'classes': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
            'tanimoto': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 1},
            'aggregate': {'type': 'object',
                          'additionalProperties': _metrics},}}
