import unittest
from pathlib import Path
from cxrseg import exceptions as exc
from cxrseg.schemas import CheckpointManifestSchema, EvaluationSummarySchema


def checkpoint_manifest(**kwargs):
    manifest = {'format': 'cxrseg-weights',
                'version': 1,
                'config': 'n_conv_blocks = 4\n',
                'entries': [{'name': 'head/kernel', 'shape': (48, 2),
                             'trainable': True, 'offset': 0}],
                'data_bytes': 384}
    manifest.update(kwargs)
    return manifest


def summary(**kwargs):
    values = {'model': Path('runs/a/best.ckpt'),
              'split': 'val',
              'samples': 3,
              'classes': [1],
              'tanimoto': 0.9,
              'aggregate': {'1': {'dice': 0.95, 'precision': 0.9, 'recall': 1.0, 'f1': 0.95}}}
    values.update(kwargs)
    return values


class TestCheckpointManifest(unittest.TestCase):

    def test_tuples_and_paths_serialize(self):
        ok = CheckpointManifestSchema().validate_strict(checkpoint_manifest())
        assert ok['entries'][0]['shape'] == [48, 2]

    def test_extra_key(self):
        with self.assertRaises(exc.ValidationError):
            CheckpointManifestSchema().validate_strict(checkpoint_manifest(extra=1))

    def test_error_names_the_path(self):
        entries = [{'name': 'head/kernel', 'shape': [48, -2], 'trainable': True, 'offset': 0}]
        with self.assertRaises(exc.ValidationError) as cm:
            CheckpointManifestSchema().validate_strict(checkpoint_manifest(entries=entries))

        assert 'entries.0.shape.1' in str(cm.exception)

    def test_wrong_format(self):
        with self.assertRaises(exc.ValidationError):
            CheckpointManifestSchema().validate_strict(checkpoint_manifest(format='other'))


class TestEvaluationSummary(unittest.TestCase):

    def test_valid(self):
        ok = EvaluationSummarySchema().validate_strict(summary())
        assert ok['model'] == 'runs/a/best.ckpt'

    def test_metric_out_of_range(self):
        aggregate = {'1': {'dice': 1.5, 'precision': 0.9, 'recall': 1.0, 'f1': 0.95}}
        with self.assertRaises(exc.ValidationError):
            EvaluationSummarySchema().validate_strict(summary(aggregate=aggregate))

    def test_unknown_split(self):
        with self.assertRaises(exc.ValidationError):
            EvaluationSummarySchema().validate_strict(summary(split='test'))
