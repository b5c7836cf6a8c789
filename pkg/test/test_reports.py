import csv
import unittest
import xml.etree.ElementTree as etree
from cxrseg import exceptions as exc
from cxrseg import reports
from cxrseg.history import COLUMNS, EpochRecord, HistoryWriter, TrainingHistory
from .common import temp_dir

SVG = '{http://www.w3.org/2000/svg}'


def record(epoch, loss=0.5):
    return EpochRecord(epoch, loss, 1 - loss, 0.9, loss + 0.01, 0.98 - loss, 0.88)


def write_history(path, count):
    writer = HistoryWriter(path)
    for epoch in range(1, count + 1):
        writer.append(record(epoch, 1 / (epoch + 1)), wall_time=epoch * 1.5)

    return writer.path


class TestHistory(unittest.TestCase):

    def setUp(self):
        self.base = temp_dir('history')

    def bad(self, text):
        path = self.base / 'history.csv'
        path.write_text(text)
        with self.assertRaises(exc.HistoryParseError) as cm:
            TrainingHistory.read(path)

        return cm.exception

    def test_round_trip(self):
        path = write_history(self.base, 3)
        history = TrainingHistory.read(path)
        assert len(history) == 3
        assert history[2] == record(3, 1 / 4)
        assert history.column('epoch') == [1, 2, 3]
        times = (self.base / 'times.csv').read_text().splitlines()
        assert times == ['epoch,wall_time', '1,1.500', '2,3.000', '3,4.500']

    def test_no_wall_time_in_history(self):
        path = write_history(self.base, 2)
        assert 'wall' not in path.read_text()

    def test_header(self):
        assert self.bad('epoch,loss\n1,0.5\n').line == 1

    def test_empty(self):
        assert self.bad('').line == 1

    def test_no_rows(self):
        assert self.bad(','.join(COLUMNS) + '\n').line == 1

    def test_bad_number(self):
        text = ','.join(COLUMNS) + '\n' + ','.join(record(1).row()) + '\n2,x,1,1,1,1,1\n'
        assert self.bad(text).line == 3

    def test_field_count(self):
        assert self.bad(','.join(COLUMNS) + '\n1,0.5,0.5\n').line == 2

    def test_non_finite(self):
        assert self.bad(','.join(COLUMNS) + '\n1,nan,1,1,1,1,1\n').line == 2

    def test_epochs_increase(self):
        rows = '\n'.join(','.join(record(e).row()) for e in (1, 3, 2))
        assert self.bad(','.join(COLUMNS) + '\n' + rows + '\n').line == 4

    def test_missing_file(self):
        with self.assertRaises(exc.HistoryParseError):
            TrainingHistory.read(self.base / 'missing.csv')

    def test_append_order(self):
        history = TrainingHistory([record(1)])
        with self.assertRaises(exc.DataError):
            history.append(record(1))


class TestCharts(unittest.TestCase):

    def charts(self, count):
        base = temp_dir('charts')
        paths = reports.plot_history(write_history(base, count))
        assert [p.name for p in paths] == ['loss.svg', 'metric.svg']
        return [etree.parse(p).getroot() for p in paths]

    def test_single_epoch(self):
        for root in self.charts(1):
            assert root.tag == SVG + 'svg'
            assert len(root.findall(SVG + 'polyline')) == 2

    def test_long_run(self):
        for root in self.charts(300):
            lines = root.findall(SVG + 'polyline')
            assert len(lines) == 2
            assert all(len(l.get('points').split()) == 300 for l in lines)
            # too many points for markers
            assert not root.findall(SVG + 'circle')
            labels = [t.text for t in root.findall(SVG + 'text')]
            assert '1' in labels and '300' in labels

    def test_constant_series(self):
        svg = reports.svg_line_chart([('flat', '#000', [1, 2, 3], [0.5, 0.5, 0.5])],
                                     'flat & <level>', 'epoch', 'value')
        root = etree.fromstring(svg)
        assert 'nan' not in svg
        assert any(t.text == 'flat & <level>' for t in root.iter(SVG + 'text'))

    def test_out_dir(self):
        base = temp_dir('charts')
        out = base / 'plots'
        paths = reports.plot_history(write_history(base, 5), out)
        assert all(p.parent == out for p in paths)


class TestTables(unittest.TestCase):

    def test_layer_table(self):
        text = reports.layer_table([('stem', 'conv_res', 275), ('head', 'head', 98)], 373)
        assert 'total' in text
        assert '275' in text and '373' in text

    def test_variant_table_closest_first(self):
        rows = [('none', 1, 'projection', False, 100), ('per-branch', 2, 'projection', True, 990)]
        text = reports.variant_table(rows, 1000)
        assert text.index('990') < text.index('100 ')
        assert '+10' in text

    def test_metrics_table(self):
        text = reports.metrics_table({1: {'dice': 0.5, 'precision': 1.0, 'recall': 0.25, 'f1': 0.5}})
        assert '0.2500' in text

    def test_metrics_csv(self):
        base = temp_dir('metrics')
        rows = [{'sample_id': 'a', 'class': 1, 'dice': 0.5, 'precision': 1.0, 'recall': 1 / 3,
                 'f1': 0.5}]
        path = reports.write_metrics_csv(rows, base / 'out' / 'metrics.csv')
        with open(path) as f:
            read = list(csv.DictReader(f))

        assert read[0]['sample_id'] == 'a'
        assert float(read[0]['recall']) == 1 / 3
