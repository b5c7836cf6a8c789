""" tables, csv files and svg charts """

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape
from terminaltables import AsciiTable
from cxrseg.history import TrainingHistory
from cxrseg.utils import log

log = log.getChild('reports')

METRIC_COLUMNS = 'sample_id', 'class', 'dice', 'precision', 'recall', 'f1'
TRAIN_COLOR = '#3498db'
VAL_COLOR = '#e74c3c'


def layer_table(rows, total=None):
    data = [['layer', 'kind', 'parameters']]
    data += [[name, kind, f'{count:,}'] for name, kind, count in rows]
    if total is not None:
        data.append(['total', '', f'{total:,}'])

    table = AsciiTable(data, title='layers')
    table.justify_columns[2] = 'right'
    return table.table


def variant_table(rows, reference):
    data = [['normalization', 'branch depth', 'stem shortcut', 'depthwise bias',
             'parameters', 'delta']]
    for normalization, depth, shortcut, dbias, count in sorted(
            rows, key=lambda r: abs(reference - r[-1])):
        data.append([normalization, str(depth), shortcut, 'yes' if dbias else 'no',
                     f'{count:,}', f'{reference - count:+,}'])

    table = AsciiTable(data, title=f'reference {reference:,}')
    for i in (4, 5):
        table.justify_columns[i] = 'right'

    return table.table


def metrics_table(aggregate):
    data = [['class', 'dice', 'precision', 'recall', 'f1']]
    for cls, m in aggregate.items():
        data.append([str(cls)] + [f'{m[k]:.4f}' for k in ('dice', 'precision', 'recall', 'f1')])

    return AsciiTable(data, title='mean over samples').table


def write_metrics_csv(rows, path):
    """ rows are dicts keyed by METRIC_COLUMNS """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wt', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if k not in ('sample_id', 'class') else v)
                             for k, v in row.items()})

    return path


def write_json(blob, path):
    path = Path(path)
    with open(path, 'wt') as f:
        json.dump(blob, f, indent=2, sort_keys=True)

    return path


def _nice_step(span, max_ticks):
    raw = span / max(max_ticks, 1)
    magnitude = 10 ** math.floor(math.log10(raw)) if raw > 0 else 1
    for factor in (1, 2, 5, 10):
        if factor * magnitude >= raw:
            return factor * magnitude

    return 10 * magnitude


def _fmt(value):
    return f'{value:.1f}' if isinstance(value, float) else str(value)


def svg_line_chart(series, title, xlabel, ylabel, width=640, height=400, padding=60):
    """ series is a list of (label, color, xs, ys) with integer xs """
    xs = [x for _, _, sx, _ in series for x in sx]
    ys = [y for _, _, _, sy in series for y in sy]
    x_lo, x_hi = min(xs), max(xs)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 1, x_hi + 1

    y_lo, y_hi = min(ys), max(ys)
    if y_lo == y_hi:
        pad = abs(y_lo) * 0.1 or 0.5
        y_lo, y_hi = y_lo - pad, y_hi + pad
    else:
        pad = (y_hi - y_lo) * 0.05
        y_lo, y_hi = y_lo - pad, y_hi + pad

    left, right, top, bottom = padding, width - padding / 2, padding, height - padding
    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def py(y):
        return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>']

    for i in range(5):
        value = y_lo + (y_hi - y_lo) * i / 4
        y = py(value)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{right}" y2="{y:.2f}" '
                   'stroke="#ddd" stroke-dasharray="4"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="end">{value:.3f}</text>')

    data_lo, data_hi = min(xs), max(xs)
    step = max(1, int(_nice_step(data_hi - data_lo, 8)))
    ticks = sorted({data_lo, data_hi} | set(range(step * math.ceil(data_lo / step), data_hi, step)))
    # keep the endpoints readable
    ticks = [t for t in ticks if t in (data_lo, data_hi)
             or (abs(px(t) - px(data_lo)) > 20 and abs(px(t) - px(data_hi)) > 20)]
    for t in ticks:
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{bottom + 16}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="middle">{_fmt(t)}</text>')

    for label, color, sx, sy in series:
        points = ' '.join(f'{px(x):.2f},{py(y):.2f}' for x, y in zip(sx, sy))
        out.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2">'
                   f'<title>{escape(label)}</title></polyline>')
        if len(sx) <= 50:
            for x, y in zip(sx, sy):
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')

    for i, (label, color, _, _) in enumerate(series):
        y = top + 10 + 20 * i
        out.append(f'<rect x="{right - 130}" y="{y - 10}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{right - 112}" y="{y}" font-family="sans-serif" '
                   f'font-size="12">{escape(label)}</text>')

    out.append(f'<text x="{width / 2}" y="{top / 2}" font-family="sans-serif" font-size="16" '
               f'text-anchor="middle" font-weight="bold">{escape(title)}</text>')
    out.append(f'<text x="{(left + right) / 2}" y="{height - 15}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{(top + bottom) / 2}" font-family="sans-serif" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 15 {(top + bottom) / 2})">'
               f'{escape(ylabel)}</text>')
    out.append('</svg>')
    return '\n'.join(out) + '\n'


def plot_history(history_path, out_dir=None):
    """ loss.svg and metric.svg next to the history or in out_dir """
    history_path = Path(history_path)
    history = TrainingHistory.read(history_path)
    out_dir = history_path.parent if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = history.column('epoch')
    charts = (('loss.svg', 'weighted Tanimoto loss', 'loss', 'train_loss', 'val_loss'),
              ('metric.svg', 'Tanimoto coefficient', 'coefficient', 'train_metric', 'val_metric'))
    written = []
    for name, title, ylabel, train, val in charts:
        svg = svg_line_chart([('training', TRAIN_COLOR, epochs, history.column(train)),
                              ('validation', VAL_COLOR, epochs, history.column(val))],
                             title, 'epoch', ylabel)
        path = out_dir / name
        path.write_text(svg)
        written.append(path)
        log.info(f'wrote {path}')

    return written
