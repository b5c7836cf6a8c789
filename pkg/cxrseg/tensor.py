""" numpy backed reverse-mode differentiation for feature maps

Feature maps are laid out [batch, rows, cols, channels]. Every operation
that touches a tensor requiring gradients is appended to the active
Tape, so the tape is in topological order by construction and backward
is a single reverse walk over it.
"""

import numpy as np
from cxrseg import exceptions as exc
from cxrseg.utils import log, shape_str

DTYPE = np.float32

_active_tapes = []


class Tape:
    """ ordered record of the differentiable operations of one pass """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _active_tapes.append(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        popped = _active_tapes.pop()
        assert popped is self, 'tapes must be closed in the order they were opened'

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        node._tape_index = len(self.nodes)
        self.nodes.append(node)

    def check_order(self):
        """ every node's inputs must precede it """
        position = {id(node): i for i, node in enumerate(self.nodes)}
        for i, node in enumerate(self.nodes):
            for parent in node.parents:
                j = position.get(id(parent))
                if j is not None and j >= i:
                    msg = (f'node {i} ({node.op}) consumes node {j} '
                           f'({parent.op}) which does not precede it')
                    raise exc.CycleError(msg)


class Tensor:
    """ a dense array plus what is needed to push gradients back through it """

    __array_priority__ = 100  # make ndarray defer to our reflected operators

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data

        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DTYPE

        self.data = np.array(data, dtype=dtype)  # always a private copy
        self.requires_grad = requires_grad
        self.name = name
        self.op = 'leaf'
        self.parents = ()
        self._backward = None
        self._tape_index = None

    def __repr__(self):
        name = f' {self.name}' if self.name else ''
        return f'<Tensor{name} {self.op} {shape_str(self.shape)} {self.dtype}>'

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _mul(self, -1.0)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def square(self):
        return square(self)


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value

    if isinstance(value, np.ndarray) and value.dtype in (np.float32, np.float64):
        return Tensor(value)

    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _node(data, parents, op, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    out.parents = tuple(parents) if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    out._tape_index = None
    if out.requires_grad and _active_tapes:
        _active_tapes[-1].record(out)

    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


def _check_4d(x, op):
    if x.ndim != 4:
        raise exc.ShapeMismatchError(op, dimension='rank', expected=4, actual=x.ndim)


def _add(x, y):
    x, y = as_tensor(x, like=y if isinstance(y, Tensor) else None), as_tensor(y, like=x)
    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return _node(x.data + y.data, (x, y), 'add', backward)


def _sub(x, y):
    x, y = as_tensor(x, like=y if isinstance(y, Tensor) else None), as_tensor(y, like=x)
    def backward(g):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return _node(x.data - y.data, (x, y), 'sub', backward)


def _mul(x, y):
    x, y = as_tensor(x, like=y if isinstance(y, Tensor) else None), as_tensor(y, like=x)
    def backward(g):
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return _node(x.data * y.data, (x, y), 'mul', backward)


def _div(x, y):
    x, y = as_tensor(x, like=y if isinstance(y, Tensor) else None), as_tensor(y, like=x)
    out = x.data / y.data
    def backward(g):
        return (_unbroadcast(g / y.data, x.shape),
                _unbroadcast(-g * out / y.data, y.shape))

    return _node(out, (x, y), 'div', backward)


def square(x):
    def backward(g):
        return (2 * g * x.data,)

    return _node(x.data * x.data, (x,), 'square', backward)


def reduce_sum(x, axis=None, keepdims=False):
    out = x.data.sum(axis=axis, keepdims=keepdims)
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)

        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return _node(np.asarray(out), (x,), 'sum', backward)


def reduce_mean(x, axis=None, keepdims=False):
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return reduce_sum(x, axis=axis, keepdims=keepdims) / float(count)


def add(x, y):
    """ elementwise sum of two tensors of identical shape """
    if x.shape != y.shape:
        for i, (a, b) in enumerate(zip(x.shape, y.shape)):
            if a != b:
                raise exc.ShapeMismatchError('add', dimension=f'axis {i}', expected=a, actual=b)

        raise exc.ShapeMismatchError('add', dimension='rank', expected=x.ndim, actual=y.ndim)

    return _add(x, y)


def leaky_relu(x, alpha=0.3):
    if not 0 <= alpha < 1:
        raise exc.ConfigError(f'must be in [0, 1) got {alpha}', field='leaky_alpha')

    positive = x.data > 0
    out = np.where(positive, x.data, x.data * x.dtype.type(alpha))
    def backward(g):
        return (np.where(positive, g, g * alpha),)

    return _node(out, (x,), 'leaky_relu', backward)


def elu(x, alpha=1.0):
    positive = x.data > 0
    out = np.where(positive, x.data, alpha * np.expm1(np.minimum(x.data, 0))).astype(x.dtype)
    def backward(g):
        return (np.where(positive, g, g * (out + alpha)),)

    return _node(out, (x,), 'elu', backward)


def sigmoid(x):
    out = (0.5 * (np.tanh(0.5 * x.data) + 1)).astype(x.dtype)
    def backward(g):
        return (g * out * (1 - out),)

    return _node(out, (x,), 'sigmoid', backward)


def tanh(x):
    out = np.tanh(x.data)
    def backward(g):
        return (g * (1 - out * out),)

    return _node(out, (x,), 'tanh', backward)


class ConvKernel:
    """ weights of one half of a separable convolution

    depthwise kernels hold one [kh, kw] filter per input channel,
    pointwise kernels are a [in_channels, out_channels] channel mixer """

    kinds = 'depthwise', 'pointwise'

    def __init__(self, kind, in_channels, out_channels=None, spatial=(1, 1),
                 dilation=(1, 1), use_bias=True, dtype=DTYPE, name=None):
        if kind not in self.kinds:
            raise exc.KernelError(f'unknown kernel kind {kind!r}')

        spatial, dilation = tuple(spatial), tuple(dilation)
        if any(s < 1 or s % 2 == 0 for s in spatial):
            raise exc.KernelError(f'kernel sizes must be positive and odd got {spatial}')

        if any(d < 1 for d in dilation):
            raise exc.KernelError(f'dilation rates must be positive got {dilation}')

        if kind == 'pointwise':
            if spatial != (1, 1) or dilation != (1, 1):
                raise exc.KernelError('pointwise kernels are 1x1 with no dilation')

            if out_channels is None:
                raise exc.KernelError('pointwise kernels need out_channels')

            weight_shape = (in_channels, out_channels)
            bias_size = out_channels
        else:
            # channel multiplier is always one
            out_channels = in_channels
            weight_shape = (*spatial, in_channels)
            bias_size = in_channels

        self.kind = kind
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.spatial = spatial
        self.dilation = dilation
        self.name = name
        prefix = f'{name}/' if name else ''
        self.weight = Tensor(np.zeros(weight_shape, dtype=dtype), requires_grad=True,
                             name=prefix + 'kernel')
        self.bias = (Tensor(np.zeros(bias_size, dtype=dtype), requires_grad=True,
                            name=prefix + 'bias')
                     if use_bias else None)

    @classmethod
    def depthwise(cls, in_channels, spatial, dilation=(1, 1), **kwargs):
        return cls('depthwise', in_channels, spatial=spatial, dilation=dilation, **kwargs)

    @classmethod
    def pointwise(cls, in_channels, out_channels, **kwargs):
        return cls('pointwise', in_channels, out_channels=out_channels, **kwargs)

    @property
    def fan_in(self):
        if self.kind == 'depthwise':
            return self.spatial[0] * self.spatial[1]

        return self.in_channels

    def parameters(self):
        yield self.weight
        if self.bias is not None:
            yield self.bias

    @property
    def param_count(self):
        return sum(p.size for p in self.parameters())

    def initialize(self, rng):
        """ fan-in scaled uniform weights, zero bias """
        limit = np.sqrt(3.0 / self.fan_in)
        self.weight.data[...] = rng.uniform(-limit, limit, self.weight.shape)
        if self.bias is not None:
            self.bias.data[...] = 0

    def astype(self, dtype):
        self.weight.data = self.weight.data.astype(dtype)
        if self.bias is not None:
            self.bias.data = self.bias.data.astype(dtype)

        return self


def depthwise_conv2d(x, k, dilation=None):
    """ per channel spatial convolution, SAME zero padding """
    _check_4d(x, 'depthwise_conv2d')
    if k.kind != 'depthwise':
        raise exc.KernelError(f'depthwise_conv2d needs a depthwise kernel got {k.kind}')

    if x.shape[3] != k.in_channels:
        raise exc.ShapeMismatchError('depthwise_conv2d', dimension='channels',
                                     expected=k.in_channels, actual=x.shape[3])

    dh, dw = k.dilation if dilation is None else dilation
    kh, kw = k.spatial
    ph, pw = (kh // 2) * dh, (kw // 2) * dw
    b, r, c, ch = x.shape
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    w = k.weight.data
    out = np.zeros((b, r, c, ch), dtype=np.result_type(x.data, w))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i * dh:i * dh + r, j * dw:j * dw + c, :] * w[i, j]

    parents = [x, k.weight]
    if k.bias is not None:
        out += k.bias.data
        parents.append(k.bias)

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        gw = np.zeros(w.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                window = (slice(None), slice(i * dh, i * dh + r), slice(j * dw, j * dw + c))
                gxp[window] += g * w[i, j]
                gw[i, j] = (g * xp[window]).sum(axis=(0, 1, 2))

        grads = [gxp[:, ph:ph + r, pw:pw + c, :], gw]
        if k.bias is not None:
            grads.append(g.sum(axis=(0, 1, 2)))

        return grads

    return _node(out, parents, 'depthwise_conv2d', backward)


def pointwise_conv2d(x, k):
    """ 1x1 channel mixing """
    _check_4d(x, 'pointwise_conv2d')
    if k.kind != 'pointwise':
        raise exc.KernelError(f'pointwise_conv2d needs a pointwise kernel got {k.kind}')

    if x.shape[3] != k.in_channels:
        raise exc.ShapeMismatchError('pointwise_conv2d', dimension='channels',
                                     expected=k.in_channels, actual=x.shape[3])

    w = k.weight.data
    out = x.data @ w
    parents = [x, k.weight]
    if k.bias is not None:
        out += k.bias.data
        parents.append(k.bias)

    def backward(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        grads = [g @ w.T, flat_x.T @ flat_g]
        if k.bias is not None:
            grads.append(flat_g.sum(axis=0))

        return grads

    return _node(out, parents, 'pointwise_conv2d', backward)


def separable_atrous_conv2d(x, depthwise_k, pointwise_k, dilation=None):
    return pointwise_conv2d(depthwise_conv2d(x, depthwise_k, dilation), pointwise_k)


def spatial_dropout(x, rate, rng=None, training=False):
    """ drop whole channels, one decision per (batch, channel) """
    if not 0 <= rate < 1:
        raise exc.ConfigError(f'must be in [0, 1) got {rate}', field='dropout_rate')

    if not training or rate == 0:
        return x

    _check_4d(x, 'spatial_dropout')
    if rng is None:
        raise exc.ConfigError('training mode dropout needs a random stream', field='rng')

    b, _, _, ch = x.shape
    keep = rng.random((b, 1, 1, ch)) >= rate
    scale = (keep / (1 - rate)).astype(x.dtype)
    def backward(g):
        return (g * scale,)

    return _node(x.data * scale, (x,), 'spatial_dropout', backward)


def softmax_channels(x):
    if x.shape[-1] < 2:
        raise exc.ShapeMismatchError('softmax_channels needs at least two channels',
                                     dimension='channels', expected='>= 2', actual=x.shape[-1])

    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _node(out, (x,), 'softmax_channels', backward)


def concat_channels(xs):
    xs = list(xs)
    if not xs:
        raise exc.ShapeMismatchError('concat_channels of nothing', dimension='inputs',
                                     expected='>= 1', actual=0)

    first = xs[0]
    names = ('batch', 'rows', 'cols') if first.ndim == 4 else tuple(
        f'axis {i}' for i in range(first.ndim - 1))
    for other in xs[1:]:
        if other.ndim != first.ndim:
            raise exc.ShapeMismatchError('concat_channels', dimension='rank',
                                         expected=first.ndim, actual=other.ndim)
        for name, a, b in zip(names, first.shape, other.shape):
            if a != b:
                raise exc.ShapeMismatchError('concat_channels', dimension=name,
                                             expected=a, actual=b)

    if len(xs) == 1:
        return first

    sizes = [x.shape[-1] for x in xs]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([x.data for x in xs], axis=-1)
    def backward(g):
        return [g[..., a:b] for a, b in zip(bounds[:-1], bounds[1:])]

    return _node(out, xs, 'concat_channels', backward)


def slice_channels(x, start, stop):
    out = x.data[..., start:stop].copy()
    def backward(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _node(out, (x,), 'slice_channels', backward)


def select(x, axis, index):
    """ drop axis by taking one position along it """
    out = np.take(x.data, index, axis=axis)
    def backward(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        indexer = [slice(None)] * x.ndim
        indexer[axis] = index
        full[tuple(indexer)] = g
        return (full,)

    return _node(out, (x,), 'select', backward)


def stack(xs, axis):
    xs = list(xs)
    out = np.stack([x.data for x in xs], axis=axis)
    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(len(xs))]

    return _node(out, xs, 'stack', backward)


def rot90(x, k=1):
    """ rotate the rows/cols plane counterclockwise k quarter turns """
    out = np.ascontiguousarray(np.rot90(x.data, k, axes=(1, 2)))
    def backward(g):
        return (np.ascontiguousarray(np.rot90(g, -k, axes=(1, 2))),)

    return _node(out, (x,), 'rot90', backward)


class NormState:
    """ running statistics of a batch normalization, not trained """

    def __init__(self, channels, dtype=DTYPE, name=None):
        prefix = f'{name}/' if name else ''
        self.mean = Tensor(np.zeros(channels, dtype=dtype), name=prefix + 'moving_mean')
        self.var = Tensor(np.ones(channels, dtype=dtype), name=prefix + 'moving_variance')

    def buffers(self):
        yield self.mean
        yield self.var


def batch_norm(x, gamma, beta, state, training=False, momentum=0.99, epsilon=1e-3):
    """ normalize each channel over batch, rows and cols """
    axes = tuple(range(x.ndim - 1))
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.mean.data[...] = momentum * state.mean.data + (1 - momentum) * mean
        state.var.data[...] = momentum * state.var.data + (1 - momentum) * var
    else:
        mean = state.mean.data
        var = state.var.data

    inv_std = (1.0 / np.sqrt(var + epsilon)).astype(x.dtype)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data
    count = x.size // x.shape[-1]

    def backward(g):
        gxhat = g * gamma.data
        if training:
            gx = (inv_std / count) * (count * gxhat
                                      - gxhat.sum(axis=axes)
                                      - xhat * (gxhat * xhat).sum(axis=axes))
        else:
            gx = gxhat * inv_std

        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _node(out.astype(x.dtype), (x, gamma, beta), 'batch_norm', backward)


def row_conv(x, weight, bias):
    """ convolve [batch, width, in] along width with a [k, in, out] kernel, SAME zero padding """
    k = weight.shape[0]
    if k % 2 == 0:
        raise exc.KernelError(f'row kernel width must be odd got {k}')

    if x.shape[-1] != weight.shape[1]:
        raise exc.ShapeMismatchError('row_conv', dimension='channels',
                                     expected=weight.shape[1], actual=x.shape[-1])

    p = k // 2
    b, width, _ = x.shape
    xp = np.pad(x.data, ((0, 0), (p, p), (0, 0)))
    w = weight.data
    out = np.zeros((b, width, w.shape[2]), dtype=np.result_type(x.data, w))
    for t in range(k):
        out += xp[:, t:t + width, :] @ w[t]

    out += bias.data

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        gw = np.zeros(w.shape, dtype=g.dtype)
        flat_g = g.reshape(-1, g.shape[-1])
        for t in range(k):
            gxp[:, t:t + width, :] += g @ w[t].T
            gw[t] = xp[:, t:t + width, :].reshape(-1, w.shape[1]).T @ flat_g

        return gxp[:, p:p + width, :], gw, flat_g.sum(axis=0)

    return _node(out, (x, weight, bias), 'row_conv', backward)


class ConvLSTMCell:
    """ gate weights of one scan direction

    The map is cut into slices one row high, so the gate convolution
    only ever sees the middle row of a square kernel, that row is all
    that is stored. Gate order along the last axis is i, f, g, o. """

    def __init__(self, in_channels, hidden, kernel=3, dtype=DTYPE, name=None):
        if kernel % 2 == 0:
            raise exc.KernelError(f'lstm kernel must be odd got {kernel}')

        prefix = f'{name}/' if name else ''
        self.in_channels = in_channels
        self.hidden = hidden
        self.kernel = kernel
        self.weight = Tensor(np.zeros((kernel, in_channels + hidden, 4 * hidden), dtype=dtype),
                             requires_grad=True, name=prefix + 'kernel')
        self.bias = Tensor(np.zeros(4 * hidden, dtype=dtype), requires_grad=True,
                           name=prefix + 'bias')

    def parameters(self):
        yield self.weight
        yield self.bias

    def initialize(self, rng):
        limit = np.sqrt(3.0 / (self.kernel * (self.in_channels + self.hidden)))
        self.weight.data[...] = rng.uniform(-limit, limit, self.weight.shape)
        self.bias.data[...] = 0

    def step(self, x_t, h, c):
        z = row_conv(concat_channels([x_t, h]), self.weight, self.bias)
        n = self.hidden
        i = sigmoid(slice_channels(z, 0, n))
        f = sigmoid(slice_channels(z, n, 2 * n))
        g = tanh(slice_channels(z, 2 * n, 3 * n))
        o = sigmoid(slice_channels(z, 3 * n, 4 * n))
        c = f * c + i * g
        h = o * tanh(c)
        return h, c


class BiConvLSTM:
    """ forward and reverse cells scanning the same axis """

    def __init__(self, in_channels, hidden, kernel=3, dtype=DTYPE, name=None):
        prefix = f'{name}/' if name else ''
        self.in_channels = in_channels
        self.hidden = hidden
        self.forward = ConvLSTMCell(in_channels, hidden, kernel, dtype, prefix + 'forward')
        self.reverse = ConvLSTMCell(in_channels, hidden, kernel, dtype, prefix + 'reverse')

    @property
    def out_channels(self):
        return 2 * self.hidden

    def parameters(self):
        yield from self.forward.parameters()
        yield from self.reverse.parameters()

    def initialize(self, rng):
        self.forward.initialize(rng)
        self.reverse.initialize(rng)


def _scan_rows(x, cell, reverse):
    b, r, c, _ = x.shape
    h = Tensor(np.zeros((b, c, cell.hidden), dtype=x.dtype))
    state = Tensor(np.zeros((b, c, cell.hidden), dtype=x.dtype))
    outputs = [None] * r
    for t in (range(r - 1, -1, -1) if reverse else range(r)):
        h, state = cell.step(select(x, 1, t), h, state)
        outputs[t] = h

    return stack(outputs, axis=1)


def conv_lstm_bidirectional(x, params, axis='rows'):
    """ scan the map one row (or one column) at a time in both directions

    The cols scan is the rows scan of the map rotated a quarter turn,
    rotated back afterwards. Output channels are [forward, reverse]. """
    _check_4d(x, 'conv_lstm_bidirectional')
    if axis == 'cols':
        return rot90(conv_lstm_bidirectional(rot90(x, 1), params, 'rows'), -1)
    elif axis != 'rows':
        raise exc.ConfigError(f'unknown scan axis {axis!r}', field='axis')

    if x.shape[3] != params.in_channels:
        raise exc.ShapeMismatchError('conv_lstm_bidirectional', dimension='channels',
                                     expected=params.in_channels, actual=x.shape[3])

    return concat_channels([_scan_rows(x, params.forward, reverse=False),
                            _scan_rows(x, params.reverse, reverse=True)])


def backward(tape, loss):
    """ reverse accumulation from a scalar loss

    Returns a dict mapping every tensor that requires gradients and
    is reachable from loss to its gradient, shaped like the tensor. """
    if loss.size != 1:
        raise exc.ShapeMismatchError('backward needs a scalar loss', dimension='size',
                                     expected=1, actual=loss.size)

    tape.check_order()
    if loss.op != 'leaf' and loss._tape_index is None:
        raise exc.CycleError('loss was not recorded on this tape')

    grads = {loss: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(node)
        if g is None:
            continue

        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue

            if parent in grads:
                grads[parent] = grads[parent] + pg
            else:
                grads[parent] = pg

    return grads


def grad_check(f, inputs, eps=1e-3, exclude=None, floor='auto', kink_tol='auto'):
    """ worst relative error between backward and central differences

    f maps the input tensors to a scalar tensor. The relative error of
    each coordinate is |a - n| / max(|a|, |n|, floor). With floor 'auto'
    it is the largest gradient magnitude of the tensor capped at 1, a
    fixed number overrides it. Coordinates for which
    exclude(tensor, flat_index) is true are skipped. With kink_tol set,
    coordinates whose one sided differences disagree by more than
    kink_tol (relative, same floor) straddle a kink and are skipped too,
    by default this is on for 32 bit inputs only. """
    inputs = list(inputs)
    wide = all(t.dtype == np.float64 for t in inputs)
    if kink_tol == 'auto':
        kink_tol = None if wide else 2e-2

    with Tape() as tape:
        out = f(*inputs)

    grads = backward(tape, out)
    f0 = float(out.data)
    worst = 0.0
    skipped = 0
    for tensor in inputs:
        analytic = grads.get(tensor)
        if analytic is None:
            analytic = np.zeros_like(tensor.data)

        data = tensor.data
        checked = []
        for position, idx in enumerate(np.ndindex(tensor.shape)):
            if exclude is not None and exclude(tensor, position):
                skipped += 1
                continue

            orig = data[idx]
            data[idx] = orig + eps
            step_up = float(data[idx]) - float(orig)
            fp = float(f(*inputs).data)
            data[idx] = orig - eps
            step_down = float(orig) - float(data[idx])
            fm = float(f(*inputs).data)
            data[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                coordinates = (tensor.name, tuple(int(i) for i in idx))
                raise exc.NonFiniteError('non-finite value during grad_check', coordinates=coordinates)

            numeric = (fp - fm) / (step_up + step_down)
            ahead, behind = (fp - f0) / step_up, (f0 - fm) / step_down
            checked.append((float(analytic[idx]), numeric, ahead, behind))

        if not checked:
            continue

        if floor == 'auto':
            scale = max(max(abs(a), abs(n)) for a, n, _, _ in checked)
            if scale == 0:
                continue

            tensor_floor = min(scale, 1.0)
        else:
            tensor_floor = floor

        for a, numeric, ahead, behind in checked:
            if (kink_tol is not None and
                abs(ahead - behind) > kink_tol * max(abs(ahead), abs(behind), tensor_floor)):
                skipped += 1
                continue

            rel = abs(a - numeric) / max(abs(a), abs(numeric), tensor_floor)
            worst = max(worst, rel)

    if skipped:
        log.debug(f'grad_check skipped {skipped} coordinates')

    return worst
