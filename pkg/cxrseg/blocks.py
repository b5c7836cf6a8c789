""" STEM, CONV RES and LSTM RES blocks and the network assembled from them """

import itertools
from dataclasses import dataclass, replace
import numpy as np
from cxrseg import exceptions as exc
from cxrseg.config import setting, dump_dataclass, load_dataclass, read_key_values, field_kinds
from cxrseg.tensor import (DTYPE,
                           Tensor,
                           ConvKernel,
                           NormState,
                           BiConvLSTM,
                           add,
                           elu,
                           batch_norm,
                           leaky_relu,
                           concat_channels,
                           pointwise_conv2d,
                           softmax_channels,
                           spatial_dropout,
                           separable_atrous_conv2d,
                           conv_lstm_bidirectional)
from cxrseg.utils import log, keyed_rng, STREAM_INIT

log = log.getChild('blocks')


@dataclass
class NetConfig:
    n_conv_blocks: int = setting(5, 'int', 'conv-type blocks, the stem counts as the first')
    m_lstm_blocks: int = setting(0, 'int', 'lstm res blocks after the conv blocks')
    branch_kernels: tuple = setting(((3, 3), (5, 5), (7, 7)), 'pairs',
                                    'kernel size of each parallel branch, e.g. 3x3,5x5,7x7')
    branch_dilations: tuple = setting(((1, 1), (3, 3), (5, 5)), 'pairs',
                                      'dilation rate of each parallel branch')
    branch_filters: int = setting(16, 'int', 'output channels of each branch')
    shortcut_filters: int = setting(48, 'int', 'channels carried between blocks')
    num_classes: int = setting(2, 'int', 'output classes, class 0 is the background')
    input_channels: int = setting(1, 'int', 'image channels')
    activation: str = setting('leaky_relu', 'choice:leaky_relu|elu', 'branch activation')
    leaky_alpha: float = setting(0.3, 'float', 'negative slope of the leaky relu')
    dropout_rate: float = setting(0.2, 'float', 'spatial dropout after every block')
    lstm_hidden: int = setting(8, 'int', 'hidden channels of each lstm direction')
    lstm_kernel: int = setting(3, 'int', 'width of the lstm gate kernel')
    normalization: str = setting('none', 'choice:none|per-branch',
                                 'batch normalization after each branch convolution')
    branch_depth: int = setting(1, 'int', 'stacked separable convolutions per branch')
    stem_shortcut: str = setting('projection', 'choice:projection|branch-only',
                                 'stem shortcut path')
    depthwise_bias: bool = setting(False, 'bool', 'give the depthwise half its own bias')

    def __post_init__(self):
        self.branch_kernels = tuple(tuple(k) for k in self.branch_kernels)
        self.branch_dilations = tuple(tuple(d) for d in self.branch_dilations)

    @property
    def n_branches(self):
        return len(self.branch_kernels)

    def validate(self):
        def positive(field, minimum=1):
            if getattr(self, field) < minimum:
                raise exc.ConfigError(f'must be >= {minimum} got {getattr(self, field)}',
                                      field=field)

        positive('n_conv_blocks')
        positive('m_lstm_blocks', 0)
        positive('branch_filters')
        positive('input_channels')
        positive('num_classes', 2)
        positive('lstm_hidden')
        if self.branch_depth not in (1, 2):
            raise exc.ConfigError(f'must be 1 or 2 got {self.branch_depth}', field='branch_depth')

        if not self.branch_kernels:
            raise exc.ConfigError('at least one branch is required', field='branch_kernels')

        if len(self.branch_kernels) != len(self.branch_dilations):
            raise exc.ConfigError(f'{len(self.branch_kernels)} kernels but '
                                  f'{len(self.branch_dilations)} dilations',
                                  field='branch_dilations')

        for k in self.branch_kernels + ((self.lstm_kernel, 1),):
            if any(s < 1 or s % 2 == 0 for s in k):
                raise exc.KernelError(f'kernel sizes must be positive and odd got {k}')

        expected = self.branch_filters * self.n_branches
        if self.shortcut_filters != expected:
            raise exc.ConfigError(f'must equal branch_filters x branches = {expected} '
                                  f'got {self.shortcut_filters}', field='shortcut_filters')

        if not 0 <= self.dropout_rate < 1:
            raise exc.ConfigError(f'must be in [0, 1) got {self.dropout_rate}', field='dropout_rate')

        if not 0 <= self.leaky_alpha < 1:
            raise exc.ConfigError(f'must be in [0, 1) got {self.leaky_alpha}', field='leaky_alpha')

        return self

    def dumps(self):
        return '\n'.join(dump_dataclass(self)) + '\n'

    @classmethod
    def loads(cls, text):
        return load_dataclass(cls, read_key_values(text, field_kinds(cls)))


def activation_for(cfg):
    if cfg.activation == 'elu':
        return elu

    alpha = cfg.leaky_alpha
    return lambda x: leaky_relu(x, alpha)


class Layer:
    """ something holding named parameters """

    def parameters(self):
        return iter(())

    def buffers(self):
        return iter(())

    @property
    def param_count(self):
        return sum(p.size for p in self.parameters())


class SeparableConv(Layer):
    def __init__(self, name, in_channels, out_channels, spatial, dilation,
                 depthwise_bias=False, dtype=DTYPE):
        self.name = name
        self.depthwise = ConvKernel.depthwise(in_channels, spatial, dilation,
                                              use_bias=depthwise_bias, dtype=dtype,
                                              name=f'{name}/depthwise')
        self.pointwise = ConvKernel.pointwise(in_channels, out_channels, dtype=dtype,
                                              name=f'{name}/pointwise')

    def __call__(self, x):
        return separable_atrous_conv2d(x, self.depthwise, self.pointwise)

    def parameters(self):
        yield from self.depthwise.parameters()
        yield from self.pointwise.parameters()

    def initialize(self, rng):
        self.depthwise.initialize(rng)
        self.pointwise.initialize(rng)


class Norm(Layer):
    def __init__(self, name, channels, dtype=DTYPE):
        self.name = name
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True, name=f'{name}/gamma')
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f'{name}/beta')
        self.state = NormState(channels, dtype=dtype, name=name)

    def __call__(self, x, training):
        return batch_norm(x, self.gamma, self.beta, self.state, training=training)

    def parameters(self):
        yield self.gamma
        yield self.beta

    def buffers(self):
        yield from self.state.buffers()

    def initialize(self, rng):
        self.gamma.data[...] = 1
        self.beta.data[...] = 0
        self.state.mean.data[...] = 0
        self.state.var.data[...] = 1


class Branch(Layer):
    """ one or two separable atrous convolutions, each activated """

    def __init__(self, name, cfg, in_channels, spatial, dilation, dtype=DTYPE):
        self.name = name
        self.spatial = spatial
        self.dilation = dilation
        self.convs = []
        self.norms = []
        channels = in_channels
        for depth in range(cfg.branch_depth):
            self.convs.append(SeparableConv(f'{name}/sep_{depth}', channels, cfg.branch_filters,
                                            spatial, dilation, cfg.depthwise_bias, dtype))
            self.norms.append(Norm(f'{name}/norm_{depth}', cfg.branch_filters, dtype)
                              if cfg.normalization == 'per-branch' else None)
            channels = cfg.branch_filters

    def __call__(self, x, training, activate):
        for conv, norm in zip(self.convs, self.norms):
            x = conv(x)
            if norm is not None:
                x = norm(x, training)

            x = activate(x)

        return x

    def layers(self):
        for conv, norm in zip(self.convs, self.norms):
            yield conv
            if norm is not None:
                yield norm

    def parameters(self):
        for layer in self.layers():
            yield from layer.parameters()

    def buffers(self):
        for layer in self.layers():
            yield from layer.buffers()

    def initialize(self, rng):
        for layer in self.layers():
            layer.initialize(rng)


class Block(Layer):
    kind = None

    def __init__(self, name, cfg, in_channels):
        self.name = name
        self.cfg = cfg
        self.in_channels = in_channels
        self.out_channels = cfg.shortcut_filters
        self.activate = activation_for(cfg)

    def components(self):
        """ (label, layer) pairs in parameter order """
        raise NotImplementedError

    def parameters(self):
        for _, layer in self.components():
            yield from layer.parameters()

    def buffers(self):
        for _, layer in self.components():
            yield from layer.buffers()

    def initialize(self, rng):
        for _, layer in self.components():
            layer.initialize(rng)

    def summary_rows(self):
        for label, layer in self.components():
            yield f'{self.name}/{label}', type(layer).__name__, layer.param_count

    def __call__(self, x, training=False, rng=None):
        raise NotImplementedError


class _Kernel(Layer):
    """ a lone pointwise kernel seen as a layer """

    def __init__(self, kernel):
        self.kernel = kernel

    def parameters(self):
        return self.kernel.parameters()

    def initialize(self, rng):
        self.kernel.initialize(rng)


class ConvResBlock(Block):
    """ parallel separable atrous branches concatenated onto a shortcut

    Every block but the stem is pre-activated, its branches read act(x)
    and its shortcut is the identity. The stem omits the pre-activation,
    its branches read the raw image and its shortcut is a 1x1 projection
    (or absent) because the image has fewer channels than the blocks. """

    kind = 'conv_res'

    def __init__(self, name, cfg, in_channels, stem=False, dtype=DTYPE):
        super().__init__(name, cfg, in_channels)
        self.stem = stem
        if stem:
            self.kind = 'stem'
        elif in_channels != cfg.shortcut_filters:
            raise exc.ShapeMismatchError(f'{name} input', dimension='channels',
                                         expected=cfg.shortcut_filters, actual=in_channels)

        self.branches = [Branch(f'{name}/branch_{i}', cfg, in_channels, spatial, dilation, dtype)
                         for i, (spatial, dilation)
                         in enumerate(zip(cfg.branch_kernels, cfg.branch_dilations))]
        self.shortcut = None
        if stem and cfg.stem_shortcut == 'projection':
            self.shortcut = _Kernel(ConvKernel.pointwise(in_channels, cfg.shortcut_filters,
                                                         dtype=dtype, name=f'{name}/shortcut'))

    def components(self):
        for i, branch in enumerate(self.branches):
            yield f'branch_{i}', branch

        if self.shortcut is not None:
            yield 'shortcut', self.shortcut

    def __call__(self, x, training=False, rng=None):
        branch_input = x if self.stem else self.activate(x)
        residual = concat_channels([branch(branch_input, training, self.activate)
                                    for branch in self.branches])
        if self.shortcut is not None:
            out = add(residual, pointwise_conv2d(x, self.shortcut.kernel))
        elif self.stem:
            out = residual
        else:
            out = add(residual, x)

        return spatial_dropout(out, self.cfg.dropout_rate, rng, training)


class _Recurrent(Layer):
    def __init__(self, lstm):
        self.lstm = lstm

    def parameters(self):
        return self.lstm.parameters()

    def initialize(self, rng):
        self.lstm.initialize(rng)


class LstmResBlock(Block):
    """ orthogonal bidirectional convolutional lstms on a residual path """

    kind = 'lstm_res'

    def __init__(self, name, cfg, dtype=DTYPE):
        super().__init__(name, cfg, cfg.shortcut_filters)
        self.rows = _Recurrent(BiConvLSTM(cfg.shortcut_filters, cfg.lstm_hidden, cfg.lstm_kernel,
                                          dtype=dtype, name=f'{name}/rows'))
        self.cols = _Recurrent(BiConvLSTM(cfg.shortcut_filters, cfg.lstm_hidden, cfg.lstm_kernel,
                                          dtype=dtype, name=f'{name}/cols'))
        self.projection = _Kernel(ConvKernel.pointwise(4 * cfg.lstm_hidden, cfg.shortcut_filters,
                                                       dtype=dtype, name=f'{name}/projection'))

    def components(self):
        yield 'rows', self.rows
        yield 'cols', self.cols
        yield 'projection', self.projection

    def __call__(self, x, training=False, rng=None):
        if x.shape[3] != self.in_channels:
            raise exc.ShapeMismatchError(f'{self.name} input', dimension='channels',
                                         expected=self.in_channels, actual=x.shape[3])

        a = self.activate(x)
        merged = concat_channels([conv_lstm_bidirectional(a, self.rows.lstm, 'rows'),
                                  conv_lstm_bidirectional(a, self.cols.lstm, 'cols')])
        out = add(pointwise_conv2d(merged, self.projection.kernel), x)
        return spatial_dropout(out, self.cfg.dropout_rate, rng, training)


class Head(Block):
    kind = 'head'

    def __init__(self, name, cfg, in_channels, dtype=DTYPE):
        super().__init__(name, cfg, in_channels)
        self.out_channels = cfg.num_classes
        self.projection = _Kernel(ConvKernel.pointwise(in_channels, cfg.num_classes,
                                                       dtype=dtype, name=name))

    def components(self):
        yield 'projection', self.projection

    def __call__(self, x, training=False, rng=None):
        return softmax_channels(pointwise_conv2d(x, self.projection.kernel))


class Model:
    """ blocks in order followed by the softmax head """

    def __init__(self, cfg, blocks, head, dtype=DTYPE):
        self.config = cfg
        self.blocks = list(blocks)
        self.head = head
        self.dtype = np.dtype(dtype)
        names = [t.name for t in itertools.chain(self.parameters(), self.buffers())]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise exc.ConfigError(f'duplicate parameter names {dupes}', field='blocks')

    def layers(self):
        yield from self.blocks
        yield self.head

    def parameters(self):
        for layer in self.layers():
            yield from layer.parameters()

    def buffers(self):
        for layer in self.layers():
            yield from layer.buffers()

    def named_parameters(self):
        return {t.name: t for t in self.parameters()}

    def state(self):
        """ every stored array by name, trainable first """
        return {t.name: t for t in itertools.chain(self.parameters(), self.buffers())}

    def initialize(self, seed):
        rng = keyed_rng(seed, STREAM_INIT)
        for layer in self.layers():
            layer.initialize(rng)

        return self

    def forward(self, batch, training=False, rng=None):
        return forward(self, batch, training=training, rng=rng)

    __call__ = forward


def assemble(cfg, blocks, dtype=DTYPE):
    in_channels = blocks[-1].out_channels if blocks else cfg.input_channels
    return Model(cfg, blocks, Head('head', cfg, in_channels, dtype), dtype)


def build_stem_block(cfg, input_channels, rng=None, dtype=DTYPE):
    cfg.validate()
    block = ConvResBlock('stem', cfg, input_channels, stem=True, dtype=dtype)
    if rng is not None:
        block.initialize(rng)

    return block


def build_conv_res_block(cfg, input_channels, name='conv_1', rng=None, dtype=DTYPE):
    cfg.validate()
    block = ConvResBlock(name, cfg, input_channels, dtype=dtype)
    if rng is not None:
        block.initialize(rng)

    return block


def build_lstm_res_block(cfg, name='lstm_1', rng=None, dtype=DTYPE):
    cfg.validate()
    if cfg.m_lstm_blocks < 1:
        raise exc.ConfigError('no lstm res blocks are configured', field='m_lstm_blocks')

    block = LstmResBlock(name, cfg, dtype=dtype)
    if rng is not None:
        block.initialize(rng)

    return block


def build_res_cr_net(cfg, seed=0, dtype=DTYPE):
    cfg.validate()
    blocks = [build_stem_block(cfg, cfg.input_channels, dtype=dtype)]
    blocks += [build_conv_res_block(cfg, cfg.shortcut_filters, f'conv_{i}', dtype=dtype)
               for i in range(1, cfg.n_conv_blocks)]
    blocks += [build_lstm_res_block(cfg, f'lstm_{i}', dtype=dtype)
               for i in range(1, cfg.m_lstm_blocks + 1)]
    model = assemble(cfg, blocks, dtype)
    model.initialize(seed)
    log.debug(f'built {len(blocks)} blocks with {param_count(model, table=False)} parameters')
    return model


def forward(model, batch, training=False, rng=None):
    if not isinstance(batch, Tensor):
        batch = Tensor(batch, dtype=model.dtype)

    if batch.ndim != 4:
        raise exc.ShapeMismatchError('model input', dimension='rank', expected=4, actual=batch.ndim)

    if batch.shape[3] != model.config.input_channels:
        raise exc.ShapeMismatchError('model input', dimension='channels',
                                     expected=model.config.input_channels, actual=batch.shape[3])

    x = batch
    for block in model.blocks:
        x = block(x, training=training, rng=rng)

    return model.head(x)


def layer_summary(model):
    """ rows of (layer, kind, parameters), one per component plus a subtotal per block """
    rows = []
    for layer in model.layers():
        rows.extend(layer.summary_rows())
        rows.append((layer.name, layer.kind, layer.param_count))

    return rows


def block_param_counts(model):
    return {layer.name: layer.param_count for layer in model.layers()}


def param_count(model, table=True):
    total = sum(p.size for p in model.parameters())
    if table:
        from cxrseg.reports import layer_table
        log.debug('\n' + layer_table(layer_summary(model), total))

    return total


def reference_delta(model, reference=None):
    """ compare against the reference count and say where the difference lives """
    from cxrseg.config import config
    if reference is None:
        reference = config.reference_param_count

    counts = block_param_counts(model)
    total = sum(counts.values())
    delta = reference - total
    result = {'count': total, 'reference': reference, 'delta': delta, 'blocks': counts}
    if delta:
        log.warning(f'parameter count {total} differs from the reference {reference} by {delta}')

    return result


def variant_counts(cfg):
    """ trainable parameter counts over the choices the architecture leaves open """
    rows = []
    for normalization, depth, shortcut, dbias in itertools.product(
            ('none', 'per-branch'), (1, 2), ('projection', 'branch-only'), (False, True)):
        variant = replace(cfg, normalization=normalization, branch_depth=depth,
                          stem_shortcut=shortcut, depthwise_bias=dbias)
        model = build_res_cr_net(variant)
        rows.append((normalization, depth, shortcut, dbias, param_count(model, table=False)))

    return rows
