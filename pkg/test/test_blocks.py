import unittest
from dataclasses import replace
import numpy as np
from cxrseg import blocks
from cxrseg import exceptions as exc
from cxrseg.blocks import NetConfig, build_res_cr_net
from cxrseg.tensor import Tensor, grad_check
from cxrseg.utils import keyed_rng
from .common import tiny_config

DEFAULT_COUNT = 25717


class TestNetConfig(unittest.TestCase):

    def test_defaults_validate(self):
        NetConfig().validate()

    def test_shortcut_must_match_branches(self):
        with self.assertRaises(exc.ConfigError) as cm:
            NetConfig(shortcut_filters=40).validate()

        assert cm.exception.field == 'shortcut_filters'

    def test_even_kernel(self):
        with self.assertRaises(exc.KernelError):
            NetConfig(branch_kernels=((3, 3), (4, 4), (7, 7))).validate()

    def test_one_class_rejected(self):
        with self.assertRaises(exc.ConfigError) as cm:
            NetConfig(num_classes=1).validate()

        assert cm.exception.field == 'num_classes'

    def test_kernels_and_dilations_pair_up(self):
        with self.assertRaises(exc.ConfigError):
            NetConfig(branch_dilations=((1, 1),)).validate()

    def test_text_round_trip(self):
        cfg = NetConfig(activation='elu', normalization='per-branch', m_lstm_blocks=1,
                        branch_kernels=((3, 3), (5, 5)), branch_dilations=((1, 1), (2, 2)),
                        shortcut_filters=32)
        assert NetConfig.loads(cfg.dumps()) == cfg

    def test_unknown_key(self):
        with self.assertRaises(exc.UnknownConfigKeyError):
            NetConfig.loads('n_conv_blocks = 3\nbranch_colour = red\n')


class TestCounts(unittest.TestCase):

    def test_default_count(self):
        model = build_res_cr_net(NetConfig())
        assert blocks.param_count(model) == DEFAULT_COUNT

    def test_block_breakdown_sums(self):
        model = build_res_cr_net(NetConfig())
        counts = blocks.block_param_counts(model)
        assert list(counts) == ['stem', 'conv_1', 'conv_2', 'conv_3', 'conv_4', 'head']
        assert counts['stem'] == 275
        assert counts['conv_1'] == 6336
        assert counts['head'] == 98
        assert sum(counts.values()) == DEFAULT_COUNT

    def test_reference_delta(self):
        delta = blocks.reference_delta(build_res_cr_net(NetConfig()))
        assert delta['reference'] == 59165
        assert delta['delta'] == 59165 - DEFAULT_COUNT

    def test_variants(self):
        rows = blocks.variant_counts(NetConfig())
        assert len(rows) == 16
        counts = {row[:4]: row[4] for row in rows}
        base = counts['none', 1, 'projection', False]
        assert base == DEFAULT_COUNT
        assert counts['per-branch', 1, 'projection', False] - base == 480
        assert counts['none', 1, 'branch-only', False] - base == -96

    def test_layer_summary_rows(self):
        model = build_res_cr_net(tiny_config())
        rows = blocks.layer_summary(model)
        subtotals = {name: count for name, _, count in rows if '/' not in name}
        assert sum(subtotals.values()) == blocks.param_count(model, table=False)

    def test_empty_blocks(self):
        cfg = NetConfig()
        model = blocks.assemble(cfg, [])
        assert blocks.param_count(model, table=False) == 4

    def test_parameter_names_are_unique_and_ordered(self):
        model = build_res_cr_net(NetConfig(m_lstm_blocks=1))
        names = [p.name for p in model.parameters()]
        assert len(names) == len(set(names))
        assert names[0] == 'stem/branch_0/sep_0/depthwise/kernel'
        assert names[-1] == 'head/bias'
        assert 'lstm_1/rows/forward/kernel' in names


class TestForward(unittest.TestCase):

    def test_shape_law_tiny(self):
        model = build_res_cr_net(tiny_config())
        for r, c in ((8, 8), (17, 23), (64, 96), (300, 340)):
            out = model.forward(np.zeros((1, r, c, 1), dtype=np.float32))
            assert out.shape == (1, r, c, 2)

    def test_shape_law_default(self):
        model = build_res_cr_net(NetConfig())
        rng = np.random.default_rng(0)
        for r, c in ((8, 8), (17, 23), (64, 96)):
            out = model.forward(rng.random((2, r, c, 1), dtype=np.float32)).data
            assert out.shape == (2, r, c, 2)
            np.testing.assert_allclose(out.sum(axis=-1), 1, rtol=1e-5)

    def test_lstm_blocks_keep_shape(self):
        model = build_res_cr_net(tiny_config(m_lstm_blocks=1, lstm_hidden=2))
        assert model.forward(np.zeros((1, 5, 7, 1))).shape == (1, 5, 7, 2)

    def test_input_channels_checked(self):
        model = build_res_cr_net(tiny_config())
        with self.assertRaises(exc.ShapeMismatchError) as cm:
            model.forward(np.zeros((1, 8, 8, 3)))

        assert cm.exception.dimension == 'channels'

    def test_rank_checked(self):
        model = build_res_cr_net(tiny_config())
        with self.assertRaises(exc.ShapeMismatchError):
            model.forward(np.zeros((8, 8, 1)))

    def test_same_seed_same_weights(self):
        a = build_res_cr_net(tiny_config(), seed=3)
        b = build_res_cr_net(tiny_config(), seed=3)
        c = build_res_cr_net(tiny_config(), seed=4)
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)

        assert any(not np.array_equal(pa.data, pc.data)
                   for pa, pc in zip(a.parameters(), c.parameters()))

    def test_inference_is_deterministic(self):
        model = build_res_cr_net(tiny_config(dropout_rate=0.5))
        x = np.random.default_rng(1).random((1, 9, 9, 1))
        np.testing.assert_array_equal(model.forward(x).data, model.forward(x).data)

    def test_training_dropout_needs_rng(self):
        model = build_res_cr_net(tiny_config(dropout_rate=0.5))
        with self.assertRaises(exc.ConfigError):
            model.forward(np.zeros((1, 4, 4, 1)), training=True)

    def test_training_dropout_is_keyed(self):
        model = build_res_cr_net(tiny_config(dropout_rate=0.5))
        x = np.random.default_rng(2).random((2, 6, 6, 1))
        a = model.forward(x, training=True, rng=keyed_rng(0, 3, 1, 0)).data
        b = model.forward(x, training=True, rng=keyed_rng(0, 3, 1, 0)).data
        np.testing.assert_array_equal(a, b)

    def test_branch_only_stem(self):
        model = build_res_cr_net(tiny_config(stem_shortcut='branch-only'))
        assert 'stem/shortcut/kernel' not in model.named_parameters()
        assert model.forward(np.zeros((1, 6, 6, 1))).shape == (1, 6, 6, 2)

    def test_normalized_model_has_buffers(self):
        model = build_res_cr_net(tiny_config(normalization='per-branch', branch_depth=2))
        buffers = [b.name for b in model.buffers()]
        assert 'stem/branch_0/norm_1/moving_mean' in buffers
        assert all(b.name not in model.named_parameters() for b in model.buffers())


class TestBlockGradients(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def _check(self, block, in_channels, eps, tol, dtype, shape=(1, 5, 5)):
        x = Tensor(self.rng.normal(size=(*shape, in_channels)).astype(dtype), requires_grad=True)
        R = self.rng.normal(size=(*shape, block.out_channels))
        err = grad_check(lambda *_: (block(x) * R).sum(), [x, *block.parameters()], eps=eps)
        assert err < tol, err

    def test_stem_64(self):
        cfg = tiny_config(activation='elu')
        block = blocks.build_stem_block(cfg, 1, keyed_rng(0, 1), dtype=np.float64)
        self._check(block, 1, 1e-6, 1e-6, np.float64)

    def test_conv_res_64(self):
        cfg = tiny_config(activation='elu', normalization='per-branch')
        block = blocks.build_conv_res_block(cfg, 8, rng=keyed_rng(0, 1), dtype=np.float64)
        self._check(block, 8, 1e-6, 1e-6, np.float64)

    def test_lstm_res_64(self):
        cfg = tiny_config(activation='elu', m_lstm_blocks=1, lstm_hidden=1)
        block = blocks.build_lstm_res_block(cfg, rng=keyed_rng(0, 1), dtype=np.float64)
        self._check(block, 8, 1e-6, 1e-6, np.float64, shape=(1, 3, 4))

    def test_stem_32(self):
        block = blocks.build_stem_block(tiny_config(), 1, keyed_rng(0, 1))
        self._check(block, 1, 1e-3, 1e-2, np.float32)

    def test_conv_res_32(self):
        block = blocks.build_conv_res_block(tiny_config(), 8, rng=keyed_rng(0, 1))
        self._check(block, 8, 1e-3, 1e-2, np.float32)

    def test_head_64(self):
        cfg = tiny_config()
        model = blocks.assemble(cfg, [], dtype=np.float64)
        model.initialize(0)
        x = Tensor(self.rng.normal(size=(1, 4, 4, 1)), requires_grad=True)
        R = self.rng.normal(size=(1, 4, 4, 2))
        err = grad_check(lambda *_: (model.forward(x) * R).sum(), [x, *model.parameters()],
                         eps=1e-6)
        assert err < 1e-6, err

    def test_whole_model_64(self):
        cfg = tiny_config(activation='elu', m_lstm_blocks=1, lstm_hidden=1)
        model = build_res_cr_net(cfg, seed=3, dtype=np.float64)
        assert [b.kind for b in model.blocks] == ['stem', 'conv_res', 'lstm_res']
        x = Tensor(self.rng.normal(size=(1, 3, 4, 1)), requires_grad=True)
        R = self.rng.normal(size=(1, 3, 4, 2))
        err = grad_check(lambda *_: (model.forward(x) * R).sum(), [x, *model.parameters()],
                         eps=1e-6)
        assert err < 1e-6, err

    def test_lstm_without_blocks_configured(self):
        with self.assertRaises(exc.ConfigError):
            blocks.build_lstm_res_block(tiny_config())


class TestResidual(unittest.TestCase):

    def test_silent_branches_pass_input_through(self):
        for activation in ('leaky_relu', 'elu'):
            cfg = tiny_config(activation=activation)
            block = blocks.build_conv_res_block(cfg, 8, rng=keyed_rng(0, 2), dtype=np.float64)
            for p in block.parameters():
                p.data[...] = 0

            x = np.random.default_rng(6).normal(size=(2, 5, 6, 8))
            np.testing.assert_array_equal(block(Tensor(x)).data, x)

    def test_silent_lstm_passes_input_through(self):
        cfg = tiny_config(m_lstm_blocks=1, lstm_hidden=2)
        block = blocks.build_lstm_res_block(cfg, rng=keyed_rng(0, 2), dtype=np.float64)
        for p in block.parameters():
            p.data[...] = 0

        x = np.random.default_rng(7).normal(size=(1, 4, 5, 8))
        np.testing.assert_array_equal(block(Tensor(x)).data, x)

    def test_stem_branches_read_raw_input(self):
        cfg = tiny_config()
        seen = []

        def recording(activate):
            def wrapped(t):
                seen.append(t)
                return activate(t)
            return wrapped

        x = Tensor(np.random.default_rng(8).normal(size=(1, 4, 4, 1)))
        stem = blocks.ConvResBlock('stem', cfg, 1, stem=True, dtype=np.float64)
        stem.initialize(keyed_rng(0, 2))
        stem.activate = recording(stem.activate)
        stem(x)
        assert seen and all(t is not x for t in seen)

        seen.clear()
        h = Tensor(np.random.default_rng(9).normal(size=(1, 4, 4, 8)))
        block = blocks.build_conv_res_block(cfg, 8, rng=keyed_rng(0, 2), dtype=np.float64)
        block.activate = recording(block.activate)
        block(h)
        assert seen[0] is h

    def test_another_block_adds_its_own_count(self):
        counts = [blocks.param_count(build_res_cr_net(NetConfig(n_conv_blocks=n)), table=False)
                  for n in (3, 4, 5)]
        per_block = blocks.block_param_counts(build_res_cr_net(NetConfig()))['conv_1']
        assert counts[1] - counts[0] == per_block
        assert counts[2] - counts[1] == per_block
