from __future__ import division

import unittest
import os
import shutil

import numpy as np
import torch
from numpy.testing import assert_allclose

from vscc import ConfigurationError, CheckpointError
from vscc.channel import ChannelConfig
from vscc.coding import Method
from vscc.network import (ArchitectureConfig, JSCCModel, Checkpoint,
                          AttentionBlock, ResnetBlock, EncoderOutput, swish,
                          num_groups, build_encoder, build_decoder)
from vscc.sio import save_checkpoint, load_checkpoint, CKPT_MAGIC
from vscc.utils import make_rng
from vscc.tests import tiny_architecture

current_dir = os.path.dirname(os.path.abspath(__file__))
testdir = os.path.join(current_dir, 'tmp')


class TestArchitecture(unittest.TestCase):

    def test_presets(self):

        a = ArchitectureConfig()
        self.assertEqual(a.latent_shape, (16, 16, 16))
        self.assertEqual(a.symbols_per_image(), 4096)
        self.assertEqual(a.symbols_per_image(transmit_variance=True), 8192)
        assert_allclose(a.bandwidth_ratio(), 4096 / (256 * 256 * 3))
        self.assertEqual('{:.4f}'.format(a.bandwidth_ratio()), '0.0208')
        self.assertEqual(a, ArchitectureConfig.full_scale())

        d = ArchitectureConfig.desk()
        self.assertEqual(d.latent_shape, (4, 8, 8))
        self.assertEqual(d.n_stages, 2)
        self.assertEqual(ArchitectureConfig.from_dict(d.to_dict()), d)
        self.assertIn('latent_shape', repr(d))

    def test_heads(self):

        a = tiny_architecture(latent_channels=3)
        self.assertEqual(a.head_channels, 6)
        self.assertEqual(a.for_method('ae').head_channels, 3)
        self.assertEqual(a.for_method(Method.VAE).head_channels, 6)
        # a copy is returned
        self.assertTrue(a.emit_variance)

    def test_errors(self):

        with self.assertRaises(ConfigurationError):
            ArchitectureConfig(image_size=30, stage_widths=(8, 8))
        with self.assertRaises(ConfigurationError):
            ArchitectureConfig(image_size=2, stage_widths=(8, 8))
        with self.assertRaises(ConfigurationError):
            ArchitectureConfig(stage_widths=())
        with self.assertRaises(ConfigurationError):
            ArchitectureConfig(latent_channels=0)

    def test_groups(self):

        self.assertEqual(num_groups(64), 2)
        self.assertEqual(num_groups(192), 6)
        self.assertEqual(num_groups(3), 1)
        self.assertEqual(num_groups(48), 1)
        self.assertEqual(num_groups(96, 16), 6)
        self.assertEqual(num_groups(8, 4), 2)
        self.assertEqual(num_groups(12, 8), 1)


class TestBlocks(unittest.TestCase):

    def test_swish(self):

        assert_allclose(float(swish(torch.tensor(1.))), 0.7311, atol=1e-4)
        self.assertEqual(float(swish(torch.tensor(0.))), 0)

    def test_resnet(self):

        b = ResnetBlock(8, 16, group_size=4)
        x = torch.randn(2, 8, 5, 5)
        self.assertEqual(tuple(b(x).shape), (2, 16, 5, 5))
        self.assertIsInstance(b.skip, torch.nn.Conv2d)
        b = ResnetBlock(8, 8, group_size=4)
        self.assertIsInstance(b.skip, torch.nn.Identity)

    def test_attention(self):

        torch.manual_seed(0)
        b = AttentionBlock(8, group_size=4)
        x = torch.randn(2, 8, 3, 4)
        w = b.attention_weights(x)
        self.assertEqual(tuple(w.shape), (2, 12, 12))
        assert_allclose(w.sum(dim=2).detach().numpy(), 1, rtol=1e-5)
        self.assertEqual(tuple(b(x).shape), (2, 8, 3, 4))

        # a single position attends to itself: the output is V
        x = torch.randn(2, 8, 1, 1)
        v = b.v(b.norm(x))
        assert_allclose(b.attend(x).detach().numpy(),
                        v.detach().numpy(), rtol=1e-5, atol=1e-6)

    def test_encoder_output(self):

        with self.assertRaises(ValueError):
            EncoderOutput()
        out = EncoderOutput(latent=torch.zeros(1, 2, 3, 3))
        self.assertEqual(out.shape, (1, 2, 3, 3))


class TestModel(unittest.TestCase):

    def test_shapes(self):

        torch.manual_seed(0)
        arch = tiny_architecture(image_size=16, stage_widths=(8, 16))
        x = torch.rand(3, 3, 16, 16) * 2 - 1
        for method in ['vscc', 'vae']:
            m = JSCCModel(arch, method)
            out = m.encode(x)
            self.assertEqual(out.stats.shape, (3, 2, 4, 4))
            x_hat, stats = m(x, ChannelConfig(5), make_rng(0, 'torch'))
            self.assertEqual(tuple(x_hat.shape), (3, 3, 16, 16))
            self.assertTrue(float(x_hat.abs().max()) < 1)
            self.assertEqual(stats.shape, (3, 2, 4, 4))

        m = JSCCModel(arch, 'ae')
        out = m.encode(x)
        self.assertIsNone(out.stats)
        self.assertEqual(out.shape, (3, 2, 4, 4))
        x_hat, stats = m(x, ChannelConfig(5), make_rng(0, 'torch'))
        self.assertIsNone(stats)
        self.assertEqual(tuple(x_hat.shape), (3, 3, 16, 16))

        with self.assertRaises(ConfigurationError):
            m.encode(torch.zeros(1, 3, 8, 8))

    def test_parameter_counts(self):

        arch = tiny_architecture()
        vscc = JSCCModel(arch, 'vscc').count_parameters()
        vae = JSCCModel(arch, 'vae').count_parameters()
        ae = JSCCModel(arch, 'ae').count_parameters()
        self.assertEqual(vscc, vae)
        # only the head differs: conv3x3 (width -> 2k) and the 1x1 (2k -> 2k)
        width, k = arch.stage_widths[-1], arch.latent_channels
        diff = (width * 9 * k + k) + (2 * k * 2 * k + 2 * k - k * k - k)
        self.assertEqual(vscc - ae, diff)

        no_attn = JSCCModel(tiny_architecture(attention_enabled=False),
                            'vscc').count_parameters()
        self.assertEqual(vscc - no_attn, 2 * (2 * width + 4 * (width ** 2 +
                                                               width)))

    def test_builders(self):

        arch = tiny_architecture()
        enc = build_encoder(arch)
        dec = build_decoder(arch)
        z = enc(torch.zeros(1, 3, 8, 8)).stats.mean
        self.assertEqual(tuple(dec(z).shape), (1, 3, 8, 8))

    def test_every_parameter_learns(self):

        torch.manual_seed(0)
        for method in ['vscc', 'ae']:
            m = JSCCModel(tiny_architecture(), method)
            x = torch.rand(2, 3, 8, 8) * 2 - 1
            x_hat, stats = m(x, ChannelConfig(5), make_rng(0, 'torch'))
            loss = torch.mean((x - x_hat) ** 2)
            if stats is not None:
                loss = loss + stats.variance.mean() + stats.mean.pow(2).mean()
            loss.backward()
            for name, p in m.named_parameters():
                self.assertIsNotNone(p.grad, name)
                self.assertTrue(float(p.grad.abs().sum()) > 0, name)


class TestCheckpoint(unittest.TestCase):

    def setUp(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)
        os.makedirs(testdir)
        torch.manual_seed(0)
        self.model = JSCCModel(tiny_architecture(), 'vscc')
        self.ckpt = Checkpoint.from_model(self.model, snr_db=5., cmc=2.,
                                          epoch=3, seed=0)

    def tearDown(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)

    def test_model_round_trip(self):

        self.assertIs(self.ckpt.method, Method.VSCC)
        self.assertIn('cmc', repr(self.ckpt))
        m = self.ckpt.to_model()
        self.assertFalse(m.training)
        x = torch.rand(2, 3, 8, 8)
        self.model.eval()
        with torch.no_grad():
            a = self.model.encode(x).stats.mean
            b = m.encode(x).stats.mean
        self.assertTrue(torch.equal(a, b))

        with self.assertRaises(CheckpointError):
            Checkpoint(tiny_architecture(), {}, {})

    def test_byte_stable(self):

        f1 = os.path.join(testdir, 'a.ckpt')
        f2 = os.path.join(testdir, 'b.ckpt')
        save_checkpoint(self.ckpt, f1)
        ck = load_checkpoint(f1, architecture=tiny_architecture())
        save_checkpoint(ck, f2)
        with open(f1, 'rb') as f:
            b1 = f.read()
        with open(f2, 'rb') as f:
            b2 = f.read()
        self.assertEqual(b1, b2)
        self.assertTrue(b1.startswith(CKPT_MAGIC))
        self.assertEqual(ck.fingerprint, self.ckpt.fingerprint)
        self.assertEqual(ck.metadata['epoch'], 3)
        for k, v in self.ckpt.parameters.items():
            np.testing.assert_array_equal(ck.parameters[k], v)

    def test_corruption(self):

        fpath = os.path.join(testdir, 'a.ckpt')
        save_checkpoint(self.ckpt, fpath)
        with open(fpath, 'rb') as f:
            raw = f.read()

        def _write(b):
            with open(fpath, 'wb') as f:
                f.write(b)

        with self.assertRaisesRegex(CheckpointError, 'not found'):
            load_checkpoint(os.path.join(testdir, 'none.ckpt'))

        _write(raw[:-10])
        with self.assertRaisesRegex(CheckpointError, 'truncated'):
            load_checkpoint(fpath)

        flipped = bytearray(raw)
        flipped[-5] ^= 0xFF
        _write(bytes(flipped))
        with self.assertRaisesRegex(CheckpointError, 'checksum'):
            load_checkpoint(fpath)

        _write(b'PK' + raw)
        with self.assertRaisesRegex(CheckpointError, 'not a vscc'):
            load_checkpoint(fpath)

        _write(raw.replace(b'"format_version": 1', b'"format_version": 99',
                           1))
        with self.assertRaisesRegex(CheckpointError, 'version 99'):
            load_checkpoint(fpath)

    def test_shape_mismatch(self):

        fpath = os.path.join(testdir, 'a.ckpt')
        save_checkpoint(self.ckpt, fpath)
        with self.assertRaisesRegex(CheckpointError, 'shape mismatch'):
            load_checkpoint(fpath, architecture=tiny_architecture(
                latent_channels=3))
