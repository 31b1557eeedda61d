from __future__ import division

import unittest
import os
import shutil

import numpy as np
import yaml

from vscc import ConfigurationError
from vscc.coding import Method
from vscc.config import ExperimentConfig, DEFAULTS, parse_override
from vscc.evaluation import Mode
from vscc.network import ArchitectureConfig

current_dir = os.path.dirname(os.path.abspath(__file__))
testdir = os.path.join(current_dir, 'tmp')


class TestOverrides(unittest.TestCase):

    def test_parse(self):

        self.assertEqual(parse_override('train.cmc=10'), (['train', 'cmc'],
                                                          10))
        self.assertEqual(parse_override('seed = 3'), (['seed'], 3))
        self.assertEqual(parse_override('eval.test_snr_db=-10:25:5'),
                         (['eval', 'test_snr_db'], '-10:25:5'))
        self.assertEqual(parse_override('sweep.cmcs=[1, 2]'),
                         (['sweep', 'cmcs'], [1, 2]))
        self.assertEqual(parse_override('train.normalize_power=false'),
                         (['train', 'normalize_power'], False))
        self.assertEqual(parse_override('eval.mode=fixed'),
                         (['eval', 'mode'], 'fixed'))
        with self.assertRaises(ConfigurationError):
            parse_override('train.cmc')
        with self.assertRaises(ConfigurationError):
            parse_override('sweep.cmcs=[1, 2')


class TestExperimentConfig(unittest.TestCase):

    def setUp(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)
        os.makedirs(testdir)

    def tearDown(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)

    def test_defaults(self):

        c = ExperimentConfig()
        self.assertEqual(c.architecture, ArchitectureConfig.desk())
        self.assertEqual(c.seed, 0)
        self.assertEqual(c.to_dict()['train'], DEFAULTS['train'])
        self.assertIn('fingerprint', repr(c))

    def test_presets(self):

        for name in ['desk', 'full_scale', 'smoke']:
            c = ExperimentConfig.preset(name)
            self.assertEqual(c.dataset['crop_size'],
                             c.architecture.image_size)
            self.assertTrue(c.path.endswith(name + '.yml'))

        d = ExperimentConfig.preset('desk')
        self.assertEqual(d.architecture.latent_shape, (4, 8, 8))
        self.assertEqual(d.eval_config(method='vscc').test_snr_db,
                         [-10., -5., 0., 5., 10., 15., 20., 25.])
        self.assertEqual(len(d.sweep_grid().cells()), 21)

        f = ExperimentConfig.preset('full_scale')
        self.assertEqual(f.architecture, ArchitectureConfig.full_scale())

        with self.assertRaisesRegex(ConfigurationError, 'smoke'):
            ExperimentConfig.preset('nope')

    def test_yaml_fixed_point(self):

        c = ExperimentConfig.preset('smoke')
        fpath = os.path.join(testdir, 'exp.yml')
        text = c.to_yaml(fpath)
        back = ExperimentConfig.from_yaml(fpath)
        self.assertEqual(back, c)
        self.assertEqual(back.to_yaml(), text)
        self.assertEqual(back.fingerprint, c.fingerprint)
        self.assertEqual(ExperimentConfig.load(fpath), c)
        self.assertEqual(ExperimentConfig.load('smoke'), c)

    def test_file_errors(self):

        with self.assertRaisesRegex(ConfigurationError, 'not found'):
            ExperimentConfig.from_yaml(os.path.join(testdir, 'none.yml'))

        fpath = os.path.join(testdir, 'bad.yml')
        with open(fpath, 'w') as f:
            f.write('train: [1, 2\n')
        with self.assertRaisesRegex(ConfigurationError, 'cannot parse'):
            ExperimentConfig.from_yaml(fpath)

        with open(fpath, 'w') as f:
            yaml.safe_dump({'train': {'cmcc': 5}}, f)
        with self.assertRaisesRegex(ConfigurationError, 'train.cmcc'):
            ExperimentConfig.from_yaml(fpath)

    def test_validation(self):

        for d in [{'unknown': 1},
                  {'train': 5},
                  {'train': {'epochs': 0}},
                  {'train': {'method': 'gan'}},
                  {'eval': {'mode': 'sometimes'}},
                  {'eval': {'resample_count': 0}},
                  {'eval': {'test_snr_db': '0:10:-1'}},
                  {'dataset': {'on_error': 'ignore'}},
                  {'dataset': {'crop_size': 64}},
                  {'architecture': {'stage_widths': []}},
                  {'architecture': {'width': 3}},
                  {'sweep': {'methods': []}},
                  {'seed': 'abc'}]:
            with self.assertRaises(ConfigurationError):
                ExperimentConfig(d)

    def test_overrides(self):

        c = ExperimentConfig.preset('smoke')
        o = c.with_overrides(['train.cmc=10', 'eval.test_snr_db=0:20:10',
                              'seed=2'])
        self.assertEqual(o.train['cmc'], 10)
        self.assertEqual(o.eval_config(method='vscc').test_snr_db,
                         [0., 10., 20.])
        self.assertEqual(o.seed, 2)
        # the original is untouched
        self.assertEqual(c.train['cmc'], 5.)
        self.assertNotEqual(o.fingerprint, c.fingerprint)

        with self.assertRaisesRegex(ConfigurationError, 'train.cmcc'):
            c.with_overrides(['train.cmcc=10'])
        with self.assertRaises(ConfigurationError):
            c.with_overrides(['seed.x=1'])
        with self.assertRaises(ConfigurationError):
            c.with_overrides(['train.epochs=0'])

        self.assertIs(c.set('train', 'epochs', None), c)
        self.assertEqual(c.set('train', 'epochs', 7).train['epochs'], 7)
        self.assertEqual(c.set(None, 'output_dir', 'x').output_dir, 'x')

    def test_fingerprint(self):

        c = ExperimentConfig.preset('smoke')
        fp = c.fingerprint
        for o in ['output_dir=elsewhere', 'train.device=cuda',
                  'train.log_every=3', 'eval.batch_size=2',
                  'sweep.n_jobs=4', 'sweep.on_error=fail-fast']:
            self.assertEqual(c.with_overrides([o]).fingerprint, fp, o)
        for o in ['seed=1', 'eval.resample_count=3', 'train.epochs=3',
                  'architecture.latent_channels=3']:
            self.assertNotEqual(c.with_overrides([o]).fingerprint, fp, o)

    def test_typed_sections(self):

        c = ExperimentConfig.preset('smoke')
        t = c.train_config()
        self.assertIs(t.method, Method.VSCC)
        self.assertEqual(t.cmc, 5.)
        self.assertEqual(t.checkpoint_dir, os.path.join('vscc_smoke',
                                                        'checkpoints'))
        self.assertEqual(t.architecture.head_channels, 4)

        ae = c.with_overrides(['train.method=ae']).train_config()
        self.assertIsNone(ae.cmc)
        self.assertEqual(ae.architecture.head_channels, 2)
        t = c.train_config(method='vae', train_snr_db=15, cmc=None)
        self.assertEqual(t.cell_id, 'vae_snr15')

        self.assertEqual(c.kb_path('vscc_snr5_cmc5'),
                         os.path.join('vscc_smoke', 'kb',
                                      'vscc_snr5_cmc5.nc'))
        self.assertEqual(c.results_dir, os.path.join('vscc_smoke',
                                                     'results'))

    def test_eval_modes(self):

        c = ExperimentConfig.preset('smoke')
        self.assertIs(c.eval_config(method='ae').mode, Mode.AE_DIRECT)
        self.assertIs(c.eval_config(method='vscc', mode='transmission').mode,
                      Mode.TRANSMISSION_VARIANCE)
        # the fixed default needs a knowledge base
        with self.assertRaisesRegex(ConfigurationError, 'kb-build'):
            c.eval_config(method='vscc')
        with self.assertRaises(ConfigurationError):
            c.eval_config()

        e = c.eval_config(method='ae', resample_count=1)
        self.assertEqual(e.resample_count, 1)
        self.assertEqual(e.test_snr_db, [0., 10., np.inf])
        self.assertEqual(e.seed, 0)

        t = c.with_overrides(['eval.mode=transmission'])
        self.assertIs(t.eval_config().mode, Mode.TRANSMISSION_VARIANCE)

    def test_load_data(self):

        c = ExperimentConfig.preset('smoke')
        data = c.load_data()
        self.assertEqual(data.image_size, 16)
        self.assertEqual(len(data.train) + len(data.test), 24)
        self.assertEqual(len(data.test.classes), 1)
        data.check_architecture(c.architecture)
        self.assertEqual(c.load_data().fingerprint, data.fingerprint)
        other = c.with_overrides(['dataset.seed=5']).load_data()
        self.assertNotEqual(other.fingerprint, data.fingerprint)
