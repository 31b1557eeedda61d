from __future__ import division

import unittest
import os
import shutil
import warnings

import numpy as np
import pandas as pd
from numpy.testing import assert_allclose

from vscc import ConfigurationError
from vscc.sio import RESULT_COLUMNS
from vscc.tests import requires_matplotlib
from vscc.utils import code_version

current_dir = os.path.dirname(os.path.abspath(__file__))
testdir = os.path.join(current_dir, 'tmp')


def _rows(method, train_snr_db, cmc, mode, offset=0., fp='cfg',
          test_snrs=(-5., 5., 15., np.inf), n_images=3):
    """Synthetic result rows: the scores grow with the test SNR."""
    rows = []
    for t in test_snrs:
        for i in range(n_images):
            p = 20. + offset + (10. if np.isinf(t) else t / 2) + i
            s = min(0.99, 0.5 + p / 100)
            rows.append(dict(method=method, train_snr_db=train_snr_db,
                             cmc=cmc, mode=mode, test_snr_db=t, image=i,
                             psnr_mean=p, psnr_min=p - 1, psnr_max=p + 1,
                             ssim_mean=s, ssim_min=s - 0.01,
                             ssim_max=s + 0.01, checkpoint_fingerprint='c',
                             config_fingerprint=fp, code_version='0'))
    return rows


def _results(fp='cfg'):
    rows = []
    for cmc, offset in [(1., 0.), (5., 2.), (10., 1.)]:
        for mode in ['fixed', 'transmission']:
            rows += _rows('vscc', 5., cmc, mode, offset=offset, fp=fp)
    rows += _rows('vae', 5., np.nan, 'fixed', offset=-1., fp=fp)
    rows += _rows('ae', 5., np.nan, 'ae', offset=-3., fp=fp)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


@requires_matplotlib
class TestGraphics(unittest.TestCase):

    def setUp(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)
        os.makedirs(testdir)

    def tearDown(self):
        if os.path.exists(testdir):
            shutil.rmtree(testdir)

    def test_curves(self):

        from vscc.graphics import curves, summary_table

        df = _results()
        cur = curves(df)
        # 6 vscc groups, vae and ae, four test SNRs each
        self.assertEqual(len(cur), 8 * 4)
        self.assertTrue(cur[cur.method == 'ae'].cmc.isnull().all())
        sel = cur[(cur.method == 'vscc') & (cur.cmc == 5.) &
                  (cur['mode'] == 'fixed') & (cur.test_snr_db == 5.)]
        assert_allclose(sel.psnr_mean, 20. + 2. + 2.5 + 1.)

        s = summary_table(df)
        self.assertEqual(len(s), len(cur))
        self.assertEqual(s.train_snr_db.iloc[0], 5.)

    def test_best_cmc(self):

        from vscc.graphics import best_cmc_table

        best = best_cmc_table(_results())
        self.assertEqual(len(best), 1)
        self.assertEqual(best.best_cmc_psnr.iloc[0], 5.)
        self.assertEqual(best.best_cmc_ssim.iloc[0], 5.)
        assert_allclose(best.psnr.iloc[0], 20. + 2. + 2.5 + 1.)

        # no test point at the train SNR: the mean over the axis is used
        df = _results()
        df = df[df.test_snr_db != 5.]
        best = best_cmc_table(df, mode='transmission')
        self.assertEqual(best.best_cmc_psnr.iloc[0], 5.)

        self.assertEqual(len(best_cmc_table(_results(), mode='ae')), 0)

    def test_plot_curve(self):

        import matplotlib.pyplot as plt
        from vscc.graphics import curves, plot_snr_curve

        cur = curves(_results())
        one = cur[(cur.method == 'ae')]
        fig, ax = plt.subplots()
        line = plot_snr_curve(ax, one, metric='psnr', label='AE')
        # the noiseless point is not drawn
        np.testing.assert_array_equal(line.get_xdata(), [-5., 5., 15.])
        self.assertEqual(len(ax.collections), 1)
        line = plot_snr_curve(ax, one, metric='ssim', shade=False)
        self.assertEqual(len(ax.collections), 1)
        plt.close(fig)

    def test_report(self):

        from vscc.graphics import report

        odir = os.path.join(testdir, 'figures')
        out = report(_results(), odir)
        names = sorted(os.path.basename(f) for f in out)
        for f in out:
            self.assertTrue(os.path.exists(f))
        self.assertIn('summary.csv', names)
        self.assertIn('best_cmc_fixed.csv', names)
        self.assertIn('best_cmc_transmission.csv', names)
        self.assertIn('modes_snr5_cmc10.png', names)
        self.assertIn('cmc_snr5_fixed.png', names)
        self.assertIn('methods_snr5.png', names)
        self.assertEqual(len([n for n in names if n.startswith('modes')]), 3)

        for name in ['summary.csv', 'best_cmc_fixed.csv']:
            t = pd.read_csv(os.path.join(odir, name),
                            dtype={'config_fingerprint': str,
                                   'code_version': str})
            self.assertTrue((t.config_fingerprint == 'cfg').all())
            self.assertTrue((t.code_version == code_version()).all())
        self.assertFalse([f for f in os.listdir(odir)
                          if f.startswith('.tmp_')])

        out = report(_results(), odir, fmt='pdf')
        self.assertTrue(any(f.endswith('.pdf') for f in out))

    def test_report_errors(self):

        from vscc.graphics import report

        df = pd.concat([_results('a'), _results('b')], ignore_index=True)
        with self.assertRaisesRegex(ConfigurationError, 'allow-mixed'):
            report(df, testdir)
        self.assertTrue(len(report(df, testdir, allow_mixed=True)) > 0)

        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter('always')
            out = report(pd.DataFrame(columns=RESULT_COLUMNS), testdir)
        self.assertEqual(out, [])
        self.assertEqual(len(w), 1)
