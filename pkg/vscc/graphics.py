"""
Result figures and tables.

Curves are PSNR and SSIM against the test SNR, one line per mode, CMC or
method, with the min/max spread over resamples shaded.
"""
from __future__ import division

# Builtins
import os
import logging
import warnings

# External libs
import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

from vscc.metrics import PSNR_PLOT_CAP
from vscc.sio import write_table
from vscc.utils import ConfigurationError, code_version

logger = logging.getLogger(__name__)

# line styles of the resampling modes
MODE_STYLES = {'transmission': dict(color='red', marker='o',
                                    label='transmission variance'),
               'fixed': dict(color='blue', marker='*', markersize=9,
                             label='fixed variance'),
               'ae': dict(color='black', marker='s', label='direct')}

METHOD_STYLES = {'vscc': dict(color='C3', marker='o', label='VSCC'),
                 'vae': dict(color='C0', marker='^', label='VAE'),
                 'ae': dict(color='C2', marker='s', label='AE')}

GROUP_KEYS = ['method', 'train_snr_db', 'cmc', 'mode']


def curves(df):
    """Aggregate result rows to one curve point per group and test SNR.

    Parameters
    ----------
    df : pandas.DataFrame
        result rows (see :py:data:`vscc.sio.RESULT_COLUMNS`)

    Returns
    -------
    a DataFrame with the means over images of the six statistics, for each
    (method, train_snr_db, cmc, mode, test_snr_db)
    """
    stats = ['psnr_mean', 'psnr_min', 'psnr_max',
             'ssim_mean', 'ssim_min', 'ssim_max']
    df = df.copy()
    df['cmc'] = df['cmc'].fillna(-1)
    out = df.groupby(GROUP_KEYS + ['test_snr_db'])[stats].mean()
    out = out.reset_index()
    out['cmc'] = out['cmc'].where(out['cmc'] >= 0)
    return out


def _capped(v):
    return np.minimum(np.asarray(v, dtype=float), PSNR_PLOT_CAP)


def plot_snr_curve(ax, curve, metric='psnr', shade=True, **kwargs):
    """One line with its min/max band.

    Parameters
    ----------
    ax : matplotlib.axes.Axes
        where to draw
    curve : pandas.DataFrame
        the points of one group (see :py:func:`curves`)
    metric : str
        'psnr' or 'ssim'
    shade : bool
        shade the min/max spread
    **kwargs
        passed to ``ax.plot``
    """
    # the noiseless channel has no place on the SNR axis
    curve = curve[np.isfinite(curve['test_snr_db'])]
    curve = curve.sort_values('test_snr_db')
    x = np.asarray(curve['test_snr_db'], dtype=float)
    f = _capped if metric == 'psnr' else np.asarray
    line, = ax.plot(x, f(curve[metric + '_mean']), **kwargs)
    if shade:
        ax.fill_between(x, f(curve[metric + '_min']),
                        f(curve[metric + '_max']), color=line.get_color(),
                        alpha=0.2, linewidth=0)
    return line


def _figure(title):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, m in zip(axes, ['PSNR (dB)', 'SSIM']):
        ax.set_xlabel('test SNR (dB)')
        ax.set_ylabel(m)
        ax.grid(alpha=0.3)
    fig.suptitle(title)
    return fig, axes


def _finish(fig, axes, fpath, config_fingerprint):
    axes[0].legend(loc='lower right', fontsize='small')
    footer = 'config {} | vscc {}'.format(config_fingerprint, code_version())
    fig.text(0.99, 0.01, footer, ha='right', va='bottom', fontsize=6,
             color='grey')
    fig.tight_layout(rect=(0, 0.03, 1, 0.95))
    kw = {}
    if fpath.lower().endswith('.png'):
        kw['metadata'] = {'Description': footer}
    fig.savefig(fpath, **kw)
    plt.close(fig)
    return fpath


def _draw(axes, groups):
    for curve, style in groups:
        for ax, metric in zip(axes, ['psnr', 'ssim']):
            plot_snr_curve(ax, curve, metric=metric, **style)


def _cmc_str(cmc):
    return 'none' if cmc is None or np.isnan(cmc) else '{:g}'.format(cmc)


def plot_resampling_modes(cur, train_snr_db, cmc, fpath,
                          config_fingerprint=''):
    """Transmission against fixed variance for one VSCC model."""
    sel = cur[(cur.method == 'vscc') & (cur.train_snr_db == train_snr_db) &
              (cur.cmc == cmc)]
    fig, axes = _figure('VSCC trained at {:g} dB, CMC {:g}: resampling '
                        'modes'.format(train_snr_db, cmc))
    _draw(axes, [(g, MODE_STYLES[m]) for m, g in sel.groupby('mode')])
    return _finish(fig, axes, fpath, config_fingerprint)


def plot_cmc_comparison(cur, train_snr_db, fpath, mode='fixed',
                        config_fingerprint=''):
    """One line per CMC for the VSCC models of one train SNR."""
    sel = cur[(cur.method == 'vscc') & (cur.train_snr_db == train_snr_db) &
              (cur['mode'] == mode)]
    fig, axes = _figure('VSCC trained at {:g} dB ({} variance): CMC'
                        .format(train_snr_db, mode))
    cmap = plt.get_cmap('viridis')
    cmcs = sorted(sel.cmc.unique())
    groups = []
    for i, c in enumerate(cmcs):
        color = cmap(i / max(1, len(cmcs) - 1))
        groups.append((sel[sel.cmc == c], dict(color=color, marker='o',
                                               label='CMC {:g}'.format(c))))
    _draw(axes, groups)
    return _finish(fig, axes, fpath, config_fingerprint)


def plot_method_comparison(cur, train_snr_db, fpath, mode='fixed',
                           config_fingerprint=''):
    """VSCC (best CMC), VAE and AE trained at the same SNR."""
    sel = cur[cur.train_snr_db == train_snr_db]
    fig, axes = _figure('Models trained at {:g} dB'.format(train_snr_db))
    groups = []
    for method, style in METHOD_STYLES.items():
        m = sel[sel.method == method]
        if method != 'ae':
            m = m[m['mode'] == mode]
        if len(m) == 0:
            continue
        style = dict(style)
        if method == 'vscc':
            best = m.groupby('cmc').psnr_mean.mean().idxmax()
            m = m[m.cmc == best]
            style['label'] = 'VSCC (CMC {:g})'.format(best)
        groups.append((m, style))
    _draw(axes, groups)
    return _finish(fig, axes, fpath, config_fingerprint)


def summary_table(df):
    """Mean scores per (train SNR, CMC, method, mode, test SNR)."""
    cur = curves(df)
    return cur.sort_values(['train_snr_db', 'method', 'cmc', 'mode',
                            'test_snr_db']).reset_index(drop=True)


def best_cmc_table(df, mode='fixed'):
    """The best CMC of the VSCC models per train SNR.

    Scores are taken at the test SNR equal to the train SNR (or averaged
    over all test SNRs when it was not evaluated).

    Returns
    -------
    a DataFrame with columns train_snr_db, best_cmc_psnr, psnr,
    best_cmc_ssim, ssim
    """
    cur = curves(df)
    cur = cur[(cur.method == 'vscc') & (cur['mode'] == mode)]
    rows = []
    for snr, g in cur.groupby('train_snr_db'):
        at = g[g.test_snr_db == snr]
        if len(at) == 0:
            at = g.groupby('cmc')[['psnr_mean', 'ssim_mean']].mean()
            at = at.reset_index()
        p = at.loc[at.psnr_mean.idxmax()]
        s = at.loc[at.ssim_mean.idxmax()]
        rows.append(dict(train_snr_db=snr, best_cmc_psnr=p.cmc,
                         psnr=p.psnr_mean, best_cmc_ssim=s.cmc,
                         ssim=s.ssim_mean))
    return pd.DataFrame(rows, columns=['train_snr_db', 'best_cmc_psnr', 'psnr',
                                       'best_cmc_ssim', 'ssim'])


def _stamped(table, config_fingerprint):
    """The table with the config fingerprint and code version columns."""
    table = table.copy()
    table['config_fingerprint'] = config_fingerprint
    table['code_version'] = code_version()
    return table


def report(df, output_dir, allow_mixed=False, fmt='png'):
    """Write every figure and table a results table allows.

    Parameters
    ----------
    df : pandas.DataFrame
        result rows
    output_dir : str
        where to write
    allow_mixed : bool
        accept rows produced with different experiment configs
    fmt : str
        figure file format

    Returns
    -------
    the list of written files
    """
    if len(df) == 0:
        warnings.warn('no results to report', UserWarning)
        return []
    fps = sorted(set(df.config_fingerprint.fillna('').astype(str)))
    if len(fps) > 1 and not allow_mixed:
        raise ConfigurationError('results come from {} different configs '
                                 '({}); use --allow-mixed to report them '
                                 'together'.format(len(fps), ', '.join(fps)))
    config_fp = fps[0] if len(fps) == 1 else 'mixed'
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)

    out = []
    cur = curves(df)

    fpath = os.path.join(output_dir, 'summary.csv')
    out.append(write_table(_stamped(summary_table(df), config_fp), fpath))
    for mode in ['fixed', 'transmission']:
        best = best_cmc_table(df, mode=mode)
        if len(best):
            fpath = os.path.join(output_dir, 'best_cmc_{}.csv'.format(mode))
            out.append(write_table(_stamped(best, config_fp), fpath))

    vscc = cur[cur.method == 'vscc']
    for (snr, cmc), _ in vscc.groupby(['train_snr_db', 'cmc']):
        fpath = os.path.join(output_dir, 'modes_snr{:g}_cmc{}.{}'.format(
            snr, _cmc_str(cmc), fmt))
        out.append(plot_resampling_modes(cur, snr, cmc, fpath,
                                         config_fingerprint=config_fp))
    for (snr, mode), g in vscc.groupby(['train_snr_db', 'mode']):
        if g.cmc.nunique() < 2:
            continue
        fpath = os.path.join(output_dir, 'cmc_snr{:g}_{}.{}'.format(
            snr, mode, fmt))
        out.append(plot_cmc_comparison(cur, snr, fpath, mode=mode,
                                       config_fingerprint=config_fp))
    for snr, g in cur.groupby('train_snr_db'):
        if g.method.nunique() < 2:
            continue
        mode = 'fixed' if (g['mode'] == 'fixed').any() else 'transmission'
        fpath = os.path.join(output_dir, 'methods_snr{:g}.{}'.format(
            snr, fmt))
        out.append(plot_method_comparison(cur, snr, fpath, mode=mode,
                                          config_fingerprint=config_fp))
    logger.info('report: %d files written to %s', len(out), output_dir)
    return out
