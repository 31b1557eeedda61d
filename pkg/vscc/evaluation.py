"""
Testing trained models over a range of channel SNRs.

Three decoding modes are available:

- AE direct: the latent goes through the channel and is decoded.
- Transmission variance: the mean and the variance maps both go through the
  channel (twice the bandwidth). The receiver draws n latents from
  N(received mean, rectified received variance + channel noise variance).
- Fixed variance: only the mean map goes through the channel. The receiver
  draws n latents from N(received mean, knowledge-base variance).

For each image and test SNR the channel is used once, and the n resamples
are drawn around that same received latent. Each image is power normalized
on its own and has its own noise stream (seed, test SNR, image index), so
that scores do not depend on the evaluation batch size.
"""
from __future__ import division

import enum
import json
import logging
import warnings

import numpy as np
import pandas as pd
import xarray as xr
import torch
import torch.nn.functional as F

from vscc.channel import ChannelConfig, transmit
from vscc.coding import Method, LatentStats, reparameterize
from vscc.datasets import DatasetSplit, denormalize
from vscc.metrics import (SsimConfig, psnr_batch, ssim_batch,
                          aggregate_resamples)
from vscc.network import EncoderOutput
from vscc.sio import RESULT_COLUMNS, write_table
from vscc.utils import (ConfigurationError, make_rng, parse_snr_range,
                        code_version, fingerprint)

logger = logging.getLogger(__name__)

STATISTICS = ['psnr_mean', 'psnr_min', 'psnr_max',
              'ssim_mean', 'ssim_min', 'ssim_max']


class Mode(str, enum.Enum):
    """Decoding mode at test time."""
    AE_DIRECT = 'ae'
    TRANSMISSION_VARIANCE = 'transmission'
    FIXED_VARIANCE = 'fixed'

    def check_method(self, method):
        """Raise a ConfigurationError if the method cannot use this mode."""
        method = Method(method)
        if (self is Mode.AE_DIRECT) != (method is Method.AE):
            raise ConfigurationError('mode {} cannot be used with a {} '
                                     'checkpoint'.format(self.value,
                                                         method.value))

    @classmethod
    def default_for(cls, method):
        if Method(method) is Method.AE:
            return cls.AE_DIRECT
        return cls.FIXED_VARIANCE

    def __str__(self):
        return self.value


class EvalConfig(object):
    """Parameters of an evaluation.

    Attributes
    ----------
    mode : Mode
    test_snr_db : list of float
        the test SNR axis (inf: noiseless channel)
    resample_count : int
        number n of latent draws per image
    knowledge_base : KnowledgeBase or None
        required by the fixed-variance mode
    seed : int
    kb_granularity : str
        'map' (per-element variance) or 'scalar'
    variance_noise : bool
        whether the variance map suffers the channel noise (transmission
        mode); False sends it over a noiseless side channel
    softplus_sharpness : float
        sharpness of the variance rectification, relative to the RMS of
        the variance map
    batch_size : int
        images encoded at once (does not change the scores)
    normalize_power : bool
    ssim : SsimConfig
    """

    def __init__(self, mode=Mode.FIXED_VARIANCE, test_snr_db='-10:25:5',
                 resample_count=20, knowledge_base=None, seed=0,
                 kb_granularity='map', variance_noise=True,
                 softplus_sharpness=100., batch_size=64, normalize_power=True,
                 ssim=None):
        self.mode = Mode(mode)
        self.test_snr_db = parse_snr_range(test_snr_db)
        self.resample_count = int(resample_count)
        self.knowledge_base = knowledge_base
        self.seed = int(seed)
        self.kb_granularity = kb_granularity
        self.variance_noise = bool(variance_noise)
        self.softplus_sharpness = float(softplus_sharpness)
        self.batch_size = int(batch_size)
        self.normalize_power = bool(normalize_power)
        self.ssim = SsimConfig() if ssim is None else ssim
        self._check_input()

    def _check_input(self):
        if self.resample_count < 1:
            raise ConfigurationError('resample_count must be >= 1')
        if not self.test_snr_db:
            raise ConfigurationError('the test SNR axis is empty')
        if any(np.isnan(s) or s == -np.inf for s in self.test_snr_db):
            raise ConfigurationError('test SNRs not valid')
        if self.kb_granularity not in ['map', 'scalar']:
            raise ConfigurationError('kb_granularity must be map or scalar')
        if self.mode is Mode.FIXED_VARIANCE and self.knowledge_base is None:
            raise ConfigurationError('the fixed-variance mode needs a '
                                     'knowledge base (run `vscc kb-build`)')
        if self.batch_size < 1:
            raise ConfigurationError('batch_size must be >= 1')
        if not self.softplus_sharpness > 0:
            raise ConfigurationError('softplus_sharpness must be > 0')

    def to_dict(self):
        kb = self.knowledge_base
        return dict(mode=self.mode.value, test_snr_db=self.test_snr_db,
                    resample_count=self.resample_count, seed=self.seed,
                    kb_granularity=self.kb_granularity,
                    variance_noise=self.variance_noise,
                    softplus_sharpness=self.softplus_sharpness,
                    batch_size=self.batch_size,
                    normalize_power=self.normalize_power,
                    ssim=self.ssim.to_dict(),
                    kb_model_fingerprint=None if kb is None else
                    kb.model_fingerprint)

    @property
    def fingerprint(self):
        d = self.to_dict()
        d.pop('batch_size')
        return fingerprint(d)


class EvalResult(object):
    """Per-image scores over the test SNR axis.

    Attributes
    ----------
    ds : xarray.Dataset
        variables psnr_mean/min/max and ssim_mean/min/max with dimensions
        (test_snr_db, image); the provenance is in the attributes
    """

    def __init__(self, ds):
        for v in STATISTICS:
            if v not in ds:
                raise ValueError('results dataset misses ' + v)
        self.ds = ds

    @property
    def attrs(self):
        return self.ds.attrs

    @property
    def test_snr_db(self):
        return self.ds['test_snr_db'].values

    def aggregate(self):
        """Mean of the per-image statistics at each test SNR.

        Returns
        -------
        a DataFrame indexed by test_snr_db
        """
        df = self.ds[STATISTICS].mean(dim='image').to_dataframe()
        return df[STATISTICS]

    def to_dataframe(self):
        """One row per (test SNR, image), with the provenance columns."""
        df = self.ds[STATISTICS].to_dataframe().reset_index()
        a = self.attrs
        cmc = a.get('cmc', np.nan)
        df['method'] = a['method']
        df['train_snr_db'] = a['train_snr_db']
        df['cmc'] = cmc
        df['mode'] = a['mode']
        df['checkpoint_fingerprint'] = a['checkpoint_fingerprint']
        df['config_fingerprint'] = a['config_fingerprint']
        df['code_version'] = a['code_version']
        return df[RESULT_COLUMNS]

    def summary(self):
        """The aggregates with the provenance columns."""
        df = self.aggregate().reset_index()
        for k in ['method', 'train_snr_db', 'cmc', 'mode',
                  'checkpoint_fingerprint', 'config_fingerprint',
                  'code_version']:
            df[k] = self.attrs.get(k, np.nan)
        df['n_images'] = self.ds.sizes['image']
        return df

    def to_csv(self, fpath, summary_path=None):
        """Write the rows table (and the summary table)."""
        write_table(self.to_dataframe(), fpath)
        if summary_path is not None:
            write_table(self.summary(), summary_path)
        return fpath

    def to_netcdf(self, fpath):
        self.ds.to_netcdf(fpath)
        return fpath

    @classmethod
    def from_netcdf(cls, fpath):
        with xr.open_dataset(fpath) as ds:
            return cls(ds.load())

    def identical(self, other):
        return self.ds.identical(other.ds)

    def __repr__(self):
        summary = ['<vscc.EvalResult>']
        summary += ['  method: {}  mode: {}'.format(self.attrs['method'],
                                                    self.attrs['mode'])]
        agg = self.aggregate()
        for snr, r in agg.iterrows():
            summary += ['  test_snr_db {:>6g}: psnr {:.3f} ssim {:.4f}'
                        .format(snr, r.psnr_mean, r.ssim_mean)]
        return '\n'.join(summary) + '\n'


def rectify_variance(received, scale, sharpness=100.):
    """Smooth positive map of a received variance.

    softplus with beta = sharpness / scale, which is close to the identity
    for values of the order of ``scale`` and positive everywhere.
    """
    beta = sharpness / float(scale)
    return F.softplus(received, beta=beta)


def _score(model, y, pixels, config):
    x_hat = model.decode(y)
    cand = denormalize(x_hat)
    return psnr_batch(pixels, cand), ssim_batch(pixels, cand, config.ssim)


def _image_rng(seed, snr_index, image_index):
    """The noise stream of one image at one test SNR."""
    ss = np.random.SeedSequence([seed, snr_index, int(image_index)])
    return make_rng(int(ss.generate_state(1)[0]), kind='torch')


def _latent_draws(out, channel, config, rng, kb_variance):
    """Received latents of one image: one channel use, then the resamples."""
    mode = config.mode
    if mode is Mode.AE_DIRECT:
        return [transmit(out.latent, channel, rng)]

    mean_rx = transmit(out.stats.mean, channel, rng)
    if mode is Mode.TRANSMISSION_VARIANCE:
        var = out.stats.variance
        scale = torch.sqrt(torch.mean(var ** 2))
        var_rx = transmit(var, channel, rng) if config.variance_noise else var
        var = rectify_variance(var_rx, scale, config.softplus_sharpness) + \
            channel.noise_variance
    else:
        var = kb_variance.expand_as(mean_rx)
    return [reparameterize(mean_rx, var, rng)
            for _ in range(config.resample_count)]


def _batch_draws(model, x, indices, snr_index, channel, config, kb_variance):
    """Received latents of a batch, stacked per resample.

    Each image is its own channel use with its own noise stream, so the
    draws do not depend on the batch layout.
    """
    out = model.encode(x)
    per_image = []
    for j, idx in enumerate(indices):
        if out.stats is None:
            one = EncoderOutput(latent=out.latent[j:j + 1])
        else:
            one = EncoderOutput(stats=LatentStats(
                out.stats.mean[j:j + 1], out.stats.log_variance[j:j + 1]))
        rng = _image_rng(config.seed, snr_index, idx)
        per_image.append(_latent_draws(one, channel, config, rng,
                                       kb_variance))
    return [torch.cat(ys) for ys in zip(*per_image)]


def evaluate(checkpoint, data, config, device='cpu', config_fingerprint=''):
    """Score a trained model on test images over the test SNR axis.

    Parameters
    ----------
    checkpoint : Checkpoint
        the trained model
    data : DatasetSplit or ImageCollection
        the test images (the test split of a DatasetSplit)
    config : EvalConfig
        mode, SNR axis, resample count, knowledge base, seed
    device : str
        torch device
    config_fingerprint : str
        the experiment config fingerprint, recorded in the results

    Returns
    -------
    an :py:class:`EvalResult`
    """
    method = checkpoint.method
    config.mode.check_method(method)
    images = data.test if isinstance(data, DatasetSplit) else data
    if len(images) == 0:
        raise ConfigurationError('no test images')
    arch = checkpoint.architecture
    if tuple(images.image_shape) != (arch.image_size, arch.image_size,
                                     arch.input_channels):
        raise ConfigurationError('test images of shape {} do not match the '
                                 'checkpoint'.format(images.image_shape))

    kb_variance = None
    if config.mode is Mode.FIXED_VARIANCE:
        kb = config.knowledge_base
        if tuple(kb.shape) != tuple(arch.latent_shape):
            raise ConfigurationError('knowledge base of shape {} does not '
                                     'match the latent shape {}'
                                     .format(kb.shape, arch.latent_shape))
        if kb.model_fingerprint and \
                kb.model_fingerprint != checkpoint.fingerprint:
            warnings.warn('the knowledge base was built with another '
                          'checkpoint', RuntimeWarning)
        kb_variance = torch.as_tensor(kb.variance(config.kb_granularity),
                                      dtype=torch.float32, device=device)

    model = checkpoint.to_model(device=device)
    snrs = config.test_snr_db
    n_img = len(images)
    stats = {v: np.zeros((len(snrs), n_img)) for v in STATISTICS}

    with torch.no_grad():
        for i, snr in enumerate(snrs):
            channel = ChannelConfig(snr,
                                    normalize_power=config.normalize_power)
            for batch in images.batches(config.batch_size):
                x = batch.to_tensor(device=device)
                draws = _batch_draws(model, x, batch.indices, i, channel,
                                     config, kb_variance)
                scores = [_score(model, y, batch.pixels, config)
                          for y in draws]
                p = np.stack([s[0] for s in scores])
                s = np.stack([s[1] for s in scores])
                for j, idx in enumerate(batch.indices):
                    pm = aggregate_resamples(p[:, j])
                    sm = aggregate_resamples(s[:, j])
                    for v, val in zip(STATISTICS, pm + sm):
                        stats[v][i, idx] = val
            logger.info('%s/%s test_snr_db=%g psnr=%.4f ssim=%.4f',
                        method.value, config.mode.value, snr,
                        np.mean(stats['psnr_mean'][i]),
                        np.mean(stats['ssim_mean'][i]))

    ds = xr.Dataset({v: (('test_snr_db', 'image'), stats[v])
                     for v in STATISTICS},
                    coords={'test_snr_db': np.asarray(snrs, dtype=float),
                            'image': np.arange(n_img)})
    ds['label'] = ('image', images.labels.astype(str))
    md = checkpoint.metadata
    transmit_variance = config.mode is Mode.TRANSMISSION_VARIANCE
    cmc = md.get('cmc', None)
    ds.attrs = dict(
        method=method.value, mode=config.mode.value,
        train_snr_db=float(md.get('snr_db', np.nan)),
        cmc=np.nan if cmc is None else float(cmc),
        checkpoint_fingerprint=checkpoint.fingerprint,
        config_fingerprint=config_fingerprint,
        eval_config=json.dumps(config.to_dict(), sort_keys=True),
        eval_fingerprint=config.fingerprint,
        code_version=code_version(),
        resample_count=config.resample_count, seed=config.seed,
        symbols_per_image=arch.symbols_per_image(transmit_variance),
        bandwidth_ratio=arch.bandwidth_ratio(transmit_variance))
    return EvalResult(ds)


def results_table(results):
    """Concatenate the row tables of several results."""
    if not results:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    return pd.concat([r.to_dataframe() for r in results], ignore_index=True)
