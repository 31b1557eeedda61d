"""
The additive white Gaussian noise channel.

All functions accept numpy arrays (with a ``np.random.Generator``) or torch
tensors (with a ``torch.Generator``). The torch path is differentiable: it is
the one used inside the training graph, the noise draw acting as a constant
offset per step.

Conventions
-----------
The SNR is defined against the average power of the transmitted symbols.
With power normalization on (the default), symbols are scaled to unit mean
square per transmitted block before the noise is added, so that the noise
variance is simply ``10 ** (-snr_db / 10)``. The scale is side information:
the receiver multiplies it back after the channel.
"""
import math

import numpy as np
import torch

from vscc.utils import is_tensor, randn_like, ConfigurationError


def snr_to_noise_variance(snr_db, signal_power=1.):
    """Noise variance giving the requested SNR for a given signal power.

    Parameters
    ----------
    snr_db : float
        the SNR in decibels (finite)
    signal_power : float
        the average power (mean square) of the transmitted symbols

    Returns
    -------
    the noise variance (linear power)

    Examples
    --------
    >>> snr_to_noise_variance(10)
    0.1
    """
    snr_db = float(snr_db)
    signal_power = float(signal_power)
    if not math.isfinite(signal_power) or signal_power <= 0:
        raise ValueError('signal_power must be finite and positive, '
                         'got {}'.format(signal_power))
    if not math.isfinite(snr_db):
        raise ValueError('snr_db must be finite, got {}'.format(snr_db))
    return signal_power * 10 ** (-snr_db / 10)


class ChannelConfig(object):
    """Parameters of an AWGN channel use.

    The channel has a single parameter, the noise variance, derived from
    the SNR. ``snr_db=inf`` encodes the noiseless channel.

    Attributes
    ----------
    snr_db
    noise_variance
    normalize_power
    signal_power
    seed
    """

    def __init__(self, snr_db=np.inf, normalize_power=True, seed=None,
                 signal_power=1.):
        """Instanciate.

        Parameters
        ----------
        snr_db : float
            the channel SNR in decibels. +inf for a noiseless channel.
        normalize_power : bool
            whether the symbols are scaled to unit average power before
            the noise is added (in which case ``signal_power`` is 1)
        seed : int, optional
            the seed of the noise source, when the config owns one
        signal_power : float
            the nominal signal power against which the SNR is computed
            when ``normalize_power`` is False
        """
        snr_db = float(snr_db)
        if math.isnan(snr_db) or snr_db == -np.inf:
            raise ConfigurationError('snr_db not valid: {}'.format(snr_db))
        self._snr_db = snr_db
        self._normalize_power = bool(normalize_power)
        self._signal_power = 1. if self._normalize_power else \
            float(signal_power)
        if not (self._signal_power > 0 and math.isfinite(self._signal_power)):
            raise ConfigurationError('signal_power must be finite and '
                                     'positive')
        self.seed = None if seed is None else int(seed)

    @classmethod
    def noiseless(cls, **kwargs):
        """The identity channel."""
        return cls(snr_db=np.inf, **kwargs)

    @property
    def snr_db(self):
        """Channel SNR in decibels."""
        return self._snr_db

    @property
    def normalize_power(self):
        """Whether the symbols are power normalized before the noise."""
        return self._normalize_power

    @property
    def signal_power(self):
        """The signal power the SNR refers to."""
        return self._signal_power

    @property
    def noise_variance(self):
        """Variance of the additive noise (0 for the noiseless channel)."""
        if self._snr_db == np.inf:
            return 0.
        return snr_to_noise_variance(self._snr_db, self._signal_power)

    @property
    def is_noiseless(self):
        return self.noise_variance == 0

    def to_dict(self):
        """Serializable representation (as found in config files)."""
        return dict(snr_db=self.snr_db, normalize_power=self.normalize_power,
                    seed=self.seed)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def __eq__(self, other):
        return isinstance(other, ChannelConfig) and \
            self.to_dict() == other.to_dict() and \
            self.signal_power == other.signal_power

    def __repr__(self):
        summary = ['<vscc.ChannelConfig>']
        summary += ['  snr_db: ' + str(self.snr_db)]
        summary += ['  noise_variance: ' + str(self.noise_variance)]
        summary += ['  normalize_power: ' + str(self.normalize_power)]
        return '\n'.join(summary) + '\n'


class ChannelReport(object):
    """Calibration diagnostics of a channel use."""

    def __init__(self, empirical_snr_db, symbol_count, mean_signal_power):
        if symbol_count <= 0:
            raise ValueError('symbol_count must be positive')
        if mean_signal_power < 0:
            raise ValueError('mean_signal_power must be positive')
        self.empirical_snr_db = float(empirical_snr_db)
        self.symbol_count = int(symbol_count)
        self.mean_signal_power = float(mean_signal_power)

    def __repr__(self):
        return ('<vscc.ChannelReport> empirical_snr_db={:.4f} '
                'symbol_count={} mean_signal_power={:.6g}'
                .format(self.empirical_snr_db, self.symbol_count,
                        self.mean_signal_power))


def power_normalize(symbols):
    """Scale the symbols to unit mean square.

    Parameters
    ----------
    symbols : array or tensor
        the symbols to transmit (any shape, not empty)

    Returns
    -------
    (normalized symbols, scale) where scale is the applied divisor. An
    all-zero input is returned unchanged with scale 1.

    Examples
    --------
    >>> x, s = power_normalize(np.array([2., 2., 2., 2.]))
    >>> x, s
    (array([1., 1., 1., 1.]), 2.0)
    """
    if is_tensor(symbols):
        if symbols.numel() == 0:
            raise ValueError('cannot normalize an empty array')
        power = torch.mean(symbols ** 2)
        if float(power) == 0:
            return symbols, torch.ones((), dtype=symbols.dtype,
                                       device=symbols.device)
        scale = torch.sqrt(power)
        return symbols / scale, scale

    symbols = np.asarray(symbols, dtype=np.float64)
    if symbols.size == 0:
        raise ValueError('cannot normalize an empty array')
    power = np.mean(symbols ** 2)
    if power == 0:
        return symbols, 1.
    scale = float(np.sqrt(power))
    return symbols / scale, scale


def apply_awgn(symbols, config, rng):
    """Add white Gaussian noise with the variance of the channel config.

    No power normalization happens here (see :py:func:`transmit`).

    Parameters
    ----------
    symbols : array or tensor
        the channel input
    config : ChannelConfig
        the channel
    rng : np.random.Generator or torch.Generator
        the noise source (matching the type of ``symbols``)

    Returns
    -------
    symbols + n, with n i.i.d. N(0, noise_variance). A noiseless channel
    returns a bit-exact copy of the input.
    """
    var = config.noise_variance
    if var < 0:
        raise ConfigurationError('noise variance must be positive')
    if var == 0:
        return symbols.clone() if is_tensor(symbols) else \
            np.array(symbols, copy=True)
    if not is_tensor(symbols):
        symbols = np.asarray(symbols, dtype=np.float64)
    return symbols + math.sqrt(var) * randn_like(symbols, rng)


def transmit(symbols, config, rng, return_scale=False):
    """One complete channel use: normalize, add noise, rescale.

    Parameters
    ----------
    symbols : array or tensor
        the channel input
    config : ChannelConfig
        the channel
    rng : np.random.Generator or torch.Generator
        the noise source
    return_scale : bool
        also return the normalization scale (1 when not normalizing)

    Returns
    -------
    the received symbols, in the scale of the input
    """
    scale = 1.
    if config.is_noiseless:
        # bit-exact identity, the scale round trip is not
        out = apply_awgn(symbols, config, rng)
        if return_scale:
            if config.normalize_power:
                _, scale = power_normalize(symbols)
            return out, scale
        return out
    if config.normalize_power:
        symbols, scale = power_normalize(symbols)
    out = apply_awgn(symbols, config, rng) * scale
    if return_scale:
        return out, scale
    return out


def measure_empirical_snr(clean, noisy):
    """Empirical SNR of a channel use.

    Parameters
    ----------
    clean : array or tensor
        the channel input
    noisy : array or tensor
        the channel output

    Returns
    -------
    a :py:class:`ChannelReport`. The SNR is +inf when both arrays are
    identical.
    """
    clean = np.asarray(clean.detach().cpu() if is_tensor(clean) else clean,
                       dtype=np.float64).ravel()
    noisy = np.asarray(noisy.detach().cpu() if is_tensor(noisy) else noisy,
                       dtype=np.float64).ravel()
    if clean.size != noisy.size:
        raise ValueError('clean and noisy arrays have different lengths: '
                         '{} and {}'.format(clean.size, noisy.size))
    if clean.size == 0:
        raise ValueError('cannot measure the SNR of empty arrays')

    signal = np.mean(clean ** 2)
    noise = np.mean((noisy - clean) ** 2)
    if noise == 0:
        snr = np.inf
    elif signal == 0:
        snr = -np.inf
    else:
        snr = 10 * np.log10(signal / noise)
    return ChannelReport(snr, clean.size, signal)
