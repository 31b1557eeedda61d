"""
The variational loss family: VSCC, VAE and AE objectives.

The VSCC objective replaces the standard normal prior of the VAE with the
channel-matched prior N(0, noise_variance + cmc), where ``cmc`` is the
channel matching coefficient. The channel output of a Gaussian encoder
N(mu, sigma**2) being N(mu, sigma**2 + noise_variance), the channel
matching term is a closed-form KL divergence between two Gaussians.

All terms are means over elements (and over the batch), so that the
coefficients do not depend on image or latent resolution.
"""
import enum
import math

import numpy as np
import torch

from vscc.utils import is_tensor, randn_like, ConfigurationError


class Method(str, enum.Enum):
    """Training method of a model."""
    VSCC = 'vscc'
    VAE = 'vae'
    AE = 'ae'

    @property
    def emits_variance(self):
        """Whether the encoder of this method emits a variance map."""
        return self is not Method.AE

    def __str__(self):
        return self.value


def _as_tensor(x, like=None):
    if is_tensor(x):
        return x
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _check_same_shape(a, b, what):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError('shape mismatch between {}: {} and {}'
                         .format(what, tuple(a.shape), tuple(b.shape)))


class LatentStats(object):
    """Per-element Gaussian statistics of the encoded vector.

    Attributes
    ----------
    mean : tensor
        the mean map ([k, h, w] or batched [N, k, h, w])
    log_variance : tensor
        the log-variance map, same shape
    """

    def __init__(self, mean, log_variance):
        mean = _as_tensor(mean)
        log_variance = _as_tensor(log_variance, like=mean)
        _check_same_shape(mean, log_variance, 'mean and log_variance')
        self.mean = mean
        self.log_variance = log_variance

    @classmethod
    def from_variance(cls, mean, variance):
        """Build from a variance map (must be strictly positive)."""
        variance = _as_tensor(variance, like=_as_tensor(mean))
        if bool((variance <= 0).any()):
            raise ValueError('variance must be strictly positive')
        return cls(mean, torch.log(variance))

    @property
    def variance(self):
        return torch.exp(self.log_variance)

    @property
    def shape(self):
        return tuple(self.mean.shape)

    def detach(self):
        return LatentStats(self.mean.detach(), self.log_variance.detach())

    def __repr__(self):
        return '<vscc.LatentStats> shape: {}'.format(self.shape)


class LossConfig(object):
    """Parameters of the training objective.

    Attributes
    ----------
    method : Method
        VSCC, VAE or AE
    cmc : float
        the channel matching coefficient (VSCC only)
    reconstruction_weight : float
        scale of the reconstruction term (the likelihood scale)
    noise_variance : float
        the channel noise variance at train time (VSCC only)
    """

    def __init__(self, method=Method.VSCC, cmc=1., reconstruction_weight=1.,
                 noise_variance=0.):
        self.method = Method(method)
        self.cmc = float(cmc)
        self.reconstruction_weight = float(reconstruction_weight)
        self.noise_variance = float(noise_variance)
        if not self.cmc > 0:
            raise ConfigurationError('cmc must be positive')
        if not self.reconstruction_weight > 0:
            raise ConfigurationError('reconstruction_weight must be positive')
        if not self.noise_variance >= 0:
            raise ConfigurationError('noise_variance must be positive')

    def to_dict(self):
        return dict(method=self.method.value, cmc=self.cmc,
                    reconstruction_weight=self.reconstruction_weight,
                    noise_variance=self.noise_variance)

    def __repr__(self):
        return '<vscc.LossConfig> ' + ' '.join('{}={}'.format(k, v) for k, v
                                              in self.to_dict().items())


class LossBreakdown(object):
    """The terms of an objective.

    ``total`` keeps its autograd graph: call ``total.backward()``.
    """

    def __init__(self, total, channel_matching_term, reconstruction_term):
        self.total = total
        self.channel_matching_term = channel_matching_term
        self.reconstruction_term = reconstruction_term

    def to_dict(self):
        """Plain floats, for logging and histories."""
        return dict(total=float(self.total),
                    channel_matching_term=float(self.channel_matching_term),
                    reconstruction_term=float(self.reconstruction_term))

    def is_finite(self):
        return all(math.isfinite(v) for v in self.to_dict().values())

    def __repr__(self):
        return '<vscc.LossBreakdown> ' + ' '.join(
            '{}={:.6g}'.format(k, v) for k, v in self.to_dict().items())


def gaussian_kl_channel_matched(stats, noise_variance, cmc):
    """Mean KL( N(mu, s1 + s2) || N(0, s2 + d) ) over the latent elements.

    Parameters
    ----------
    stats : LatentStats
        encoder statistics (mu, log s1)
    noise_variance : float
        the channel noise variance s2
    cmc : float
        the channel matching coefficient d

    Returns
    -------
    a scalar tensor
    """
    if not noise_variance >= 0:
        raise ValueError('noise_variance must be positive')
    if not cmc > 0:
        raise ValueError('cmc must be strictly positive')
    mu, logvar = stats.mean, stats.log_variance
    _check_same_shape(mu, logvar, 'mean and log_variance')

    prior_var = noise_variance + cmc
    # log(s1 + s2), exact when s2 == 0
    log_post_var = torch.logaddexp(
        logvar, torch.full_like(logvar, math.log(noise_variance)
                                if noise_variance > 0 else -math.inf))
    kl = 0.5 * (math.log(prior_var) - log_post_var +
                (mu ** 2 + torch.exp(logvar) + noise_variance) / prior_var -
                1)
    return kl.mean()


def standard_normal_kl(stats):
    """Mean KL( N(mu, s) || N(0, 1) ) over the latent elements."""
    mu, logvar = stats.mean, stats.log_variance
    return (0.5 * (-logvar + torch.exp(logvar) + mu ** 2 - 1)).mean()


def reparameterize(center, variance, rng):
    """Draw center + sqrt(variance) * eps, eps ~ N(0, 1).

    Gradients flow to ``center`` and ``variance`` (torch path).

    Parameters
    ----------
    center : array or tensor
        the mean of the draws
    variance : array, tensor or float
        the variance (broadcastable to center, >= 0)
    rng : np.random.Generator or torch.Generator
        the random source, matching the type of ``center``
    """
    if is_tensor(center):
        variance = _as_tensor(variance, like=center)
        if bool((variance < 0).any()):
            raise ValueError('variance must be positive')
        eps = randn_like(center, rng)
        return center + torch.sqrt(variance) * eps

    center = np.asarray(center, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance < 0):
        raise ValueError('variance must be positive')
    return center + np.sqrt(variance) * randn_like(center, rng)


def reconstruction_nll(original, reconstructed):
    """Reconstruction term: the mean squared error.

    A fixed-variance Gaussian likelihood up to an additive constant.
    """
    original = _as_tensor(original)
    reconstructed = _as_tensor(reconstructed, like=original)
    _check_same_shape(original, reconstructed, 'original and reconstructed')
    return torch.mean((original - reconstructed) ** 2)


def _check_method(config, method):
    if config.method is not method:
        raise ConfigurationError('loss config is for method {}, not {}'
                                 .format(config.method, method))


def vscc_loss(original, reconstructed, stats, config):
    """The VSCC objective: channel matching term + reconstruction term.

    Parameters
    ----------
    original : tensor
        the normalized input images
    reconstructed : tensor
        the decoder output for a single latent draw
    stats : LatentStats
        the encoder statistics
    config : LossConfig
        method must be VSCC

    Returns
    -------
    a :py:class:`LossBreakdown`
    """
    _check_method(config, Method.VSCC)
    kl = gaussian_kl_channel_matched(stats, config.noise_variance, config.cmc)
    rec = reconstruction_nll(original, reconstructed)
    return LossBreakdown(config.reconstruction_weight * rec + kl, kl, rec)


def vae_loss(original, reconstructed, stats, config):
    """The VAE objective: KL to a standard normal + reconstruction term."""
    _check_method(config, Method.VAE)
    kl = standard_normal_kl(stats)
    rec = reconstruction_nll(original, reconstructed)
    return LossBreakdown(config.reconstruction_weight * rec + kl, kl, rec)


def ae_loss(original, reconstructed):
    """The AE objective: the mean squared error alone."""
    rec = reconstruction_nll(original, reconstructed)
    return LossBreakdown(rec, torch.zeros_like(rec), rec)


def vib_loss(original, reconstructed, stats, beta):
    """Variational information bottleneck objective.

    reconstruction + beta * KL(N(mu, s) || N(0, 1)). beta controls the
    compression multiplicatively, where the channel matching coefficient
    of VSCC acts additively on the prior variance.
    """
    if not beta >= 0:
        raise ValueError('beta must be positive')
    kl = standard_normal_kl(stats)
    rec = reconstruction_nll(original, reconstructed)
    return LossBreakdown(rec + beta * kl, beta * kl, rec)


def compute_loss(original, reconstructed, stats, config):
    """Dispatch to the objective of ``config.method``."""
    if config.method is Method.VSCC:
        return vscc_loss(original, reconstructed, stats, config)
    if config.method is Method.VAE:
        return vae_loss(original, reconstructed, stats, config)
    return ae_loss(original, reconstructed)
