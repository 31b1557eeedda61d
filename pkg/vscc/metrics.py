"""
Image quality metrics, computed on 8-bit pixel values (L = 255).
"""
from __future__ import division

import math

import numpy as np
from scipy import ndimage

from vscc.utils import ConfigurationError

# PSNR values above this are drawn at this value (identical images are +inf)
PSNR_PLOT_CAP = 100.


class SsimConfig(object):
    """Parameters of the structural similarity index.

    The index is the mean over sliding windows of l**alpha * c**beta *
    s**gamma with luminance l, contrast c and structure s::

        l = (2 mx my + c1) / (mx**2 + my**2 + c1)
        c = (2 sx sy + c2) / (sx**2 + sy**2 + c2)
        s = (sxy + c3) / (sx sy + c3)

    where the local statistics are weighted by a Gaussian window.

    Attributes
    ----------
    alpha, beta, gamma : float
        exponents of the three components
    c1, c2, c3 : float
        stabilizers (default (0.01 L)**2, (0.03 L)**2 and c2 / 2)
    window_size : int
        side of the (odd) Gaussian window
    gaussian_sigma : float
        standard deviation of the window, in pixels
    dynamic_range : float
        L, the value range of the pixels
    """

    def __init__(self, alpha=1., beta=1., gamma=1., c1=None, c2=None, c3=None,
                 window_size=11, gaussian_sigma=1.5, dynamic_range=255.):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.gamma = float(gamma)
        self.dynamic_range = float(dynamic_range)
        if not self.dynamic_range > 0:
            raise ConfigurationError('dynamic_range must be positive')
        self.c1 = (0.01 * self.dynamic_range) ** 2 if c1 is None else float(c1)
        self.c2 = (0.03 * self.dynamic_range) ** 2 if c2 is None else float(c2)
        self.c3 = self.c2 / 2 if c3 is None else float(c3)
        self.window_size = int(window_size)
        self.gaussian_sigma = float(gaussian_sigma)
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ConfigurationError('SSIM stabilizers must be positive')
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ConfigurationError('window_size must be odd and positive')
        if not self.gaussian_sigma > 0:
            raise ConfigurationError('gaussian_sigma must be positive')

    @property
    def window(self):
        """The normalized 1D Gaussian weights (the 2D window is separable)."""
        r = self.window_size // 2
        x = np.arange(-r, r + 1, dtype=np.float64)
        w = np.exp(-0.5 * (x / self.gaussian_sigma) ** 2)
        return w / w.sum()

    def to_dict(self):
        return dict(alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                    c1=self.c1, c2=self.c2, c3=self.c3,
                    window_size=self.window_size,
                    gaussian_sigma=self.gaussian_sigma,
                    dynamic_range=self.dynamic_range)


def _check_pair(reference, candidate):
    reference = np.asarray(reference, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if reference.shape != candidate.shape:
        raise ValueError('shape mismatch: {} and {}'.format(reference.shape,
                                                            candidate.shape))
    if reference.size == 0:
        raise ValueError('empty images')
    return reference, candidate


def psnr(reference, candidate, data_range=255.):
    """Peak signal-to-noise ratio 10 log10(L**2 / MSE), in decibels.

    Identical images give +inf.

    Examples
    --------
    >>> x = np.zeros((4, 4), dtype=np.uint8)
    >>> psnr(x, x)
    inf
    """
    if not data_range > 0:
        raise ValueError('data_range must be positive')
    reference, candidate = _check_pair(reference, candidate)
    mse = np.mean((reference - candidate) ** 2)
    if mse == 0:
        return np.inf
    return float(10 * np.log10(data_range ** 2 / mse))


def psnr_batch(reference, candidate, data_range=255.):
    """PSNR of each image of two [N, ...] stacks."""
    reference, candidate = _check_pair(reference, candidate)
    mse = np.mean((reference - candidate) ** 2,
                  axis=tuple(range(1, reference.ndim)))
    with np.errstate(divide='ignore'):
        return 10 * np.log10(data_range ** 2 / mse)


def _pow(v, e):
    if e == 1:
        return v
    return np.sign(v) * np.abs(v) ** e


def _ssim_map(x, y, config, spatial_axes):
    """Valid-window SSIM values of two float arrays."""
    w = config.window
    r = config.window_size // 2
    for ax in spatial_axes:
        if x.shape[ax] < config.window_size:
            raise ValueError('images ({}) smaller than the SSIM window ({})'
                             .format(x.shape, config.window_size))

    def filt(a):
        for ax in spatial_axes:
            a = ndimage.correlate1d(a, w, axis=ax, mode='reflect')
        sl = [slice(None)] * a.ndim
        for ax in spatial_axes:
            sl[ax] = slice(r, a.shape[ax] - r)
        return a[tuple(sl)]

    mx, my = filt(x), filt(y)
    vx = np.clip(filt(x * x) - mx ** 2, 0, None)
    vy = np.clip(filt(y * y) - my ** 2, 0, None)
    cxy = filt(x * y) - mx * my
    sx, sy = np.sqrt(vx), np.sqrt(vy)

    c1, c2, c3 = config.c1, config.c2, config.c3
    lum = (2 * mx * my + c1) / (mx ** 2 + my ** 2 + c1)
    con = (2 * sx * sy + c2) / (vx + vy + c2)
    struct = (cxy + c3) / (sx * sy + c3)
    return _pow(lum, config.alpha) * _pow(con, config.beta) * \
        _pow(struct, config.gamma)


def ssim(reference, candidate, config=None):
    """Structural similarity of two images.

    Parameters
    ----------
    reference : array
        [H, W] or [H, W, C] pixels
    candidate : array
        same shape
    config : SsimConfig, optional
        the parameters (default: :py:class:`SsimConfig()`)

    Returns
    -------
    the mean SSIM over all valid windows (averaged over the channels)
    """
    config = SsimConfig() if config is None else config
    reference, candidate = _check_pair(reference, candidate)
    if reference.ndim not in [2, 3]:
        raise ValueError('ssim needs [H, W] or [H, W, C] images')
    return float(np.mean(_ssim_map(reference, candidate, config, (0, 1))))


def ssim_batch(reference, candidate, config=None):
    """SSIM of each image of two [N, H, W, C] stacks."""
    config = SsimConfig() if config is None else config
    reference, candidate = _check_pair(reference, candidate)
    if reference.ndim != 4:
        raise ValueError('ssim_batch needs [N, H, W, C] stacks')
    m = _ssim_map(reference, candidate, config, (1, 2))
    return m.reshape(m.shape[0], -1).mean(axis=1)


def aggregate_resamples(scores):
    """(mean, min, max) of a list of scores.

    Examples
    --------
    >>> aggregate_resamples([1, 2, 3])
    (2.0, 1.0, 3.0)
    """
    scores = [float(s) for s in np.asarray(scores, dtype=np.float64).ravel()]
    if len(scores) == 0:
        raise ValueError('cannot aggregate an empty list of scores')
    lo, hi = min(scores), max(scores)
    # rounding of the division must not leave [min, max]
    mean = min(max(math.fsum(scores) / len(scores), lo), hi)
    return mean, lo, hi
