"""
Some useful functions
"""
import os
import shutil
import tempfile
from collections import OrderedDict
from contextlib import contextmanager

import numpy as np
import torch
import joblib
from joblib import Memory

from vscc import cache_dir


class ConfigurationError(ValueError):
    """A configuration is invalid or incompatible with the requested job."""


class CheckpointError(IOError):
    """A checkpoint or knowledge base file cannot be used."""


class DatasetError(IOError):
    """A dataset source cannot be read."""


class TrainingDivergedError(RuntimeError):
    """The training loss stayed non-finite for too long.

    Attributes
    ----------
    snapshot : str
        path to the diagnostic checkpoint written before aborting (or None)
    """

    def __init__(self, msg, snapshot=None):
        super(TrainingDivergedError, self).__init__(msg)
        self.snapshot = snapshot


def _hash_cache_dir():
    """Get the path to the right cache directory.

    We need to make sure that cached files correspond to the same
    environment. To this end we make a unique directory hash, depending on the
    version and location of the packages which decode and crop images.

    Returns
    -------
    path to the dir
    """
    import hashlib

    out = OrderedDict(numpy_version=np.__version__)

    try:
        import PIL
        out['pillow_version'] = PIL.__version__
        out['pillow_file'] = PIL.__file__
    except ImportError:
        pass
    try:
        import vscc
        out['vscc_version'] = vscc.__version__
        out['vscc_file'] = vscc.__file__
    except (ImportError, AttributeError):
        pass

    # ok, now make a dummy str that we will hash
    strout = ''
    for k, v in out.items():
        strout += k + v
    strout = 'vscc_hash_' + hashlib.md5(strout.encode()).hexdigest()
    dirout = os.path.join(cache_dir, 'cache', strout)
    return dirout


hash_cache_dir = _hash_cache_dir()
memory = Memory(location=hash_cache_dir + '_joblib', verbose=0)


def empty_cache():
    """Empty vscc's cache directory."""

    if os.path.exists(cache_dir):
        shutil.rmtree(cache_dir)
    os.makedirs(cache_dir)


def fingerprint(*objs):
    """Deterministic content hash of any mix of arrays and python objects.

    Examples
    --------
    >>> fingerprint([1, 2]) == fingerprint([1, 2])
    True
    """
    objs = [as_numpy(o) if is_tensor(o) else o for o in objs]
    return joblib.hash(objs)


def code_version():
    """The package version, embedded in every artifact."""
    import vscc
    return vscc.__version__


def is_tensor(x):
    return isinstance(x, torch.Tensor)


def as_numpy(x):
    """Detached numpy view of a tensor (arrays pass through)."""
    if is_tensor(x):
        return x.detach().cpu().numpy()
    return np.asarray(x)


def make_rng(seed, kind='numpy'):
    """A seeded random source of the requested flavour.

    Parameters
    ----------
    seed : int
        the seed
    kind : str
        'numpy' (``np.random.Generator``) or 'torch' (``torch.Generator``)
    """
    if kind == 'numpy':
        return np.random.default_rng(seed)
    if kind == 'torch':
        return torch.Generator().manual_seed(int(seed))
    raise ValueError('rng kind not recognised: {}'.format(kind))


def randn_like(x, rng):
    """Standard normal draws with the shape (and flavour) of x.

    Tensors require a ``torch.Generator``, arrays a ``np.random.Generator``.
    Draws are made on the CPU so that a seed means the same numbers on
    every device.
    """
    if is_tensor(x):
        if not isinstance(rng, torch.Generator):
            raise ValueError('tensors need a torch.Generator as random source')
        eps = torch.randn(x.shape, generator=rng, dtype=x.dtype)
        return eps.to(x.device)
    if not isinstance(rng, np.random.Generator):
        raise ValueError('arrays need a np.random.Generator as random source')
    return rng.standard_normal(np.shape(x))


def parse_snr_range(text):
    """Parse a test SNR axis.

    Accepts 'start:stop:step' (stop inclusive), a comma separated list, or
    a list of numbers. 'inf' means the noiseless channel.

    Examples
    --------
    >>> parse_snr_range('-10:25:5')
    [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
    >>> parse_snr_range('5,inf')
    [5.0, inf]
    """
    if not isinstance(text, str):
        return [float(s) for s in np.atleast_1d(text)]
    text = text.strip()
    if ':' in text:
        start, stop, step = [float(s) for s in text.split(':')]
        if step <= 0:
            raise ValueError('SNR range step must be positive')
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [float(start + i * step) for i in range(n)]
    return [float(s) for s in text.split(',') if s.strip()]


@contextmanager
def atomic_write(fpath, mode='w'):
    """Write to a temporary file and move it in place when done.

    Concurrent readers never see a half written file.
    """
    odir = os.path.dirname(os.path.abspath(fpath))
    if not os.path.exists(odir):
        os.makedirs(odir)
    fd, tmp = tempfile.mkstemp(dir=odir, prefix='.tmp_')
    try:
        with os.fdopen(fd, mode) as f:
            yield f
        os.replace(tmp, fpath)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
