"""
Image corpora, class-disjoint splits and the knowledge-base variance.

Images are kept as 8-bit arrays [N, H, W, C] and normalized on demand to
real arrays [N, C, H, W] in [-1, 1] (the range of the decoder's Tanh).
"""
from __future__ import division

# Builtins
import os
import logging
import warnings

# External libs
import numpy as np
import pandas as pd
import xarray as xr
import torch

# Locals
from vscc import lazy_property
from vscc.coding import Method
from vscc.utils import (memory, fingerprint, ConfigurationError, DatasetError,
                        code_version)

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.gif', '.tif', '.tiff',
                    '.webp')

KB_FORMAT_VERSION = 1


def normalize(pixels):
    """Map 8-bit pixels to [-1, 1]: x / 127.5 - 1.

    [N, H, W, C] stacks are returned as [N, C, H, W], single [H, W, C]
    images as [C, H, W]. Other shapes are kept.

    Examples
    --------
    >>> normalize(np.array([0, 255]))
    array([-1.,  1.], dtype=float32)
    """
    pixels = np.asarray(pixels)
    if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
        raise ValueError('pixels must be in 0..255')
    out = (pixels.astype(np.float32) / np.float32(127.5)) - np.float32(1)
    if out.ndim == 4:
        out = out.transpose(0, 3, 1, 2)
    elif out.ndim == 3:
        out = out.transpose(2, 0, 1)
    return np.ascontiguousarray(out)


def denormalize(x):
    """Inverse of :py:func:`normalize`, with clamping and rounding.

    Accepts arrays or tensors; returns uint8 arrays in the [.., H, W, C]
    layout.

    Examples
    --------
    >>> denormalize(np.array([-1., 1.5]))
    array([  0, 255], dtype=uint8)
    """
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    x = np.asarray(x, dtype=np.float64)
    out = np.round(np.clip(x, -1, 1) * 127.5 + 127.5)
    out = np.clip(out, 0, 255).astype(np.uint8)
    if out.ndim == 4:
        out = out.transpose(0, 2, 3, 1)
    elif out.ndim == 3:
        out = out.transpose(1, 2, 0)
    return np.ascontiguousarray(out)


class ImageBatch(object):
    """A stack of images, raw and normalized.

    Attributes
    ----------
    pixels : np.ndarray
        uint8 [N, H, W, C]
    normalized : np.ndarray
        float32 [N, C, H, W] in [-1, 1]
    """

    def __init__(self, pixels, indices=None):
        pixels = np.asarray(pixels)
        if pixels.ndim == 3:
            pixels = pixels[np.newaxis, ...]
        if pixels.ndim != 4 or pixels.shape[0] < 1:
            raise ValueError('ImageBatch needs [N, H, W, C] pixels with '
                             'N >= 1, got shape {}'.format(pixels.shape))
        if pixels.dtype != np.uint8:
            raise ValueError('pixels must be uint8')
        self.pixels = pixels
        self.indices = indices

    @lazy_property
    def normalized(self):
        return normalize(self.pixels)

    def to_tensor(self, device='cpu', dtype=torch.float32):
        """The normalized images as a tensor."""
        return torch.from_numpy(self.normalized).to(device=device,
                                                    dtype=dtype)

    def __len__(self):
        return self.pixels.shape[0]


class ImageCollection(object):
    """A labelled set of equally sized 8-bit images.

    Attributes
    ----------
    pixels : np.ndarray
        uint8 [N, H, W, C]
    labels : np.ndarray
        the class label of each image (str)
    paths : list of str, optional
        where the images were read from
    """

    def __init__(self, pixels, labels, paths=None):
        pixels = np.asarray(pixels)
        labels = np.asarray([str(l) for l in labels])
        if pixels.ndim != 4 or pixels.dtype != np.uint8:
            raise ValueError('pixels must be uint8 [N, H, W, C]')
        if len(labels) != pixels.shape[0]:
            raise ValueError('one label per image is needed')
        if paths is not None and len(paths) != len(labels):
            raise ValueError('one path per image is needed')
        self.pixels = pixels
        self.labels = labels
        self.paths = None if paths is None else list(paths)

    def __len__(self):
        return self.pixels.shape[0]

    @property
    def image_shape(self):
        """(H, W, C)"""
        return self.pixels.shape[1:]

    @property
    def classes(self):
        return sorted(set(self.labels))

    @lazy_property
    def fingerprint(self):
        """Content hash of the pixels and the labels."""
        return fingerprint(self.pixels, self.labels.tolist())

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        paths = None if self.paths is None else \
            [self.paths[i] for i in indices]
        return ImageCollection(self.pixels[indices], self.labels[indices],
                               paths=paths)

    def select_classes(self, classes):
        """The images whose label is in ``classes``."""
        return self.subset(np.nonzero(np.isin(self.labels,
                                              list(classes)))[0])

    def batches(self, batch_size, shuffle=False, rng=None, drop_last=False):
        """Iterate over :py:class:`ImageBatch` objects.

        Parameters
        ----------
        batch_size : int
            number of images per batch
        shuffle : bool
            permute the images first (with ``rng``)
        rng : np.random.Generator
            the permutation source (required when shuffling)
        drop_last : bool
            skip the last incomplete batch
        """
        if batch_size < 1:
            raise ValueError('batch_size must be positive')
        order = np.arange(len(self))
        if shuffle:
            if rng is None:
                raise ValueError('shuffling needs a random source')
            order = rng.permutation(order)
        for start in range(0, len(order), batch_size):
            idx = order[start:start+batch_size]
            if drop_last and len(idx) < batch_size:
                break
            yield ImageBatch(self.pixels[idx], indices=idx)

    def __repr__(self):
        return ('<vscc.ImageCollection> {} images of shape {}, {} classes'
                .format(len(self), self.image_shape, len(self.classes)))


class DatasetSplit(object):
    """Class-disjoint train and test collections.

    Attributes
    ----------
    train : ImageCollection
    test : ImageCollection
    fingerprint : str
    """

    def __init__(self, train, test):
        overlap = set(train.labels) & set(test.labels)
        if overlap:
            raise DatasetError('train and test splits share classes: '
                               '{}'.format(sorted(overlap)))
        if len(train) and len(test) and \
                train.image_shape != test.image_shape:
            raise DatasetError('train and test images differ in shape')
        self.train = train
        self.test = test

    @classmethod
    def from_arrays(cls, train_pixels, train_labels, test_pixels,
                    test_labels):
        return cls(ImageCollection(train_pixels, train_labels),
                   ImageCollection(test_pixels, test_labels))

    @classmethod
    def from_collection(cls, collection, n_test_classes=None,
                        test_fraction=0.2, seed=0):
        """Split a collection by class.

        The test classes are drawn with ``seed`` among the sorted class
        names: ``n_test_classes`` of them, or a ``test_fraction`` share.
        """
        test_classes = _pick_test_classes(collection.classes,
                                          n_test_classes=n_test_classes,
                                          test_fraction=test_fraction,
                                          seed=seed)
        train_classes = set(collection.classes) - set(test_classes)
        return cls(collection.select_classes(train_classes),
                   collection.select_classes(test_classes))

    @lazy_property
    def fingerprint(self):
        return fingerprint(self.train.fingerprint, self.test.fingerprint)

    @property
    def image_size(self):
        return self.train.image_shape[0]

    def check_architecture(self, architecture):
        """Raise a ConfigurationError when the images do not fit."""
        h, w, c = self.train.image_shape
        if (h, w, c) != (architecture.image_size, architecture.image_size,
                         architecture.input_channels):
            raise ConfigurationError('dataset images of shape {} do not match '
                                     'the architecture ({size}x{size}x{c})'
                                     .format((h, w, c),
                                             size=architecture.image_size,
                                             c=architecture.input_channels))

    def __repr__(self):
        summary = ['<vscc.DatasetSplit>']
        summary += ['  train: {} images, {} classes'.format(
            len(self.train), len(self.train.classes))]
        summary += ['  test: {} images, {} classes'.format(
            len(self.test), len(self.test.classes))]
        summary += ['  fingerprint: ' + self.fingerprint]
        return '\n'.join(summary) + '\n'


def _pick_test_classes(classes, n_test_classes=None, test_fraction=0.2,
                       seed=0):
    classes = sorted(classes)
    if len(classes) < 2:
        raise DatasetError('at least two classes are needed for a '
                           'class-disjoint split')
    if n_test_classes is None:
        n_test_classes = int(round(test_fraction * len(classes)))
    n_test_classes = int(np.clip(n_test_classes, 1, len(classes) - 1))
    rng = np.random.default_rng(seed)
    picked = rng.permutation(len(classes))[:n_test_classes]
    return [classes[i] for i in sorted(picked)]


def read_image(fpath, crop_size, resize='smaller'):
    """Decode an image file and center-crop it to [crop, crop, 3].

    Parameters
    ----------
    fpath : str
        path to the file
    crop_size : int
        side of the square crop
    resize : str
        'smaller' resizes the shorter side to ``crop_size`` only when it is
        smaller, 'always' always does, 'never' requires big enough images
    """
    from PIL import Image

    with Image.open(fpath) as img:
        img = img.convert('RGB')
        w, h = img.size
        short = min(w, h)
        if resize == 'always' or (resize == 'smaller' and short < crop_size):
            f = crop_size / short
            nw, nh = max(crop_size, int(round(w * f))), \
                max(crop_size, int(round(h * f)))
            img = img.resize((nw, nh), Image.BICUBIC)
        elif resize not in ['smaller', 'always', 'never']:
            raise ValueError('resize policy not recognised: {}'.format(resize))
        w, h = img.size
        if min(w, h) < crop_size:
            raise ValueError('image of size {}x{} smaller than the crop'
                             .format(w, h))
        left = (w - crop_size) // 2
        top = (h - crop_size) // 2
        img = img.crop((left, top, left + crop_size, top + crop_size))
        return np.asarray(img, dtype=np.uint8)


@memory.cache
def _read_images(paths, mtimes, crop_size, resize):
    """Decode many files at once. Cached on paths, mtimes and crop."""

    out = np.zeros((len(paths), crop_size, crop_size, 3), dtype=np.uint8)
    ok = np.zeros(len(paths), dtype=bool)
    errors = []
    for i, p in enumerate(paths):
        try:
            out[i] = read_image(p, crop_size, resize=resize)
            ok[i] = True
        except Exception as e:
            errors.append((p, '{}: {}'.format(type(e).__name__, e)))
    return out, ok, errors


def build_manifest(root, n_test_classes=None, test_fraction=0.2, seed=0,
                   extensions=IMAGE_EXTENSIONS, max_per_class=None):
    """List a ``root/<class>/<image>`` tree and assign class-disjoint splits.

    Returns
    -------
    a pandas DataFrame with columns path (absolute), label, split
    """
    if not os.path.isdir(root):
        raise DatasetError('dataset root not readable: {}'.format(root))
    rows = []
    classes = sorted(d for d in os.listdir(root)
                     if os.path.isdir(os.path.join(root, d)))
    for c in classes:
        cdir = os.path.join(root, c)
        files = sorted(f for f in os.listdir(cdir)
                       if f.lower().endswith(tuple(extensions)))
        if len(files) == 0:
            raise DatasetError('empty class: {}'.format(cdir))
        if max_per_class is not None:
            files = files[:max_per_class]
        rows += [(os.path.abspath(os.path.join(cdir, f)), c) for f in files]
    if not rows:
        raise DatasetError('no images found under {}'.format(root))
    df = pd.DataFrame(rows, columns=['path', 'label'])
    test_classes = _pick_test_classes(classes, n_test_classes=n_test_classes,
                                      test_fraction=test_fraction, seed=seed)
    df['split'] = np.where(df.label.isin(test_classes), 'test', 'train')
    return df


def write_manifest(df, fpath):
    """Write a manifest, paths relative to the manifest's directory."""
    from vscc.utils import atomic_write

    odir = os.path.dirname(os.path.abspath(fpath))
    df = df.copy()
    df['path'] = [os.path.relpath(p, odir) for p in df.path]
    with atomic_write(fpath) as f:
        df[['path', 'label', 'split']].to_csv(f, index=False)


def read_manifest(fpath):
    """Read a manifest written by :py:func:`write_manifest`."""
    if not os.path.exists(fpath):
        raise DatasetError('manifest not found: {}'.format(fpath))
    df = pd.read_csv(fpath, dtype={'label': str, 'split': str})
    missing = {'path', 'label', 'split'} - set(df.columns)
    if missing:
        raise DatasetError('manifest misses columns: {}'
                           .format(sorted(missing)))
    bad = set(df.split) - {'train', 'test'}
    if bad:
        raise DatasetError('unknown split names in manifest: {}'
                           .format(sorted(bad)))
    idir = os.path.dirname(os.path.abspath(fpath))
    df['path'] = [p if os.path.isabs(p) else os.path.normpath(
        os.path.join(idir, p)) for p in df.path]
    return df


def _collection_from_manifest(df, crop_size, resize, on_error):
    paths = df.path.tolist()
    mtimes = []
    for p in paths:
        try:
            mtimes.append(os.path.getmtime(p))
        except OSError:
            mtimes.append(None)
    pixels, ok, errors = _read_images(paths, mtimes, crop_size, resize)
    if errors:
        if on_error == 'fail':
            p, msg = errors[0]
            raise DatasetError('cannot read image {} ({}), {} unreadable '
                               'file(s) in total'.format(p, msg, len(errors)))
        for p, msg in errors:
            warnings.warn('skipping unreadable image {} ({})'.format(p, msg),
                          RuntimeWarning)
    labels = df.label.to_numpy()
    out = ImageCollection(pixels[ok], labels[ok],
                          paths=[p for p, o in zip(paths, ok) if o])
    for c in set(labels):
        if c not in set(out.labels):
            raise DatasetError('empty class after reading: {}'.format(c))
    return out


def load_dataset(source, crop_size=32, n_test_classes=None, test_fraction=0.2,
                 seed=0, on_error='fail', resize='smaller',
                 max_per_class=None):
    """Read a labelled image corpus and split it by class.

    Parameters
    ----------
    source : str
        a manifest file (.csv, columns path/label/split), or the root of a
        ``root/<class>/<image>`` tree split with ``n_test_classes`` or
        ``test_fraction`` and ``seed``
    crop_size : int
        side of the square center crop
    n_test_classes : int, optional
        number of test classes (directory sources)
    test_fraction : float
        share of test classes, when ``n_test_classes`` is not given
    seed : int
        the seed of the class split (directory sources)
    on_error : str
        'fail' raises a DatasetError on the first unreadable image, 'skip'
        warns and drops it
    resize : str
        see :py:func:`read_image`
    max_per_class : int, optional
        cap the number of images read per class (directory sources)

    Returns
    -------
    a :py:class:`DatasetSplit`
    """
    if on_error not in ['fail', 'skip']:
        raise ConfigurationError('on_error must be fail or skip')
    source = os.path.expanduser(str(source))
    if os.path.isfile(source):
        df = read_manifest(source)
    elif os.path.isdir(source):
        df = build_manifest(source, n_test_classes=n_test_classes,
                            test_fraction=test_fraction, seed=seed,
                            max_per_class=max_per_class)
    else:
        raise DatasetError('dataset source not readable: {}'.format(source))

    train = _collection_from_manifest(df.loc[df.split == 'train'], crop_size,
                                      resize, on_error)
    test = _collection_from_manifest(df.loc[df.split == 'test'], crop_size,
                                     resize, on_error)
    out = DatasetSplit(train, test)
    logger.info('dataset %s: %d train / %d test images, fingerprint %s',
                source, len(train), len(test), out.fingerprint)
    return out


def make_synthetic_corpus(n_classes=10, images_per_class=20, image_size=32,
                          seed=0):
    """A deterministic labelled corpus of small textured images.

    Each class has its own grating orientation, frequency and colour; the
    images of a class differ by phase, blob position and pixel noise.

    Returns
    -------
    an :py:class:`ImageCollection` (labels 'class_00', 'class_01', ...)
    """
    if n_classes < 1 or images_per_class < 1 or image_size < 1:
        raise ValueError('sizes must be positive')
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size] / image_size
    pixels, labels = [], []
    for c in range(n_classes):
        theta = np.pi * c / n_classes
        freq = 1.5 + 2.5 * rng.random()
        colour = rng.uniform(-1, 1, size=3)
        for _ in range(images_per_class):
            phase = rng.uniform(0, 2 * np.pi)
            grating = np.sin(2 * np.pi * freq * (xx * np.cos(theta) +
                                                 yy * np.sin(theta)) + phase)
            cy, cx = rng.uniform(0.2, 0.8, size=2)
            blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.02)
            img = 0.5 * grating[..., None] + 0.4 * colour * \
                (1 - blob[..., None]) + 0.4 * blob[..., None]
            img += rng.normal(0, 0.05, size=img.shape)
            img = np.clip(np.round(127.5 + 127.5 * img), 0, 255)
            pixels.append(img.astype(np.uint8))
            labels.append('class_{:02d}'.format(c))
    return ImageCollection(np.stack(pixels), labels)


def write_image_folder(collection, root):
    """Write a collection as ``root/<label>/<index>.png`` files."""
    from PIL import Image

    for i, (img, label) in enumerate(zip(collection.pixels,
                                         collection.labels)):
        odir = os.path.join(root, label)
        if not os.path.exists(odir):
            os.makedirs(odir)
        Image.fromarray(img).save(os.path.join(odir, '{:05d}.png'.format(i)))
    return root


class KnowledgeBase(object):
    """The fixed variance learned from the training set.

    Attributes
    ----------
    per_element_variance : np.ndarray
        float64 [k, h, w], the mean encoder variance per latent element
    scalar_variance : float
        the mean of the map
    source_fingerprint : str
        fingerprint of the dataset split
    model_fingerprint : str
        fingerprint of the checkpoint
    """

    def __init__(self, per_element_variance, source_fingerprint='',
                 model_fingerprint='', n_images=None):
        v = np.asarray(per_element_variance, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError('per_element_variance must be [k, h, w]')
        if not np.all(np.isfinite(v)) or not np.all(v > 0):
            raise ValueError('knowledge base variances must be finite and '
                             'strictly positive')
        self.per_element_variance = v
        self.scalar_variance = float(np.mean(v))
        self.source_fingerprint = str(source_fingerprint)
        self.model_fingerprint = str(model_fingerprint)
        self.n_images = n_images

    @property
    def shape(self):
        return self.per_element_variance.shape

    def variance(self, granularity='map'):
        """The variance used by fixed-variance resampling.

        Parameters
        ----------
        granularity : str
            'map' (per element) or 'scalar' (the map's mean everywhere)
        """
        if granularity == 'map':
            return self.per_element_variance
        if granularity == 'scalar':
            return np.full(self.shape, self.scalar_variance)
        raise ConfigurationError('kb granularity not recognised: '
                                 '{}'.format(granularity))

    def to_dataset(self):
        """As an xarray Dataset (the netCDF layout)."""
        ds = xr.Dataset()
        ds['per_element_variance'] = (('channel', 'y', 'x'),
                                      self.per_element_variance)
        ds.attrs['scalar_variance'] = self.scalar_variance
        ds.attrs['source_fingerprint'] = self.source_fingerprint
        ds.attrs['model_fingerprint'] = self.model_fingerprint
        ds.attrs['format_version'] = KB_FORMAT_VERSION
        ds.attrs['code_version'] = code_version()
        if self.n_images is not None:
            ds.attrs['n_images'] = int(self.n_images)
        return ds

    @classmethod
    def from_dataset(cls, ds):
        return cls(ds['per_element_variance'].values,
                   source_fingerprint=ds.attrs.get('source_fingerprint', ''),
                   model_fingerprint=ds.attrs.get('model_fingerprint', ''),
                   n_images=ds.attrs.get('n_images', None))

    def __eq__(self, other):
        return isinstance(other, KnowledgeBase) and \
            np.array_equal(self.per_element_variance,
                           other.per_element_variance) and \
            self.source_fingerprint == other.source_fingerprint and \
            self.model_fingerprint == other.model_fingerprint

    def __repr__(self):
        summary = ['<vscc.KnowledgeBase>']
        summary += ['  shape: {}'.format(self.shape)]
        summary += ['  scalar_variance: {:.6g}'.format(self.scalar_variance)]
        summary += ['  model_fingerprint: ' + self.model_fingerprint]
        summary += ['  source_fingerprint: ' + self.source_fingerprint]
        return '\n'.join(summary) + '\n'


def _neumaier_add(total, comp, values):
    """Compensated accumulation of ``values`` into (total, comp), in place."""
    t = total + values
    big = np.abs(total) >= np.abs(values)
    comp += np.where(big, (total - t) + values, (values - t) + total)
    total[...] = t


def build_knowledge_base(model, train, batch_size=64, device='cpu'):
    """Mean encoder variance over all training images.

    Parameters
    ----------
    model : JSCCModel or Checkpoint
        a VSCC or VAE model
    train : ImageCollection or DatasetSplit
        the training images (the train split of a DatasetSplit)
    batch_size : int
        images per forward pass (does not change the result)
    device : str
        torch device

    Returns
    -------
    a :py:class:`KnowledgeBase`
    """
    from vscc.network import Checkpoint

    if isinstance(model, Checkpoint):
        ckpt = model
        model = ckpt.to_model(device=device)
    else:
        ckpt = Checkpoint.from_model(model)
    if not Method(model.method).emits_variance:
        raise ConfigurationError('knowledge bases need a variance-emitting '
                                 'model (vscc or vae), not {}'
                                 .format(model.method))
    if isinstance(train, DatasetSplit):
        source_fp = train.fingerprint
        train = train.train
    else:
        source_fp = train.fingerprint
    if len(train) == 0:
        raise DatasetError('cannot build a knowledge base without images')

    k, h, w = model.architecture.latent_shape
    total = np.zeros((k, h, w))
    comp = np.zeros((k, h, w))
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for batch in train.batches(batch_size):
            x = batch.to_tensor(device=device,
                                dtype=next(model.parameters()).dtype)
            var = model.encode(x).stats.variance
            var = var.detach().cpu().numpy().astype(np.float64)
            for v in var:
                _neumaier_add(total, comp, v)
    model.train(was_training)

    kb = KnowledgeBase((total + comp) / len(train),
                       source_fingerprint=source_fp,
                       model_fingerprint=ckpt.fingerprint,
                       n_images=len(train))
    logger.info('knowledge base over %d images: scalar variance %.6g',
                len(train), kb.scalar_variance)
    return kb
