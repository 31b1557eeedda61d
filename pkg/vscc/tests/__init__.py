from __future__ import division
import unittest
import os

from vscc.datasets import make_synthetic_corpus, DatasetSplit
from vscc.network import ArchitectureConfig

run_slow = os.environ.get('VSCC_SLOW_TESTS') is not None

try:
    import matplotlib
    matplotlib.use('Agg')
    has_matplotlib = True
except ImportError:
    has_matplotlib = False

try:
    import skimage.metrics
    has_skimage = True
except ImportError:
    has_skimage = False

try:
    import PIL
    has_pillow = True
except ImportError:
    has_pillow = False


def requires_matplotlib(test):
    msg = "requires matplotlib"
    return test if has_matplotlib else unittest.skip(msg)(test)


def requires_skimage(test):
    msg = "requires scikit-image"
    return test if has_skimage else unittest.skip(msg)(test)


def requires_pillow(test):
    msg = "requires Pillow"
    return test if has_pillow else unittest.skip(msg)(test)


def requires_slow(test):
    msg = "requires VSCC_SLOW_TESTS"
    return test if run_slow else unittest.skip(msg)(test)


def tiny_architecture(**kwargs):
    """8x8 images, one stage, k=2: a network small enough for every test."""
    d = dict(image_size=8, stage_widths=(8,), latent_channels=2,
             groupnorm_group_size=4)
    d.update(kwargs)
    return ArchitectureConfig(**d)


def tiny_data(image_size=8, n_classes=4, images_per_class=6, seed=0):
    coll = make_synthetic_corpus(n_classes=n_classes,
                                 images_per_class=images_per_class,
                                 image_size=image_size, seed=seed)
    return DatasetSplit.from_collection(coll, n_test_classes=1, seed=seed)
