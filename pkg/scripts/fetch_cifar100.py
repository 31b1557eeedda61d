"""Write CIFAR-100 as an image folder for the desk preset.

Downloads the dataset with torchvision and writes ``root/<class>/<n>.png``.
The train and test parts of CIFAR-100 are merged: vscc draws its own
class-disjoint split.

    python scripts/fetch_cifar100.py data/cifar100 --per-class 25
"""
import os
import sys
import logging
import argparse

import numpy as np

from vscc.datasets import ImageCollection, write_image_folder

logger = logging.getLogger('fetch_cifar100')


def fetch(root, download_dir, per_class=None, seed=0):
    from torchvision.datasets import CIFAR100

    pixels, labels = [], []
    for train in [True, False]:
        ds = CIFAR100(root=download_dir, train=train, download=True)
        pixels.append(np.asarray(ds.data, dtype=np.uint8))
        labels += [ds.classes[t] for t in ds.targets]
    coll = ImageCollection(np.concatenate(pixels), labels)

    if per_class is not None:
        rng = np.random.default_rng(seed)
        keep = []
        for c in coll.classes:
            idx = np.nonzero(coll.labels == c)[0]
            keep += sorted(rng.choice(idx, size=min(per_class, len(idx)),
                                      replace=False))
        coll = coll.subset(keep)

    logger.info('writing %d images of %d classes to %s', len(coll),
                len(coll.classes), root)
    return write_image_folder(coll, root)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument('root', help='output directory')
    p.add_argument('--download-dir', default=None,
                   help='where torchvision keeps the archive '
                        '(default: <root>_download)')
    p.add_argument('--per-class', type=int, default=None,
                   help='images kept per class (default: all 600)')
    p.add_argument('--seed', type=int, default=0)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO)

    if os.path.exists(args.root) and os.listdir(args.root):
        logger.error('%s exists and is not empty', args.root)
        return 1
    download_dir = args.download_dir or args.root.rstrip('/') + '_download'
    fetch(args.root, download_dir, per_class=args.per_class, seed=args.seed)
    return 0


if __name__ == '__main__':
    sys.exit(main())
