# -*- coding: utf-8 -*-
"""
===================
Images through AWGN
===================

Reconstructions of an autoencoder at several channel SNRs

"""

import numpy as np
import torch
import matplotlib.pyplot as plt

import vscc
from vscc.datasets import denormalize
from vscc.utils import make_rng

data = vscc.DatasetSplit.from_collection(
    vscc.make_synthetic_corpus(n_classes=5, images_per_class=10,
                               image_size=16), n_test_classes=1)
arch = vscc.ArchitectureConfig(image_size=16, stage_widths=(8, 16),
                               latent_channels=2, groupnorm_group_size=8)
config = vscc.TrainConfig(method='ae', train_snr_db=15, epochs=20,
                          batch_size=8, learning_rate=1e-3,
                          architecture=arch, checkpoint_dir=None)
model = vscc.train(config, data).to_model()

image = data.test.subset([0])
x = next(image.batches(1)).to_tensor()
rng = make_rng(0, kind='torch')

snrs = [np.inf, 15, 5, -5]
f, axes = plt.subplots(1, len(snrs) + 1, figsize=(11, 2.6))
axes[0].imshow(image.pixels[0])
axes[0].set_title('original')
with torch.no_grad():
    z = model.encode(x).latent
    for ax, snr in zip(axes[1:], snrs):
        y = vscc.transmit(z, vscc.ChannelConfig(snr), rng)
        out = denormalize(model.decode(y))[0]
        ax.imshow(out)
        ax.set_title('{:g} dB: {:.1f} dB PSNR'.format(
            snr, vscc.psnr(image.pixels[0], out)), fontsize=9)
for ax in axes:
    ax.set_xticks([])
    ax.set_yticks([])

plt.tight_layout()
plt.show()
