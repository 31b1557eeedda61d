# -*- coding: utf-8 -*-
"""
================
Resampling modes
================

Transmitted against fixed variance for a small VSCC model

"""

import matplotlib.pyplot as plt

import vscc
from vscc.graphics import curves, plot_snr_curve, MODE_STYLES

# a few synthetic images and a tiny network
data = vscc.DatasetSplit.from_collection(
    vscc.make_synthetic_corpus(n_classes=5, images_per_class=10,
                               image_size=16), n_test_classes=1)
arch = vscc.ArchitectureConfig(image_size=16, stage_widths=(8, 16),
                               latent_channels=2, groupnorm_group_size=8)
config = vscc.TrainConfig(method='vscc', train_snr_db=5, cmc=5, epochs=10,
                          batch_size=8, learning_rate=1e-3,
                          architecture=arch, checkpoint_dir=None)
ckpt = vscc.train(config, data)
kb = vscc.build_knowledge_base(ckpt, data)

results = []
for mode in ['transmission', 'fixed']:
    ec = vscc.EvalConfig(mode=mode, test_snr_db='-10:20:5',
                         resample_count=5, knowledge_base=kb)
    results.append(vscc.evaluate(ckpt, data, ec))
cur = curves(vscc.evaluation.results_table(results))

f, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
for mode, c in cur.groupby('mode'):
    plot_snr_curve(ax1, c, metric='psnr', **MODE_STYLES[mode])
    plot_snr_curve(ax2, c, metric='ssim', **MODE_STYLES[mode])
ax1.set_ylabel('PSNR (dB)')
ax2.set_ylabel('SSIM')
for ax in [ax1, ax2]:
    ax.set_xlabel('test SNR (dB)')
ax1.legend(loc='lower right')

# make it nice
plt.tight_layout()
plt.show()
