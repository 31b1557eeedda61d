# -*- coding: utf-8 -*-
"""
===================
Channel calibration
===================

Empirical against nominal SNR of the AWGN channel

"""

import numpy as np
import matplotlib.pyplot as plt

from vscc import ChannelConfig, transmit, measure_empirical_snr
from vscc.utils import make_rng

rng = make_rng(0)

# latents are rarely at unit power: the channel normalizes them
symbols = rng.normal(3., 5., size=100000)

nominal = np.arange(-10, 26, 2.5)
measured = []
for snr in nominal:
    received = transmit(symbols, ChannelConfig(snr), rng)
    measured.append(measure_empirical_snr(symbols, received).empirical_snr_db)

f, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
ax1.plot(nominal, measured, 'o')
ax1.plot(nominal, nominal, color='grey', zorder=0)
ax1.set_xlabel('nominal SNR (dB)')
ax1.set_ylabel('measured SNR (dB)')
ax2.plot(nominal, np.asarray(measured) - nominal, 'o')
ax2.axhline(0, color='grey', zorder=0)
ax2.set_xlabel('nominal SNR (dB)')
ax2.set_ylabel('error (dB)')

# make it nice
plt.tight_layout()
plt.show()
