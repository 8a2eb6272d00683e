"""Indoor-factory path loss and one slot of per-subchannel gains."""

import numpy as np

from slicealloc.channel import LinkParams, noise_power_w, path_loss_inf_dl, sample_channel

for d in (1.0, 10.0, 50.0, 100.0):
    print(f"path loss at {d:5.1f} m: {path_loss_inf_dl(d, 3.7):7.2f} dB")

link = LinkParams()
print(f"\nnoise per {link.subchannel_bw_hz / 1e3:.0f} kHz subchannel: {noise_power_w(link):.3e} W")

channel = sample_channel(link, [5.0, 40.0, 95.0], 7)
snr_db = 10 * np.log10(channel.gains / channel.noise_power_w)
for i, row in enumerate(snr_db):
    print(f"user {i}: SNR per watt median {np.median(row):6.1f} dB, spread {row.std():4.1f} dB")
