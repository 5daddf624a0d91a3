"""Log mel energies move with input gain; their time differences do not.

Run: python demos/features_and_gain.py
"""

import numpy as np

from tinycrnn.features import LfbeConfig, delta_lfbe, lfbe

cfg = LfbeConfig(n_mels=20)
rng = np.random.default_rng(0)

# one second of noise with a rising tone in the middle
n = cfg.n_samples(100)
t = np.arange(n) / cfg.sample_rate
tone = np.sin(2 * np.pi * (300 + 1500 * t) * t) * (np.abs(t - 0.5) < 0.15)
pcm = 0.05 * rng.standard_normal(n) + tone

base = lfbe(pcm, cfg)
print(f"LFBE matrix: {base.shape[0]} frames x {base.shape[1]} bins")

for gain in (0.1, 10.0):
    scaled = lfbe(gain * pcm, cfg)
    shift = (scaled.astype(np.float64) - base).mean()
    delta_err = np.abs(delta_lfbe(scaled) - delta_lfbe(base)).max()
    print(f"gain {gain:>5}: mean LFBE shift {shift:+.4f} (2 ln g = {2 * np.log(gain):+.4f}), "
          f"max delta-LFBE change {delta_err:.1e}")
