"""Cumulative binary encoding on a small grid, and how a vector of per-bit
probabilities turns into a distribution over values.

Run: python3 demos/encoding_walkthrough.py
"""

import numpy as np

from binconv.codec import Binning, argmax_bin, decode, encode, mean_scale, sample_bins, valid_sequence_log_probs

# A grid of 4 bins on [0, 4): a value sets every bit whose lower edge it reaches.
grid = Binning(0.0, 4.0, 4)
for x in (0.3, 1.0, 2.6, 3.99, 7.0):
    v = encode(x, grid)
    print(f"x={x:<5} bits={v.bits.astype(int).tolist()}  m={v.m}  decoded={decode(v.m, grid)}")

# Raw series are divided by the mean absolute value of their context first.
context = np.array([120.0, 80.0, 100.0])
s = mean_scale(context)
print(f"\nscale s={s.s}, scaled context={np.round(context / s.s, 3).tolist()}")

# Independent bit probabilities only put mass on the D + 1 monotone patterns.
p = np.array([0.4, 0.9, 0.2])
dist = valid_sequence_log_probs(p)
print(f"\nbit probabilities {p.tolist()}")
print(f"normalizer Z = {np.exp(dist.log_z):.3f}")
for m, pm in enumerate(dist.probs):
    print(f"  m={m} pattern={[1] * m + [0] * (3 - m)}  p={pm:.4f}")
print(f"argmax m={argmax_bin(dist)}")

draws = sample_bins(dist, np.random.default_rng(0), 10_000)
print("empirical frequencies:", np.round(np.bincount(draws, minlength=4) / draws.size, 3).tolist())
