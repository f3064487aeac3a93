"""Walkthrough of the frequency machinery: block DCT and Haar wavelets.

Shows the orthonormal conventions, perfect reconstruction, energy
preservation, and how the clean-image band statistics that drive the
attack initialization look on a textured image.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from dpattack.ddm import compute_freq_stats
from dpattack.transforms import bdct, dwt, ibdct, idwt

rng = np.random.default_rng(0)

# A smooth synthetic "photo": most energy sits in low frequency bands,
# which is exactly the prior the attack exploits.
x = gaussian_filter(rng.random((3, 32, 32)), sigma=(0, 3, 3))
x = (x - x.min()) / (x.max() - x.min())

print("== Block DCT (8x8, orthonormal) ==")
coef = bdct(x, 8)
print(f"coefficient tensor: {coef.shape}  (channels, blocks, w, w)")
print(f"spatial energy   : {np.sum(x**2):.6f}")
print(f"frequency energy : {np.sum(coef**2):.6f}  (Parseval)")
back = ibdct(coef, 8, out_shape=x.shape)
print(f"round-trip error : {np.abs(back - x).max():.2e}")

print()
print("== Band statistics across blocks ==")
stats = compute_freq_stats(x, 8)
sigma_y = stats.sigma[0]
print("per-band std of the luminance channel (rows = i, cols = j):")
with np.printoptions(precision=3, suppress=True):
    print(sigma_y[:4, :4])
print("DC band dominates -> sampled perturbations concentrate where natural")
print("images vary the most, which correlates with model sensitivity.")

print()
print("== Haar wavelets ==")
low, details = dwt(x, 2)
print(f"low-pass shape after 2 levels: {low.shape}")
rec = idwt(low, details, 2)
print(f"perfect reconstruction error : {np.abs(rec - x).max():.2e}")
proj = idwt(low, None, 2)
print(f"low-pass projection energy   : {np.sum(proj**2):.4f} <= {np.sum(x**2):.4f}")
