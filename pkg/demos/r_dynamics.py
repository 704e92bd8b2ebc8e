"""How the dynamic weight r responds to the two branches' KL terms.

r = 2 / (rho^2 + 1) with rho the mean per-sample ratio of the branch
predictive KLs, KL2/KL1. r scales the second modality's conciseness
penalty. If the fused representation still misses task information that
branch 2 has (larger KL2), r drops and that penalty is relaxed.
"""

import numpy as np

from omib.train import compute_r, r_from_rho_tanh

for rho in (1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3):
    print(f"rho={rho:>8g}  r={2 / (rho ** 2 + 1):.6f}  tanh form={r_from_rho_tanh(rho):.6f}")

rng = np.random.default_rng(0)
kl1 = rng.gamma(2.0, 0.5, size=256)
for scale in (0.25, 1.0, 4.0):
    kl2 = kl1 * scale * rng.lognormal(0.0, 0.1, size=256)
    print(f"KL2 ~ {scale:>4} x KL1  ->  r = {compute_r(kl2, kl1):.4f}")
