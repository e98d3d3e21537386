"""Walk through one downlink slot by hand.

Builds the scene geometry, draws a Rician channel triple, applies an
IRS phase configuration, and runs the full PHY chain: orthogonal
pilots, MMSE estimation, zero-forcing precoding, per-user SINR and the
resulting sum rate. Run with `python demos/channel_and_phy_walkthrough.py`.
"""

import numpy as np

from irsmimo import channel, phy
from irsmimo.env import PhaseConfig

N_BS, N_IRS, N_USERS = 2, 32, 2

rng = np.random.default_rng(0)
geometry = channel.SceneGeometry()
users = channel.sample_user_positions(geometry, N_USERS, rng)
print("user positions (x, y, z):")
for p in users:
    print(f"  [{p[0]:7.3f} {p[1]:7.3f} {p[2]:6.3f}]")

config = channel.RicianConfig(k_factor=10.0)
triple = channel.generate_triple(geometry, users, config, rng,
                                 n_bs=N_BS, n_irs=N_IRS)
print(f"\nchannel blocks: direct {triple.h_ub.shape}, "
      f"user-IRS {triple.h_ur.shape}, IRS-BS {triple.h_rb.shape}")

# An all-zeros phase configuration reflects without any rotation; any
# other point on the pi/N_IRS grid rotates each element's reflection.
phi = PhaseConfig.identity(N_IRS)
h = channel.composite_channel(triple, phi.coefficients())
print(f"composite uplink channel H ({h.shape[0]}x{h.shape[1]}):")
print(np.array2string(h, precision=3, suppress_small=True))

pilots = phy.make_orthogonal_pilots(N_USERS, power=1.0)
print(f"\npilot Gram X X^H (should be the identity):")
print(np.array2string(pilots.x @ pilots.x.conj().T, precision=3,
                      suppress_small=True))

y = phy.uplink_receive(h, pilots, noise_sigma=1.0, rng=rng)
h_hat = phy.mmse_estimate(y, pilots, noise_sigma=1.0)
err = np.linalg.norm(h_hat - h) / np.linalg.norm(h)
print(f"MMSE estimate relative error under unit noise: {err:.3f}")

precoder = phy.zf_precoder(h_hat)
cross = np.abs(h_hat @ precoder.a)
print("\n|H_hat A| (zero-forcing nulls the off-diagonal):")
print(np.array2string(cross, precision=4, suppress_small=True))

sinrs = phy.sinr_per_user(precoder, h, noise_vars=1.0, tx_power=1.0)
print(f"\nper-user SINR: {np.array2string(sinrs, precision=3)}")
print(f"sum rate: {phy.sum_rate(sinrs):.3f} bit/s/Hz")
