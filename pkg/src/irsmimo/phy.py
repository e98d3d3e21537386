"""Per-slot physical layer: pilots, MMSE estimation, ZF precoding, rates.

Uplink: users send orthogonal pilots, Y = X H + N; the BS forms the
regularized least-squares estimate Hhat = Y X^H (X X^H + sigma^2 I)^{-1}.
Downlink: ZF precoding from Hhat under TDD reciprocity (the downlink
vector of user k is the conjugate of row k of the uplink H), per-user
SINR and sum rate in bit/s/Hz.
"""

from dataclasses import dataclass

import numpy as np

from . import numerics
from .numerics import SingularMatrixError

__all__ = [
    "PilotMatrix", "Precoder", "make_orthogonal_pilots", "uplink_receive",
    "mmse_estimate", "zf_precoder", "sinr_per_user", "sum_rate",
    "SingularMatrixError",
]


@dataclass
class PilotMatrix:
    x: np.ndarray  # N_K x N_K
    per_symbol_power: float


@dataclass
class Precoder:
    a: np.ndarray  # N_B x N_K, unit-norm columns


def make_orthogonal_pilots(n_users: int, power: float = 1.0) -> PilotMatrix:
    """Scaled unitary DFT pilots: X X^H = power * I exactly."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    if power <= 0:
        raise ValueError("power must be positive")
    m = np.arange(n_users)
    dft = np.exp(-2j * np.pi * np.outer(m, m) / n_users) / np.sqrt(n_users)
    return PilotMatrix(x=np.sqrt(power) * dft, per_symbol_power=power)


def uplink_receive(h: np.ndarray, pilots: PilotMatrix, noise_sigma: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Y = X H + N with i.i.d. CN(0, noise_sigma^2) noise entries."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    x = pilots.x
    if x.shape[1] != h.shape[0]:
        raise ValueError(f"pilot/channel mismatch: {x.shape} vs {h.shape}")
    y = x @ h
    if noise_sigma > 0:
        re = rng.standard_normal(y.shape)
        im = rng.standard_normal(y.shape)
        y = y + noise_sigma * (re + 1j * im) / np.sqrt(2.0)
    return y


def mmse_estimate(y: np.ndarray, pilots: PilotMatrix,
                  noise_sigma: float) -> np.ndarray:
    """Regularized pilot inversion Hhat = (X X^H + s^2 I)^{-1} X^H Y.

    Output is N_K x N_B. With the Y = X H convention the de-spreading
    pilot adjoint acts from the left; the regularizer sits on the pilot
    Gram matrix X X^H. For scaled-unitary pilots of power p this reduces
    to Hhat = p/(p + s^2) * H on noiseless observations.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    x = pilots.x
    gram = x @ x.conj().T  # Hermitian
    b = np.asarray(y, dtype=np.complex128).conj().T @ x  # (X^H Y)^H
    return numerics.solve_regularized(gram, b, noise_sigma ** 2).conj().T


def zf_precoder(h_hat: np.ndarray) -> Precoder:
    """Column-normalized Moore-Penrose pseudo-inverse of the estimate.

    For a tall/square full-column-rank Hhat this is the Gram form
    (Hhat^H Hhat)^{-1} Hhat^H; for wide Hhat the right-inverse form.
    Raises SingularMatrixError on rank deficiency (caller treats the
    slot as an outage).
    """
    h_hat = numerics.as_cmatrix(h_hat)
    n_k, n_b = h_hat.shape
    hh = h_hat.conj().T
    if n_k >= n_b:
        gram = hh @ h_hat  # N_B x N_B
        # W = gram^{-1} hh: right-divide on the transposed system
        w = numerics.solve_regularized(gram.T, hh.T, 0.0).T
    else:
        gram = h_hat @ hh  # N_K x N_K
        w = numerics.solve_regularized(gram, hh, 0.0)
    norms = np.linalg.norm(w, axis=0)
    if norms.min() < 1e-300:
        raise SingularMatrixError("zero precoder column")
    return Precoder(a=w / norms)


def sinr_per_user(precoder: Precoder, h_true: np.ndarray,
                  noise_vars: np.ndarray, tx_power: float = 1.0) -> np.ndarray:
    """Per-user SINR with reciprocity h_k = conj(row k of the uplink H)."""
    noise_vars = np.broadcast_to(
        np.asarray(noise_vars, dtype=np.float64), (h_true.shape[0],))
    if np.any(noise_vars <= 0):
        raise ValueError("noise_vars must be positive")
    a = precoder.a
    # gains[k, j] = |a_j^H h_k|^2 = |(H a)[k, j]|^2 with h_k = conj(H[k, :])
    gains = np.abs(np.asarray(h_true) @ a) ** 2
    signal = tx_power * np.diag(gains)
    interference = tx_power * (gains.sum(axis=1) - np.diag(gains))
    return signal / (interference + noise_vars)


def sum_rate(sinrs: np.ndarray) -> float:
    """Sum of log2(1 + SINR) over users, bit/s/Hz."""
    sinrs = np.asarray(sinrs, dtype=np.float64)
    if np.any(sinrs < 0):
        raise ValueError("SINRs must be nonnegative")
    return float(np.log2(1.0 + sinrs).sum())
