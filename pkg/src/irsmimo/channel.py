"""Scene geometry and Rician sub-channel generation.

Three sub-channels are drawn per slot: users->BS (H_UB, N_K x N_B),
users->IRS (H_UR, N_K x N_R) and IRS->BS (H_RB, N_R x N_B). Each is a
Rician mix of a deterministic steering-vector LoS part and CN(0,1) NLoS
fading. The IRS phase state combines them into the effective uplink
channel H = H_UB + H_UR diag(phi) H_RB.

No large-scale path loss is applied: LoS entries are unit modulus and the
mix preserves unit average power, so geometry only sets steering angles.
"""

from dataclasses import dataclass, field

import numpy as np

UNIT_NORM_TOL = 1e-6


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@dataclass
class SceneGeometry:
    """BS/IRS placement and the user drop area."""

    bs_position: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.0]))
    irs_position: np.ndarray = field(
        default_factory=lambda: np.array([5.0, 5.0, 5.0]))
    bs_array_axis: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    irs_array_axis: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    user_area_center: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.0]))
    user_area_radius: float = 10.0
    user_height_range: tuple = (1.5, 1.8)

    def __post_init__(self):
        for name in ("bs_position", "irs_position", "bs_array_axis",
                     "irs_array_axis", "user_area_center"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for axis in (self.bs_array_axis, self.irs_array_axis):
            if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
                raise ValueError(f"array axis must be unit norm: {axis}")
        if self.user_area_radius <= 0:
            raise ValueError("user_area_radius must be positive")
        lo, hi = self.user_height_range
        if not lo <= hi:
            raise ValueError("user_height_range must be nonempty")


@dataclass
class RicianConfig:
    k_factor: float = 10.0

    def __post_init__(self):
        if not np.isfinite(self.k_factor) or self.k_factor < 0:
            raise ValueError("k_factor must be finite and >= 0")


@dataclass
class ChannelTriple:
    """The three sub-channels of one time slot."""

    h_ub: np.ndarray  # N_K x N_B
    h_ur: np.ndarray  # N_K x N_R
    h_rb: np.ndarray  # N_R x N_B


def sample_user_positions(geometry: SceneGeometry, n_users: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Drop users area-uniformly in the horizontal disk, heights uniform.

    Returns an (n_users, 3) array of positions in meters.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    r = geometry.user_area_radius * np.sqrt(rng.random(n_users))
    theta = 2.0 * np.pi * rng.random(n_users)
    lo, hi = geometry.user_height_range
    pos = np.empty((n_users, 3))
    pos[:, 0] = geometry.user_area_center[0] + r * np.cos(theta)
    pos[:, 1] = geometry.user_area_center[1] + r * np.sin(theta)
    pos[:, 2] = rng.uniform(lo, hi, n_users)
    return pos


def steering_vector(psi: float, n: int) -> np.ndarray:
    """ULA steering response: element m is e^{j pi m psi} (half-wavelength)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(1j * np.pi * psi * np.arange(n))


def directional_cosine(array_axis, link_direction) -> float:
    array_axis = np.asarray(array_axis, dtype=np.float64)
    link_direction = np.asarray(link_direction, dtype=np.float64)
    for v in (array_axis, link_direction):
        if abs(np.linalg.norm(v) - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"input must be unit norm: {v}")
    return float(array_axis @ link_direction)


def los_component(tx_cosine: float, n_tx: int,
                  rx_cosine: float, n_rx: int) -> np.ndarray:
    """Rank-one LoS matrix v_rx v_tx^H, shape (n_rx, n_tx)."""
    v_rx = steering_vector(rx_cosine, n_rx)
    v_tx = steering_vector(tx_cosine, n_tx)
    return np.outer(v_rx, v_tx.conj())


def sample_nlos(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0,1) entries (variance 1/2 per real component)."""
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return (re + 1j * im) / np.sqrt(2.0)


def rician_mix(los: np.ndarray, nlos: np.ndarray,
               config: RicianConfig) -> np.ndarray:
    if los.shape != nlos.shape:
        raise ValueError(
            f"rician_mix dimension mismatch: {los.shape} vs {nlos.shape}")
    k = config.k_factor
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * nlos


def los_triple(geometry: SceneGeometry, users: np.ndarray,
               n_bs: int, n_irs: int) -> ChannelTriple:
    """Deterministic LoS parts of the three sub-channels for fixed users.

    H_RB is oriented N_R x N_B (rows indexed by IRS elements). Per-user
    rows of H_UB / H_UR are conjugated steering responses toward each
    user's direction seen from the respective array site.
    """
    users = np.asarray(users, dtype=np.float64)
    n_users = users.shape[0]
    e_br = _unit(geometry.irs_position - geometry.bs_position)
    psi_b = directional_cosine(geometry.bs_array_axis, e_br)
    psi_r = directional_cosine(geometry.irs_array_axis, e_br)
    h_rb = los_component(psi_b, n_bs, psi_r, n_irs)

    h_ub = np.empty((n_users, n_bs), dtype=np.complex128)
    h_ur = np.empty((n_users, n_irs), dtype=np.complex128)
    for k in range(n_users):
        to_user_bs = _unit(users[k] - geometry.bs_position)
        to_user_irs = _unit(users[k] - geometry.irs_position)
        h_ub[k] = steering_vector(
            geometry.bs_array_axis @ to_user_bs, n_bs).conj()
        h_ur[k] = steering_vector(
            geometry.irs_array_axis @ to_user_irs, n_irs).conj()
    return ChannelTriple(h_ub=h_ub, h_ur=h_ur, h_rb=h_rb)


def generate_triple(geometry: SceneGeometry, users: np.ndarray,
                    config: RicianConfig, rng: np.random.Generator,
                    n_bs: int, n_irs: int) -> ChannelTriple:
    """Draw one slot's Rician triple: fixed LoS geometry plus fresh NLoS."""
    los = los_triple(geometry, users, n_bs, n_irs)
    n_users = los.h_ub.shape[0]
    return ChannelTriple(
        h_ub=rician_mix(los.h_ub, sample_nlos(n_users, n_bs, rng), config),
        h_ur=rician_mix(los.h_ur, sample_nlos(n_users, n_irs, rng), config),
        h_rb=rician_mix(los.h_rb, sample_nlos(n_irs, n_bs, rng), config),
    )


def composite_channel(triple: ChannelTriple, phi: np.ndarray) -> np.ndarray:
    """Effective uplink channel H = H_UB + H_UR diag(phi) H_RB (N_K x N_B)."""
    phi = np.asarray(phi, dtype=np.complex128)
    if phi.ndim != 1 or phi.shape[0] != triple.h_ur.shape[1]:
        raise ValueError("phi length must match the IRS element count")
    return triple.h_ub + (triple.h_ur * phi) @ triple.h_rb
