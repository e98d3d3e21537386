"""MDP environment wrapping the channel dynamics and PHY pipeline.

State: real/imag parts of the previous IRS phase and the previous channel
estimate. Action: index k of a DFT increment vector v(k) with element m
equal to e^{j pi m k / N_R}, applied multiplicatively to the phase state.
Reward: downlink sum rate of the slot.

The IRS phase is stored as integer multiples of pi/N_R (mod 2*N_R), so
any action sequence stays exactly on the discrete grid and amplitudes
are exactly 1. NLoS fading is redrawn every slot; user positions (and
with them the LoS geometry) are redrawn every `slots_per_los_redraw`
slots.
"""

from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import phy
from .numerics import SingularMatrixError


@dataclass
class PhaseConfig:
    """IRS reflection state: unit amplitudes, phases on the pi/N_R grid.

    `levels[i]` is the integer multiple of pi/N_R for element i, reduced
    mod 2*N_R.
    """

    levels: np.ndarray
    n_irs: int

    @classmethod
    def identity(cls, n_irs: int) -> "PhaseConfig":
        return cls(levels=np.zeros(n_irs, dtype=np.int64), n_irs=n_irs)

    @property
    def phases(self) -> np.ndarray:
        return self.levels * (np.pi / self.n_irs)

    def coefficients(self) -> np.ndarray:
        """diag entries of Phi: e^{j * phase}, amplitudes exactly 1."""
        return np.exp(1j * self.phases)


@dataclass
class ActionSpace:
    half_width: int  # n; members k in {-n, ..., n}

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    def contains(self, k: int) -> bool:
        return -self.half_width <= k <= self.half_width

    def index_to_k(self, idx: int) -> int:
        return idx - self.half_width

    def k_to_index(self, k: int) -> int:
        return k + self.half_width


def dft_action_vector(k: int, n_r: int) -> np.ndarray:
    """v(k): element m is e^{j pi m k / N_R}, m = 0..N_R-1."""
    return np.exp(1j * np.pi * k * np.arange(n_r) / n_r)


def apply_action(phi: PhaseConfig, k: int, space: ActionSpace) -> PhaseConfig:
    """Phi_t = Phi_{t-1} . diag(v(k)): level m gains m*k (mod 2 N_R)."""
    if not space.contains(k):
        raise ValueError(f"action {k} outside space |k| <= {space.half_width}")
    n = phi.n_irs
    levels = (phi.levels + k * np.arange(n, dtype=np.int64)) % (2 * n)
    return PhaseConfig(levels=levels, n_irs=n)


@dataclass
class Observation:
    phase_part: np.ndarray    # length 2*N_R: Re then Im of diag(Phi_{t-1})
    channel_part: np.ndarray  # length 2*N_K*N_B: Re then Im of Hhat_{t-1}

    def concat(self) -> np.ndarray:
        return np.concatenate([self.phase_part, self.channel_part])


@dataclass
class EnvConfig:
    n_bs_antennas: int = 2
    n_irs_elements: int = 32
    n_users: int = 2
    action_half_width: int = 2
    rician_k: float = 10.0
    slots_per_los_redraw: int = 20
    pilot_power: float = 1.0
    pilot_noise_sigma: float = 1.0
    mmse_sigma: float = 1.0
    tx_power: float = 1.0
    downlink_noise_var: float = 1.0
    geometry: ch.SceneGeometry = field(default_factory=ch.SceneGeometry)

    def __post_init__(self):
        for name in ("n_bs_antennas", "n_irs_elements", "n_users"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.action_half_width < 0:
            raise ValueError("action_half_width must be >= 0")
        if self.slots_per_los_redraw < 1:
            raise ValueError("slots_per_los_redraw must be >= 1")

    @property
    def obs_phase_dim(self) -> int:
        return 2 * self.n_irs_elements

    @property
    def obs_channel_dim(self) -> int:
        return 2 * self.n_users * self.n_bs_antennas


@dataclass
class SlotInfo:
    slot: int
    action_k: int
    reward: float
    los_epoch: int
    outage: bool


class IrsEnv:
    """Continuing (no-terminal) IRS phase-control environment.

    One instance is single-threaded; run several instances with distinct
    seeds for parallel rollouts. `zero_irs_link=True` is a test hook that
    forces H_UR = 0, making the reward distribution independent of the
    action.
    """

    def __init__(self, config: EnvConfig, zero_irs_link: bool = False,
                 log_slots: bool = False):
        self.config = config
        self.zero_irs_link = zero_irs_link
        self.log_slots = log_slots
        self.space = ActionSpace(config.action_half_width)
        self.pilots = phy.make_orthogonal_pilots(
            config.n_users, config.pilot_power)
        self.rician = ch.RicianConfig(config.rician_k)
        self._rng = None
        self.slot = 0
        self.phi = None
        self.h_hat = None
        self.last_h = None
        self.last_triple = None
        self.slot_log = None

    # -- internals ---------------------------------------------------------

    def _redraw_los(self):
        c = self.config
        self.users = ch.sample_user_positions(c.geometry, c.n_users, self._rng)
        self.los = ch.los_triple(
            c.geometry, self.users, c.n_bs_antennas, c.n_irs_elements)

    def _draw_triple(self) -> ch.ChannelTriple:
        c = self.config
        rng = self._rng
        mix = ch.rician_mix
        triple = ch.ChannelTriple(
            h_ub=mix(self.los.h_ub,
                     ch.sample_nlos(c.n_users, c.n_bs_antennas, rng),
                     self.rician),
            h_ur=mix(self.los.h_ur,
                     ch.sample_nlos(c.n_users, c.n_irs_elements, rng),
                     self.rician),
            h_rb=mix(self.los.h_rb,
                     ch.sample_nlos(c.n_irs_elements, c.n_bs_antennas, rng),
                     self.rician),
        )
        if self.zero_irs_link:
            triple.h_ur = np.zeros_like(triple.h_ur)
        return triple

    def _run_phy(self, triple: ch.ChannelTriple):
        """Pilot round + estimation + precoding + rate for the current Phi."""
        c = self.config
        h = ch.composite_channel(triple, self.phi.coefficients())
        y = phy.uplink_receive(h, self.pilots, c.pilot_noise_sigma, self._rng)
        h_hat = phy.mmse_estimate(y, self.pilots, c.mmse_sigma)
        try:
            precoder = phy.zf_precoder(h_hat)
            sinrs = phy.sinr_per_user(
                precoder, h, c.downlink_noise_var, c.tx_power)
            rate = phy.sum_rate(sinrs)
            outage = False
        except SingularMatrixError:
            rate = 0.0
            outage = True
        return h, h_hat, rate, outage

    def _observation(self) -> Observation:
        coeffs = self.phi.coefficients()
        hh = self.h_hat.ravel()
        return Observation(
            phase_part=np.concatenate([coeffs.real, coeffs.imag]),
            channel_part=np.concatenate([hh.real, hh.imag]),
        )

    # -- public API --------------------------------------------------------

    def reset(self, seed: int) -> Observation:
        self._rng = np.random.default_rng(seed)
        self.slot = 0
        self.phi = PhaseConfig.identity(self.config.n_irs_elements)
        self._redraw_los()
        triple = self._draw_triple()
        self.last_triple = triple
        self.last_h, self.h_hat, _, _ = self._run_phy(triple)
        self.slot_log = [] if self.log_slots else None
        return self._observation()

    def step(self, action_k: int):
        if self._rng is None:
            raise RuntimeError("environment not initialized; call reset first")
        self.phi = apply_action(self.phi, action_k, self.space)
        self.slot += 1
        if self.slot % self.config.slots_per_los_redraw == 0:
            self._redraw_los()
        triple = self._draw_triple()
        self.last_triple = triple
        self.last_h, self.h_hat, rate, outage = self._run_phy(triple)
        info = SlotInfo(
            slot=self.slot, action_k=action_k, reward=rate,
            los_epoch=self.slot // self.config.slots_per_los_redraw,
            outage=outage)
        if self.slot_log is not None:
            self.slot_log.append(info)
        return self._observation(), rate, info

    def evaluate_policy(self, policy, n_slots: int, seed: int) -> float:
        """Mean reward of `policy(obs) -> k` over n_slots fresh slots."""
        if n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        obs = self.reset(seed)
        self.slot_log = None  # no need to accumulate during evaluation
        total = 0.0
        for _ in range(n_slots):
            obs, reward, _ = self.step(policy(obs))
            total += reward
        return total / n_slots


def format_slot_log(log) -> str:
    """Line-delimited slot records for offline auditing."""
    lines = ["slot,action_k,reward,los_epoch,outage"]
    for rec in log:
        lines.append(f"{rec.slot},{rec.action_k},{rec.reward:.12g},"
                     f"{rec.los_epoch},{int(rec.outage)}")
    return "\n".join(lines) + "\n"
