"""PPO with dual-branch recurrent actor/critic networks.

Each network feeds the phase part and the channel part of the observation
through separate linear+GRU branches, sums the branch outputs and applies
a linear head (action logits for the actor, scalar value for the critic).
Observations are normalized per component with running statistics shared
by both networks; advantages are standardized per mini-batch.

Mini-batches are contiguous sub-sequences of the rollout; the recurrent
state stored at each sub-sequence start is replayed through the GRUs
during updates (truncated backprop through time at sub-sequence
boundaries). The continuing task is batch-truncated with a critic
bootstrap at the batch edge.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nncore as nn
from .env import Observation

SIGMA_FLOOR = 1e-8


# -- running normalization -------------------------------------------------


class VectorWelford:
    """Exact streaming per-component mean/variance (population std)."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x: np.ndarray):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.full_like(self.mean, SIGMA_FLOOR)
        return np.maximum(np.sqrt(self.m2 / self.count), SIGMA_FLOOR)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


class RunningNormalizer:
    """Separate running statistics for the two observation groups."""

    def __init__(self, phase_dim: int, channel_dim: int):
        self.phase = VectorWelford(phase_dim)
        self.channel = VectorWelford(channel_dim)

    def normalize(self, obs: Observation, update: bool = True) -> Observation:
        if update:
            self.phase.update(obs.phase_part)
            self.channel.update(obs.channel_part)
        return Observation(
            phase_part=self.phase.normalize(obs.phase_part),
            channel_part=self.channel.normalize(obs.channel_part),
        )

    def state_arrays(self) -> dict:
        return {
            "phase_count": np.array(self.phase.count),
            "phase_mean": self.phase.mean, "phase_m2": self.phase.m2,
            "channel_count": np.array(self.channel.count),
            "channel_mean": self.channel.mean, "channel_m2": self.channel.m2,
        }

    def load_state_arrays(self, arrays: dict):
        self.phase.count = int(arrays["phase_count"])
        self.phase.mean = np.array(arrays["phase_mean"])
        self.phase.m2 = np.array(arrays["phase_m2"])
        self.channel.count = int(arrays["channel_count"])
        self.channel.mean = np.array(arrays["channel_mean"])
        self.channel.m2 = np.array(arrays["channel_m2"])


def normalize_observation(norm: RunningNormalizer,
                          obs: Observation) -> Observation:
    """Update running statistics with obs, then standardize it."""
    return norm.normalize(obs, update=True)


# -- networks --------------------------------------------------------------


class _DualBranchNet:
    def __init__(self, phase_dim, channel_dim, out_size, hidden, rng, name):
        self.hidden_size = hidden
        self.lin_phase = nn.LinearLayer(phase_dim, hidden, rng,
                                        f"{name}.lin_phase")
        self.gru_phase = nn.GruCell(hidden, hidden, rng, f"{name}.gru_phase")
        self.lin_channel = nn.LinearLayer(channel_dim, hidden, rng,
                                          f"{name}.lin_channel")
        self.gru_channel = nn.GruCell(hidden, hidden, rng,
                                      f"{name}.gru_channel")
        self.head = nn.LinearLayer(hidden, out_size, rng, f"{name}.head")

    def parameters(self):
        return (self.lin_phase.parameters() + self.gru_phase.parameters()
                + self.lin_channel.parameters() + self.gru_channel.parameters()
                + self.head.parameters())

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def initial_hidden(self):
        return (np.zeros((1, self.hidden_size)),
                np.zeros((1, self.hidden_size)))

    def forward_step(self, x_phase, x_channel, hidden):
        h_phase, h_channel = hidden
        h_phase = self.gru_phase(nn.tanh(self.lin_phase(x_phase)), h_phase)
        h_channel = self.gru_channel(
            nn.tanh(self.lin_channel(x_channel)), h_channel)
        out = self.head(nn.add(h_phase, h_channel))
        return out, (h_phase, h_channel)


class ActorNetwork(_DualBranchNet):
    def __init__(self, phase_dim, channel_dim, n_actions, hidden, rng):
        super().__init__(phase_dim, channel_dim, n_actions, hidden, rng,
                         "actor")
        self.n_actions = n_actions


class CriticNetwork(_DualBranchNet):
    def __init__(self, phase_dim, channel_dim, hidden, rng):
        super().__init__(phase_dim, channel_dim, 1, hidden, rng, "critic")


def select_action(actor: ActorNetwork, obs: Observation, hidden,
                  rng: np.random.Generator = None, greedy: bool = False):
    """Sample (or argmax) an action index; returns (idx, log_prob, hidden).

    Hidden states in and out are plain arrays; no graph is built.
    """
    with nn.no_grad():
        logits, (h1, h2) = actor.forward_step(
            obs.phase_part[None, :], obs.channel_part[None, :], hidden)
    if greedy:
        idx = int(np.argmax(logits.data.ravel()))
        log_probs = np.log(nn.softmax_np(logits.data.ravel()))
        logp = float(log_probs[idx])
    else:
        idx, logp, _ = nn.softmax_categorical(logits, rng)
    return idx, logp, (h1.data, h2.data)


# -- rollout storage -------------------------------------------------------


class RolloutBuffer:
    """Fixed-capacity store of one PPO batch of transitions."""

    def __init__(self, capacity, phase_dim, channel_dim, hidden):
        self.capacity = capacity
        self.pos = 0
        self.obs_phase = np.zeros((capacity, phase_dim))
        self.obs_channel = np.zeros((capacity, channel_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.log_probs = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.los_epochs = np.zeros(capacity, dtype=np.int64)
        self.actor_hidden = (np.zeros((capacity, hidden)),
                             np.zeros((capacity, hidden)))
        self.critic_hidden = (np.zeros((capacity, hidden)),
                              np.zeros((capacity, hidden)))

    @property
    def full(self) -> bool:
        return self.pos == self.capacity

    def add(self, obs, action, log_prob, value, reward, los_epoch,
            actor_hidden, critic_hidden):
        i = self.pos
        if i >= self.capacity:
            raise ValueError("rollout buffer full")
        self.obs_phase[i] = obs.phase_part
        self.obs_channel[i] = obs.channel_part
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.values[i] = value
        self.rewards[i] = reward
        self.los_epochs[i] = los_epoch
        self.actor_hidden[0][i] = actor_hidden[0]
        self.actor_hidden[1][i] = actor_hidden[1]
        self.critic_hidden[0][i] = critic_hidden[0]
        self.critic_hidden[1][i] = critic_hidden[1]
        self.pos += 1

    def clear(self):
        self.pos = 0


@dataclass
class PpoHyperparams:
    total_steps: int = 10_000_000
    batch_size: int = 2048
    minibatch_size: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    clip_epsilon: float = 0.2
    entropy_coef: float = 0.01
    update_epochs: int = 10
    hidden_size: int = 64
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if self.batch_size % self.minibatch_size != 0:
            raise ValueError("minibatch_size must divide batch_size")


# -- returns and advantages ------------------------------------------------


def compute_rewards_to_go(rewards, gamma, bootstrap_value=0.0):
    """Discounted returns with a terminal bootstrap at the batch edge."""
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = float(bootstrap_value)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_gae(rewards, values, bootstrap_value, gamma, lam):
    """Generalized advantage estimation via the backward recursion."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must align")
    next_values = np.append(values[1:], bootstrap_value)
    deltas = rewards + gamma * next_values - values
    out = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        out[t] = acc
    return out


def normalize_advantages_minibatch(adv):
    """Standardize over the mini-batch only (mean 0, std 1)."""
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("cannot normalize a mini-batch of size < 2")
    return (adv - adv.mean()) / max(adv.std(), SIGMA_FLOOR)


# -- the update ------------------------------------------------------------


def clip_target(advantage, epsilon):
    """Piecewise clipping bound g(eps, A)."""
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.where(advantage >= 0.0,
                    (1.0 + epsilon) * advantage,
                    (1.0 - epsilon) * advantage)


def _replay_sequence(net, obs_phase, obs_channel, h_start):
    """Re-run a network over a stored sub-sequence; returns (T, out) tensor."""
    hidden = (nn.Tensor(h_start[0][None, :]), nn.Tensor(h_start[1][None, :]))
    outs = []
    for t in range(obs_phase.shape[0]):
        out, hidden = net.forward_step(
            obs_phase[t][None, :], obs_channel[t][None, :], hidden)
        outs.append(out)
    return nn.concat_rows(outs)


def ppo_update(buffer: RolloutBuffer, actor, critic, hp: PpoHyperparams,
               advantages, returns, actor_opt, critic_opt,
               rng: np.random.Generator) -> dict:
    """Entropy-augmented clipped policy update plus critic regression."""
    if not buffer.full:
        raise ValueError("rollout buffer must be full before an update")
    d = buffer.capacity
    n_seq = d // hp.minibatch_size
    diag = {"ratio": [], "clip_fraction": [], "entropy": [],
            "actor_loss": [], "critic_loss": []}
    for _ in range(hp.update_epochs):
        for s in rng.permutation(n_seq):
            lo = s * hp.minibatch_size
            hi = lo + hp.minibatch_size
            op = buffer.obs_phase[lo:hi]
            oc = buffer.obs_channel[lo:hi]
            adv_n = normalize_advantages_minibatch(advantages[lo:hi])

            # actor
            h0 = (buffer.actor_hidden[0][lo], buffer.actor_hidden[1][lo])
            logits = _replay_sequence(actor, op, oc, h0)
            log_p = nn.log_softmax(logits)
            new_logp = nn.take_per_row(log_p, buffer.actions[lo:hi])
            ratio = nn.exp(new_logp + (-buffer.log_probs[lo:hi]))
            surrogate = nn.minimum_of(nn.mul(ratio, adv_n),
                                      clip_target(adv_n, hp.clip_epsilon))
            ent = nn.entropy_from_log_probs(log_p)
            objective = nn.add(nn.mean_all(surrogate),
                               nn.scale(ent, hp.entropy_coef))
            actor_loss = nn.scale(objective, -1.0)
            actor_opt.zero_grad()
            actor_loss.backward()
            actor_opt.step()

            # critic
            hc0 = (buffer.critic_hidden[0][lo], buffer.critic_hidden[1][lo])
            values = _replay_sequence(critic, op, oc, hc0)
            err = values + nn.Tensor(-returns[lo:hi, None])
            critic_loss = nn.mean_all(nn.mul(err, err))
            critic_opt.zero_grad()
            critic_loss.backward()
            critic_opt.step()

            r = ratio.data
            diag["ratio"].append(float(r.mean()))
            diag["clip_fraction"].append(
                float((np.abs(r - 1.0) > hp.clip_epsilon).mean()))
            diag["entropy"].append(float(ent.data))
            diag["actor_loss"].append(float(actor_loss.data))
            diag["critic_loss"].append(float(critic_loss.data))
    return {k: float(np.mean(v)) for k, v in diag.items()}


# -- the training loop -----------------------------------------------------


@dataclass
class PpoGruAgent:
    """Bundles networks, optimizers and shared normalization for training."""

    actor: ActorNetwork
    critic: CriticNetwork
    normalizer: RunningNormalizer
    hp: PpoHyperparams
    actor_opt: nn.Adam = None
    critic_opt: nn.Adam = None
    actor_hidden: tuple = None
    critic_hidden: tuple = None

    @classmethod
    def create(cls, phase_dim, channel_dim, n_actions,
               hp: PpoHyperparams, init_rng: np.random.Generator):
        actor = ActorNetwork(phase_dim, channel_dim, n_actions,
                             hp.hidden_size, init_rng)
        critic = CriticNetwork(phase_dim, channel_dim, hp.hidden_size,
                               init_rng)
        agent = cls(actor=actor, critic=critic,
                    normalizer=RunningNormalizer(phase_dim, channel_dim),
                    hp=hp)
        agent.actor_opt = nn.Adam(actor.parameters(), hp.actor_lr,
                                  max_grad_norm=hp.max_grad_norm)
        agent.critic_opt = nn.Adam(critic.parameters(), hp.critic_lr,
                                   max_grad_norm=hp.max_grad_norm)
        agent.actor_hidden = actor.initial_hidden()
        agent.critic_hidden = critic.initial_hidden()
        return agent

    def named_parameters(self) -> dict:
        named = dict(self.actor.named_parameters())
        named.update(self.critic.named_parameters())
        return named

    def value_of(self, obs: Observation, advance: bool = False) -> float:
        with nn.no_grad():
            v, hidden = self.critic.forward_step(
                obs.phase_part[None, :], obs.channel_part[None, :],
                self.critic_hidden)
        if advance:
            self.critic_hidden = (hidden[0].data, hidden[1].data)
        return float(v.data.ravel()[0])

    def greedy_policy(self, half_width: int):
        """Frozen-statistics greedy policy for evaluation runs."""
        hidden = [self.actor.initial_hidden()]

        def policy(obs: Observation) -> int:
            obs_n = self.normalizer.normalize(obs, update=False)
            idx, _, hidden[0] = select_action(
                self.actor, obs_n, hidden[0], greedy=True)
            return idx - half_width

        return policy


def train(env, agent: PpoGruAgent, total_steps: int, seed: int,
          on_batch=None) -> list:
    """Collect/update loop over `total_steps` environment slots.

    Returns one metrics record per PPO batch. `on_batch`, when given, is
    called with each record as it is produced (streaming CSV export).
    """
    hp = agent.hp
    half_width = env.space.half_width
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9e3779b9]))
    obs_n = normalize_observation(agent.normalizer, env.reset(seed))
    buffer = RolloutBuffer(hp.batch_size, obs_n.phase_part.size,
                           obs_n.channel_part.size, hp.hidden_size)
    trace = []
    n_batches = total_steps // hp.batch_size
    steps_done = 0
    for batch_idx in range(n_batches):
        buffer.clear()
        while not buffer.full:
            actor_h = (agent.actor_hidden[0][0], agent.actor_hidden[1][0])
            critic_h = (agent.critic_hidden[0][0], agent.critic_hidden[1][0])
            value = agent.value_of(obs_n, advance=True)
            idx, logp, agent.actor_hidden = select_action(
                agent.actor, obs_n, agent.actor_hidden, rng)
            next_obs, reward, info = env.step(idx - half_width)
            buffer.add(obs_n, idx, logp, value, reward, info.los_epoch,
                       actor_h, critic_h)
            obs_n = normalize_observation(agent.normalizer, next_obs)
            steps_done += 1
        bootstrap = agent.value_of(obs_n, advance=False)
        returns = compute_rewards_to_go(buffer.rewards, hp.gamma, bootstrap)
        advantages = compute_gae(buffer.rewards, buffer.values, bootstrap,
                                 hp.gamma, hp.gae_lambda)
        diag = ppo_update(buffer, agent.actor, agent.critic, hp,
                          advantages, returns, agent.actor_opt,
                          agent.critic_opt, rng)
        record = {
            "step": steps_done,
            "batch": batch_idx,
            "mean_reward": float(buffer.rewards.mean()),
            "entropy": diag["entropy"],
            "actor_loss": diag["actor_loss"],
            "critic_loss": diag["critic_loss"],
            "clip_fraction": diag["clip_fraction"],
        }
        trace.append(record)
        if on_batch is not None:
            on_batch(record)
    return trace
