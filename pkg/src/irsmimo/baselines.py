"""Benchmark agents sharing the PPO-GRU environment interface.

All baselines act on the same observation layout and the same 2n+1
action set; they differ only in how (or whether) they use the state:
random reflection ignores it, the UCB1 bandit keeps per-arm reward
statistics, double DQN and vanilla PPO use MLPs over the concatenated
normalized observation.
"""

from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .agent import (RunningNormalizer, PpoHyperparams, SIGMA_FLOOR,
                    compute_rewards_to_go, compute_gae, clip_target)
from .env import Observation


def _batch_record(batch_idx, steps, rewards, entropy=0.0, actor_loss=0.0,
                  critic_loss=0.0, clip_fraction=0.0):
    return {
        "step": steps, "batch": batch_idx,
        "mean_reward": float(np.mean(rewards)),
        "entropy": float(entropy), "actor_loss": float(actor_loss),
        "critic_loss": float(critic_loss),
        "clip_fraction": float(clip_fraction),
    }


# -- random reflection -----------------------------------------------------


class RandomAgent:
    """Uniform action selection; the no-information floor."""

    def __init__(self, half_width: int):
        self.half_width = half_width

    def select(self, rng: np.random.Generator) -> int:
        return int(rng.integers(-self.half_width, self.half_width + 1))

    def train(self, env, total_steps: int, seed: int, batch_size: int = 2048,
              on_batch=None) -> list:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        env.reset(seed)
        trace = []
        ent = np.log(2 * self.half_width + 1)
        steps = 0
        for batch_idx in range(total_steps // batch_size):
            rewards = np.empty(batch_size)
            for i in range(batch_size):
                _, rewards[i], _ = env.step(self.select(rng))
                steps += 1
            record = _batch_record(batch_idx, steps, rewards, entropy=ent)
            trace.append(record)
            if on_batch is not None:
                on_batch(record)
        return trace

    def policy(self, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

        def policy(obs: Observation) -> int:
            return self.select(rng)
        return policy


def random_policy(half_width: int, rng: np.random.Generator) -> int:
    return RandomAgent(half_width).select(rng)


# -- UCB1 multi-armed bandit -----------------------------------------------


@dataclass
class BanditState:
    counts: np.ndarray
    means: np.ndarray
    t: int = 0
    c: float = np.sqrt(2.0)


class UcbBanditAgent:
    """Stateless (observation-blind) UCB1 over the action arms."""

    def __init__(self, half_width: int, c: float = np.sqrt(2.0)):
        self.half_width = half_width
        n_arms = 2 * half_width + 1
        self.state = BanditState(counts=np.zeros(n_arms, dtype=np.int64),
                                 means=np.zeros(n_arms), c=c)
        self._last_arm = None

    def select(self) -> int:
        s = self.state
        s.t += 1
        unpulled = np.flatnonzero(s.counts == 0)
        if unpulled.size:
            arm = int(unpulled[0])
        else:
            ucb = s.means + s.c * np.sqrt(np.log(s.t) / s.counts)
            arm = int(np.argmax(ucb))
        self._last_arm = arm
        return arm - self.half_width

    def update(self, reward: float):
        s = self.state
        arm = self._last_arm
        s.counts[arm] += 1
        s.means[arm] += (reward - s.means[arm]) / s.counts[arm]

    def train(self, env, total_steps: int, seed: int, batch_size: int = 2048,
              on_batch=None) -> list:
        env.reset(seed)
        trace = []
        steps = 0
        for batch_idx in range(total_steps // batch_size):
            rewards = np.empty(batch_size)
            for i in range(batch_size):
                k = self.select()
                _, rewards[i], _ = env.step(k)
                self.update(rewards[i])
                steps += 1
            record = _batch_record(batch_idx, steps, rewards)
            trace.append(record)
            if on_batch is not None:
                on_batch(record)
        return trace

    def policy(self, seed: int = 0):
        best = int(np.argmax(self.state.means)) - self.half_width

        def policy(obs: Observation) -> int:
            return best
        return policy


def bandit_select_and_update(agent: UcbBanditAgent, last_reward) -> int:
    """One UCB1 interaction: record last reward (if any), pick the next arm."""
    if last_reward is not None:
        agent.update(last_reward)
    return agent.select()


# -- shared MLP ------------------------------------------------------------


class Mlp:
    """Two tanh hidden layers of `width`, linear output head."""

    def __init__(self, in_size, out_size, width, rng, name):
        self.l1 = nn.LinearLayer(in_size, width, rng, f"{name}.l1")
        self.l2 = nn.LinearLayer(width, width, rng, f"{name}.l2")
        self.head = nn.LinearLayer(width, out_size, rng, f"{name}.head")

    def parameters(self):
        return self.l1.parameters() + self.l2.parameters() + \
            self.head.parameters()

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def __call__(self, x):
        return self.head(nn.tanh(self.l2(nn.tanh(self.l1(x)))))


# -- double DQN ------------------------------------------------------------


@dataclass
class DqnConfig:
    replay_capacity: int = 100_000
    batch_size: int = 64
    gamma: float = 0.99
    lr: float = 3e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 100_000
    target_sync_period: int = 1000
    hidden_size: int = 64


class DqnAgent:
    """Double DQN with replay buffer and periodic target-network sync."""

    def __init__(self, phase_dim, channel_dim, half_width,
                 config: DqnConfig, init_rng: np.random.Generator):
        self.config = config
        self.half_width = half_width
        n_actions = 2 * half_width + 1
        obs_dim = phase_dim + channel_dim
        self.online = Mlp(obs_dim, n_actions, config.hidden_size,
                          init_rng, "dqn.online")
        self.target = Mlp(obs_dim, n_actions, config.hidden_size,
                          init_rng, "dqn.target")
        self.sync_target()
        self.opt = nn.Adam(self.online.parameters(), config.lr)
        self.normalizer = RunningNormalizer(phase_dim, channel_dim)
        cap = config.replay_capacity
        self.replay_obs = np.zeros((cap, obs_dim))
        self.replay_next = np.zeros((cap, obs_dim))
        self.replay_action = np.zeros(cap, dtype=np.int64)
        self.replay_reward = np.zeros(cap)
        self.replay_size = 0
        self.replay_pos = 0
        self.env_steps = 0
        self.updates = 0

    def sync_target(self):
        for src, dst in zip(self.online.parameters(),
                            self.target.parameters()):
            dst.data = src.data.copy()

    def epsilon(self) -> float:
        c = self.config
        frac = min(1.0, self.env_steps / c.epsilon_decay_steps)
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def select(self, obs_vec: np.ndarray, rng: np.random.Generator) -> int:
        n_actions = 2 * self.half_width + 1
        if rng.random() < self.epsilon():
            idx = int(rng.integers(n_actions))
        else:
            with nn.no_grad():
                q = self.online(obs_vec[None, :])
            idx = int(np.argmax(q.data.ravel()))
        return idx

    def double_dqn_targets(self, next_obs: np.ndarray,
                           rewards: np.ndarray) -> np.ndarray:
        """r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
        with nn.no_grad():
            q_online = self.online(next_obs).data
            q_target = self.target(next_obs).data
        best = np.argmax(q_online, axis=1)
        return rewards + self.config.gamma * \
            q_target[np.arange(len(best)), best]

    def observe(self, obs_vec, action, reward, next_vec,
                rng: np.random.Generator) -> float:
        """Store a transition and run one replay update if possible."""
        c = self.config
        i = self.replay_pos
        self.replay_obs[i] = obs_vec
        self.replay_next[i] = next_vec
        self.replay_action[i] = action
        self.replay_reward[i] = reward
        self.replay_pos = (i + 1) % c.replay_capacity
        self.replay_size = min(self.replay_size + 1, c.replay_capacity)
        if self.replay_size < c.batch_size:
            return 0.0
        idx = rng.integers(self.replay_size, size=c.batch_size)
        targets = self.double_dqn_targets(self.replay_next[idx],
                                          self.replay_reward[idx])
        q = self.online(self.replay_obs[idx])
        q_taken = nn.take_per_row(q, self.replay_action[idx])
        err = q_taken + nn.Tensor(-targets)
        loss = nn.mean_all(nn.mul(err, err))
        self.opt.zero_grad()
        loss.backward()
        self.opt.step()
        self.updates += 1
        if self.updates % c.target_sync_period == 0:
            self.sync_target()
        return float(loss.data)

    def train(self, env, total_steps: int, seed: int, batch_size: int = 2048,
              on_batch=None) -> list:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
        obs = env.reset(seed)
        obs_vec = self.normalizer.normalize(obs).concat()
        trace = []
        steps = 0
        for batch_idx in range(total_steps // batch_size):
            rewards = np.empty(batch_size)
            losses = []
            for i in range(batch_size):
                idx = self.select(obs_vec, rng)
                next_obs, reward, _ = env.step(idx - self.half_width)
                next_vec = self.normalizer.normalize(next_obs).concat()
                losses.append(
                    self.observe(obs_vec, idx, reward, next_vec, rng))
                obs_vec = next_vec
                rewards[i] = reward
                self.env_steps += 1
                steps += 1
            record = _batch_record(batch_idx, steps, rewards,
                                   critic_loss=np.mean(losses))
            trace.append(record)
            if on_batch is not None:
                on_batch(record)
        return trace

    def policy(self, seed: int = 0):
        def policy(obs: Observation) -> int:
            vec = self.normalizer.normalize(obs, update=False).concat()
            with nn.no_grad():
                q = self.online(vec[None, :])
            return int(np.argmax(q.data.ravel())) - self.half_width
        return policy


# -- vanilla (non-recurrent) PPO ------------------------------------------


class VanillaPpoAgent:
    """Original PPO: MLP actor/critic on the concatenated observation.

    Differences from the recurrent agent, by design: no GRU branches, no
    structural state split, and advantages normalized over the whole
    batch instead of per mini-batch.
    """

    def __init__(self, phase_dim, channel_dim, half_width,
                 hp: PpoHyperparams, init_rng: np.random.Generator):
        self.hp = hp
        self.half_width = half_width
        n_actions = 2 * half_width + 1
        obs_dim = phase_dim + channel_dim
        self.actor = Mlp(obs_dim, n_actions, hp.hidden_size, init_rng,
                         "vppo.actor")
        self.critic = Mlp(obs_dim, 1, hp.hidden_size, init_rng, "vppo.critic")
        self.actor_opt = nn.Adam(self.actor.parameters(), hp.actor_lr,
                                 max_grad_norm=hp.max_grad_norm)
        self.critic_opt = nn.Adam(self.critic.parameters(), hp.critic_lr,
                                  max_grad_norm=hp.max_grad_norm)
        self.normalizer = RunningNormalizer(phase_dim, channel_dim)

    def select(self, obs_vec: np.ndarray, rng: np.random.Generator):
        with nn.no_grad():
            logits = self.actor(obs_vec[None, :])
        return nn.softmax_categorical(logits, rng)

    def update(self, obs, actions, old_logps, rewards, values, bootstrap,
               rng: np.random.Generator) -> dict:
        hp = self.hp
        returns = compute_rewards_to_go(rewards, hp.gamma, bootstrap)
        adv = compute_gae(rewards, values, bootstrap, hp.gamma, hp.gae_lambda)
        adv = (adv - adv.mean()) / max(adv.std(), SIGMA_FLOOR)  # whole batch
        d = len(rewards)
        diag = {"entropy": [], "actor_loss": [], "critic_loss": [],
                "clip_fraction": []}
        for _ in range(hp.update_epochs):
            order = rng.permutation(d)
            for lo in range(0, d, hp.minibatch_size):
                mb = order[lo:lo + hp.minibatch_size]
                logits = self.actor(obs[mb])
                log_p = nn.log_softmax(logits)
                new_logp = nn.take_per_row(log_p, actions[mb])
                ratio = nn.exp(new_logp + (-old_logps[mb]))
                surrogate = nn.minimum_of(
                    nn.mul(ratio, adv[mb]),
                    clip_target(adv[mb], hp.clip_epsilon))
                ent = nn.entropy_from_log_probs(log_p)
                objective = nn.add(nn.mean_all(surrogate),
                                   nn.scale(ent, hp.entropy_coef))
                actor_loss = nn.scale(objective, -1.0)
                self.actor_opt.zero_grad()
                actor_loss.backward()
                self.actor_opt.step()

                v = self.critic(obs[mb])
                err = v + nn.Tensor(-returns[mb, None])
                critic_loss = nn.mean_all(nn.mul(err, err))
                self.critic_opt.zero_grad()
                critic_loss.backward()
                self.critic_opt.step()

                diag["entropy"].append(float(ent.data))
                diag["actor_loss"].append(float(actor_loss.data))
                diag["critic_loss"].append(float(critic_loss.data))
                diag["clip_fraction"].append(float(
                    (np.abs(ratio.data - 1.0) > hp.clip_epsilon).mean()))
        return {k: float(np.mean(v)) for k, v in diag.items()}

    def train(self, env, total_steps: int, seed: int, on_batch=None) -> list:
        hp = self.hp
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
        obs_vec = self.normalizer.normalize(env.reset(seed)).concat()
        d = hp.batch_size
        obs_buf = np.zeros((d, obs_vec.size))
        actions = np.zeros(d, dtype=np.int64)
        logps = np.zeros(d)
        values = np.zeros(d)
        rewards = np.zeros(d)
        trace = []
        steps = 0
        for batch_idx in range(total_steps // d):
            for i in range(d):
                with nn.no_grad():
                    values[i] = float(self.critic(obs_vec[None, :]).data.ravel()[0])
                idx, logp, _ = self.select(obs_vec, rng)
                next_obs, reward, _ = env.step(idx - self.half_width)
                obs_buf[i] = obs_vec
                actions[i] = idx
                logps[i] = logp
                rewards[i] = reward
                obs_vec = self.normalizer.normalize(next_obs).concat()
                steps += 1
            with nn.no_grad():
                bootstrap = float(self.critic(obs_vec[None, :]).data.ravel()[0])
            diag = self.update(obs_buf, actions, logps, rewards, values,
                               bootstrap, rng)
            record = _batch_record(
                batch_idx, steps, rewards, entropy=diag["entropy"],
                actor_loss=diag["actor_loss"],
                critic_loss=diag["critic_loss"],
                clip_fraction=diag["clip_fraction"])
            trace.append(record)
            if on_batch is not None:
                on_batch(record)
        return trace

    def policy(self, seed: int = 0):
        def policy(obs: Observation) -> int:
            vec = self.normalizer.normalize(obs, update=False).concat()
            with nn.no_grad():
                logits = self.actor(vec[None, :])
            return int(np.argmax(logits.data.ravel())) - self.half_width
        return policy
