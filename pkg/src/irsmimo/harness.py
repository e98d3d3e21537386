"""Experiment orchestration: configs, training runs, comparisons, sweeps.

Configs are YAML with sections `env`, `ppo`, `dqn`, `bandit` and `run`;
unspecified fields fall back to the defaults used throughout (2 users,
2 BS antennas, 32 IRS elements, |A| = 5, batch 2048, mini-batch 64,
gamma 0.99, lambda 0.95, lr 3e-4, clip 0.2, entropy 0.01). Unknown keys
are rejected. Every run is reproducible from (config, seed): metric CSVs
are byte-identical across repeats.

Metric CSV header: step,batch,mean_reward,entropy,actor_loss,critic_loss,
clip_fraction. One file per (algorithm, seed).
"""

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import agent as agent_mod
from . import baselines
from . import channel as ch
from . import nncore as nn
from .agent import PpoGruAgent, PpoHyperparams
from .baselines import DqnAgent, DqnConfig, RandomAgent, UcbBanditAgent, \
    VanillaPpoAgent
from .env import EnvConfig, IrsEnv

ALGORITHMS = ("random", "mab", "ddqn", "ppo", "ppo_gru")
METRIC_HEADER = "step,batch,mean_reward,entropy,actor_loss,critic_loss," \
    "clip_fraction"
EVAL_SEED_OFFSET = 100_000
INIT_STREAM = 7


@dataclass
class RunSettings:
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    steps: int = 200_000
    eval_slots: int = 10_000
    out_dir: str = "runs"
    algorithms: list = field(default_factory=lambda: ["random", "ppo_gru"])
    zero_irs_link: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds list must be nonempty")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(
                    f"unknown algorithm {alg!r}; choose from {ALGORITHMS}")


@dataclass
class BanditSettings:
    exploration_c: float = float(np.sqrt(2.0))


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoHyperparams = field(default_factory=PpoHyperparams)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    bandit: BanditSettings = field(default_factory=BanditSettings)
    run: RunSettings = field(default_factory=RunSettings)


# -- config (de)serialization ----------------------------------------------

_GEOMETRY_VECTORS = ("bs_position", "irs_position", "bs_array_axis",
                     "irs_array_axis", "user_area_center")


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    known_sections = {"env", "ppo", "dqn", "bandit", "run"}
    unknown = set(data) - known_sections
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    env_data = dict(data.get("env") or {})
    geo_data = dict(env_data.pop("geometry", None) or {})
    if geo_data and "user_height_range" in geo_data:
        geo_data["user_height_range"] = tuple(geo_data["user_height_range"])
    geometry = _build_section(ch.SceneGeometry, geo_data, "env.geometry")
    env_cfg = _build_section(EnvConfig, {**env_data, "geometry": geometry},
                             "env")
    return ExperimentConfig(
        env=env_cfg,
        ppo=_build_section(PpoHyperparams, dict(data.get("ppo") or {}), "ppo"),
        dqn=_build_section(DqnConfig, dict(data.get("dqn") or {}), "dqn"),
        bandit=_build_section(BanditSettings, dict(data.get("bandit") or {}),
                              "bandit"),
        run=_build_section(RunSettings, dict(data.get("run") or {}), "run"),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    env = dataclasses.asdict(cfg.env)
    geo = env.pop("geometry")
    for k in _GEOMETRY_VECTORS:
        geo[k] = [float(v) for v in geo[k]]
    geo["user_height_range"] = [float(v) for v in geo["user_height_range"]]
    env["geometry"] = geo
    return {
        "env": env,
        "ppo": dataclasses.asdict(cfg.ppo),
        "dqn": dataclasses.asdict(cfg.dqn),
        "bandit": dataclasses.asdict(cfg.bandit),
        "run": dataclasses.asdict(cfg.run),
    }


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    try:
        return config_from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid config {path}: {exc}") from exc


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


# -- metric files ----------------------------------------------------------


def format_metric_row(record: dict) -> str:
    return (f"{record['step']},{record['batch']},"
            f"{record['mean_reward']:.10g},{record['entropy']:.10g},"
            f"{record['actor_loss']:.10g},{record['critic_loss']:.10g},"
            f"{record['clip_fraction']:.10g}")


def read_metric_trace(path) -> list:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != METRIC_HEADER:
            raise ValueError(f"unexpected metrics header in {path}")
        trace = []
        for line in fh:
            step, batch, *rest = line.strip().split(",")
            rec = dict(zip(
                ("mean_reward", "entropy", "actor_loss", "critic_loss",
                 "clip_fraction"), map(float, rest)))
            rec["step"] = int(step)
            rec["batch"] = int(batch)
            trace.append(rec)
    return trace


# -- agents and runs -------------------------------------------------------


def make_env(cfg: ExperimentConfig) -> IrsEnv:
    return IrsEnv(cfg.env, zero_irs_link=cfg.run.zero_irs_link)


def make_agent(cfg: ExperimentConfig, algorithm: str, seed: int):
    env_cfg = cfg.env
    phase_dim = env_cfg.obs_phase_dim
    channel_dim = env_cfg.obs_channel_dim
    half_width = env_cfg.action_half_width
    init_rng = np.random.default_rng(
        np.random.SeedSequence([seed, INIT_STREAM]))
    if algorithm == "random":
        return RandomAgent(half_width)
    if algorithm == "mab":
        return UcbBanditAgent(half_width, cfg.bandit.exploration_c)
    if algorithm == "ddqn":
        return DqnAgent(phase_dim, channel_dim, half_width, cfg.dqn, init_rng)
    if algorithm == "ppo":
        return VanillaPpoAgent(phase_dim, channel_dim, half_width, cfg.ppo,
                               init_rng)
    if algorithm == "ppo_gru":
        return PpoGruAgent.create(phase_dim, channel_dim,
                                  2 * half_width + 1, cfg.ppo, init_rng)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _save_checkpoint(agent, algorithm: str, path):
    if algorithm == "random":
        return
    if algorithm == "mab":
        nn.save_checkpoint(path, {}, extra={
            "counts": agent.state.counts, "means": agent.state.means})
        return
    if algorithm == "ddqn":
        nn.save_checkpoint(path, agent.online.named_parameters(),
                           extra=agent.normalizer.state_arrays())
        return
    if algorithm == "ppo":
        named = dict(agent.actor.named_parameters())
        named.update(agent.critic.named_parameters())
        nn.save_checkpoint(path, named, extra=agent.normalizer.state_arrays())
        return
    nn.save_checkpoint(path, agent.named_parameters(),
                       extra=agent.normalizer.state_arrays())


def load_agent(cfg: ExperimentConfig, algorithm: str, path):
    """Rebuild an agent and restore parameters from a checkpoint."""
    agent = make_agent(cfg, algorithm, seed=0)
    if algorithm == "random":
        return agent
    params, extra = nn.load_checkpoint(path)
    if algorithm == "mab":
        agent.state.counts = np.array(extra["counts"])
        agent.state.means = np.array(extra["means"])
        return agent
    if algorithm == "ddqn":
        named = agent.online.named_parameters()
    elif algorithm == "ppo":
        named = dict(agent.actor.named_parameters())
        named.update(agent.critic.named_parameters())
    else:
        named = agent.named_parameters()
    for name, p in named.items():
        p.data = np.array(params[name])
    if algorithm == "ddqn":
        agent.sync_target()
    agent.normalizer.load_state_arrays(extra)
    return agent


def run_training(cfg: ExperimentConfig, algorithm: str, seed: int,
                 out_dir=None, steps=None):
    """Train one (algorithm, seed) pair; returns (metrics path, agent).

    The metrics CSV is appended row by row as batches finish, so a
    partial trace survives a failed run.
    """
    out_dir = out_dir or cfg.run.out_dir
    steps = steps or cfg.run.steps
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, f"{algorithm}_seed{seed}.csv")
    env = make_env(cfg)
    agent = make_agent(cfg, algorithm, seed)
    with open(metrics_path, "w") as fh:
        fh.write(METRIC_HEADER + "\n")

        def on_batch(record):
            fh.write(format_metric_row(record) + "\n")
            fh.flush()

        if algorithm == "ppo_gru":
            agent_mod.train(env, agent, steps, seed, on_batch=on_batch)
        elif algorithm in ("random", "mab"):
            agent.train(env, steps, seed, batch_size=cfg.ppo.batch_size,
                        on_batch=on_batch)
        elif algorithm == "ddqn":
            agent.train(env, steps, seed, batch_size=cfg.ppo.batch_size,
                        on_batch=on_batch)
        else:
            agent.train(env, steps, seed, on_batch=on_batch)
    _save_checkpoint(agent, algorithm,
                     os.path.join(out_dir, f"{algorithm}_seed{seed}.npz"))
    return metrics_path, agent


def ensure_training_run(cfg: ExperimentConfig, algorithm: str, seed: int,
                        out_dir, steps=None) -> str:
    """run_training unless a complete metrics CSV is already on disk.

    Because runs are byte-deterministic in (config, seed), a finished
    trace is as good as a fresh one; partial traces are redone.
    """
    steps = steps or cfg.run.steps
    metrics_path = os.path.join(out_dir, f"{algorithm}_seed{seed}.csv")
    want_final = (steps // cfg.ppo.batch_size) * cfg.ppo.batch_size
    if os.path.exists(metrics_path):
        try:
            trace = read_metric_trace(metrics_path)
        except ValueError:
            trace = []
        if trace and trace[-1]["step"] == want_final:
            return metrics_path
    path, _ = run_training(cfg, algorithm, seed, out_dir, steps)
    return path


def ensure_evaluation(cfg: ExperimentConfig, algorithm: str, seed: int,
                      out_dir, steps=None, eval_slots=None) -> float:
    """Greedy-evaluation rate for one (algorithm, seed), cached on disk."""
    eval_path = os.path.join(out_dir, f"{algorithm}_seed{seed}_eval.txt")
    if os.path.exists(eval_path):
        with open(eval_path) as fh:
            return float(fh.read())
    ensure_training_run(cfg, algorithm, seed, out_dir, steps)
    if algorithm == "random":
        agent = make_agent(cfg, algorithm, seed)
    else:
        agent = load_agent(cfg, algorithm,
                           os.path.join(out_dir, f"{algorithm}_seed{seed}.npz"))
    rate = evaluate_agent(cfg, agent, algorithm, seed, eval_slots)
    with open(eval_path, "w") as fh:
        fh.write(f"{rate:.17g}\n")
    return rate


def greedy_policy_for(agent, algorithm: str, cfg: ExperimentConfig,
                      eval_seed: int):
    if algorithm == "random":
        return agent.policy(eval_seed)
    if algorithm == "ppo_gru":
        return agent.greedy_policy(cfg.env.action_half_width)
    return agent.policy()


def evaluate_agent(cfg: ExperimentConfig, agent, algorithm: str,
                   seed: int, eval_slots=None) -> float:
    """Greedy evaluation over fresh held-out slots; returns the mean rate."""
    eval_slots = eval_slots or cfg.run.eval_slots
    eval_seed = EVAL_SEED_OFFSET + seed
    env = make_env(cfg)
    policy = greedy_policy_for(agent, algorithm, cfg, eval_seed)
    return env.evaluate_policy(policy, eval_slots, eval_seed)


def mean_ci(values, z: float = 1.96):
    """(mean, std, 95% half-width) across seeds."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    half = z * std / np.sqrt(values.size) if values.size > 1 else 0.0
    return mean, std, half


def run_comparison(cfg: ExperimentConfig, out_dir=None, steps=None) -> dict:
    """Train and evaluate every selected algorithm over every seed.

    The random baseline is always included. Returns
    {algorithm: {"per_seed": {seed: rate}, "mean": m, "std": s, "ci95": h}}
    and writes a plain-text summary to the output directory.
    """
    out_dir = out_dir or cfg.run.out_dir
    algorithms = list(cfg.run.algorithms)
    if "random" not in algorithms:
        algorithms.insert(0, "random")
    summary = {}
    for algorithm in algorithms:
        per_seed = {}
        for seed in cfg.run.seeds:
            _, agent = run_training(cfg, algorithm, seed, out_dir, steps)
            per_seed[seed] = evaluate_agent(cfg, agent, algorithm, seed)
        mean, std, half = mean_ci(list(per_seed.values()))
        summary[algorithm] = {"per_seed": per_seed, "mean": mean,
                              "std": std, "ci95": half}
    _write_summary(summary, os.path.join(out_dir, "comparison_summary.txt"))
    return summary


def _write_summary(summary: dict, path):
    lines = ["algorithm mean_rate std ci95_halfwidth per_seed"]
    for alg, row in summary.items():
        per_seed = " ".join(f"{s}:{v:.6g}" for s, v in row["per_seed"].items())
        lines.append(f"{alg} {row['mean']:.6g} {row['std']:.6g} "
                     f"{row['ci95']:.6g} {per_seed}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- action-space size sweep -----------------------------------------------


def plateau_stats(trace: list, tail_fraction: float = 0.1,
                  smooth_window: int = 5):
    """(plateau rate, steps to reach 90% of own plateau) for one trace."""
    rewards = np.array([rec["mean_reward"] for rec in trace])
    steps = np.array([rec["step"] for rec in trace])
    tail = max(1, int(round(tail_fraction * len(rewards))))
    plateau = float(rewards[-tail:].mean())
    kernel = np.ones(smooth_window) / smooth_window
    smoothed = np.convolve(rewards, kernel, mode="valid")
    smoothed_steps = steps[smooth_window - 1:]
    reached = np.flatnonzero(smoothed >= 0.9 * plateau)
    convergence_step = int(smoothed_steps[reached[0]]) if reached.size \
        else int(steps[-1])
    return plateau, convergence_step


def run_action_space_sweep(cfg: ExperimentConfig, sizes=(3, 5, 11),
                           out_dir=None, steps=None) -> dict:
    """Train PPO-GRU per action-space size per seed; summarize plateaus."""
    for size in sizes:
        if size < 1 or size % 2 == 0:
            raise ValueError(f"action-space sizes must be odd and >= 1: {size}")
    out_dir = out_dir or cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    summary = {}
    for size in sizes:
        half_width = (size - 1) // 2
        env_cfg = dataclasses.replace(cfg.env, action_half_width=half_width)
        sized = dataclasses.replace(cfg, env=env_cfg)
        rows = []
        for seed in cfg.run.seeds:
            sub_dir = os.path.join(out_dir, f"A{size}")
            path, _ = run_training(sized, "ppo_gru", seed, sub_dir, steps)
            plateau, conv = plateau_stats(read_metric_trace(path))
            rows.append({"seed": seed, "plateau": plateau,
                         "convergence_step": conv})
        summary[size] = rows
    lines = ["action_space_size seed plateau_rate convergence_step"]
    for size, rows in summary.items():
        for row in rows:
            lines.append(f"{size} {row['seed']} {row['plateau']:.6g} "
                         f"{row['convergence_step']}")
    with open(os.path.join(out_dir, "sweep_summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return summary
