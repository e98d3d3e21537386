"""Tiny end-to-end comparison of every implemented algorithm.

Trains random reflection, a UCB1 bandit, double DQN, vanilla PPO and
recurrent PPO on a reduced scene, then evaluates each greedy policy on
held-out slots. This is the same pipeline the `irsmimo compare` CLI
command drives; at this scale it takes a few minutes, so treat the
ordering as illustrative rather than significant. Run with
`python demos/compare_all_algorithms.py`.
"""

from irsmimo import harness

cfg = harness.config_from_dict({
    "env": {"n_irs_elements": 8},
    "ppo": {"batch_size": 256, "minibatch_size": 64, "hidden_size": 32},
    "dqn": {"hidden_size": 32, "epsilon_decay_steps": 2000},
    "run": {"seeds": [1, 2], "steps": 2560, "eval_slots": 1000,
            "algorithms": ["mab", "ddqn", "ppo", "ppo_gru"]},
})

summary = harness.run_comparison(cfg, out_dir="demos_out/compare")
print("\nalgorithm    mean rate   95% CI half-width   per seed")
for alg, row in summary.items():
    per_seed = "  ".join(f"{v:.3f}" for v in row["per_seed"].values())
    print(f"{alg:10s}  {row['mean']:9.3f}   {row['ci95']:17.3f}   {per_seed}")
print("\nfull summary written to demos_out/compare/comparison_summary.txt")
