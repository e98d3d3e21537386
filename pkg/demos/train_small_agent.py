"""Train a small recurrent PPO agent and compare it to random play.

Uses a reduced scene (8 IRS elements) and short batches so the whole
script finishes in about a minute on one CPU core. Artifacts (metrics
CSV and checkpoint) land in demos_out/. Run with
`python demos/train_small_agent.py`.
"""

from irsmimo import harness

OUT = "demos_out"

cfg = harness.config_from_dict({
    "env": {"n_irs_elements": 8},
    "ppo": {"batch_size": 256, "minibatch_size": 64, "hidden_size": 32},
    "run": {"seeds": [1], "steps": 5120, "eval_slots": 2000},
})

print("training the random baseline ...")
path, rand_agent = harness.run_training(cfg, "random", seed=1, out_dir=OUT)
rand_rate = harness.evaluate_agent(cfg, rand_agent, "random", seed=1)

print("training recurrent PPO (20 batches of 256 slots) ...")
path, agent = harness.run_training(cfg, "ppo_gru", seed=1, out_dir=OUT)
trace = harness.read_metric_trace(path)
print("  batch  mean_reward  entropy  clip_fraction")
for rec in trace[::4] + [trace[-1]]:
    print(f"  {rec['batch']:5d}  {rec['mean_reward']:11.3f}"
          f"  {rec['entropy']:7.3f}  {rec['clip_fraction']:13.3f}")

ppo_rate = harness.evaluate_agent(cfg, agent, "ppo_gru", seed=1)
print(f"\ngreedy evaluation over 2000 held-out slots:")
print(f"  random reflection: {rand_rate:.3f} bit/s/Hz")
print(f"  recurrent PPO:     {ppo_rate:.3f} bit/s/Hz")

# The checkpoint written by run_training restores to the same policy.
loaded = harness.load_agent(cfg, "ppo_gru", f"{OUT}/ppo_gru_seed1.npz")
again = harness.evaluate_agent(cfg, loaded, "ppo_gru", seed=1)
assert again == ppo_rate
print(f"  reloaded from checkpoint: {again:.3f} (identical)")
