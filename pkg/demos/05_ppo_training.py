"""Train the from-scratch PPO agent on an easy case and watch it beat a
random policy. A short run, sized for a coffee break, not a result."""

import numpy as np

from bioptx import AnatomySpec, BiopsyEnv, EnvConfig, generate_synthetic
from bioptx.policy import (TrainConfig, evaluate_policy, random_policy_reward,
                           train)

spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
vol = generate_synthetic(spec)
env_cfg = EnvConfig(noise_sd_mm=0.0)


def factory():
    return BiopsyEnv(vol, env_cfg, "demo")


tc = TrainConfig(total_episodes=3000, rollout_steps=1024, eval_every=300,
                 minibatch=256, lr=3e-4)
result = train(factory, tc, seed=11, verbose=True)

print("\nreward curve (episode, eval mean reward, HR%):")
for row in result.curve:
    print(f"  {row['episode']:>6} {row['eval_mean_reward']:>7.2f} {row['hr']:>6.1f}")

env = factory()
env.reset(seed=505)
mean_r, hr, _ = evaluate_policy(result.best_params, env, 30, np.random.default_rng(7))
env2 = factory()
env2.reset(seed=606)
rand_r = random_policy_reward(env2, 30, np.random.default_rng(8))
print(f"\nbest checkpoint over 30 deterministic episodes: "
      f"reward {mean_r:.2f}, HR {hr:.1f}%")
print(f"uniform-random policy: reward {rand_r:.2f}")
