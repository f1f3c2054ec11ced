"""Step through one episode by hand: a scripted approach to the target,
then repeated firing until the hit quota ends the episode.
"""

import numpy as np

from bioptx import AnatomySpec, BiopsyEnv, EnvConfig, generate_synthetic
from bioptx.metrics import episode_metrics

spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
vol = generate_synthetic(spec)
env = BiopsyEnv(vol, EnvConfig(seed=7), case_id="demo")

obs = env.reset()
print(f"start hole {obs.grid}, observed-lesion offset "
      f"{np.round(env.log.noise_offset_mm, 2)} mm")
print(f"{'t':>2} {'hole':>8} {'reward':>6} {'hit':>5} {'ccl':>6} {'dist':>6}")

target = (7, 5)          # the hole over the true lesion
while not env.terminated:
    i, j = env.position
    step = env.step((np.clip(target[0] - i, -2, 2), np.clip(target[1] - j, -2, 2)))
    n = step.info["needle"]
    print(f"{n.step:>2} {str((n.i, n.j)):>8} {step.reward:>6.1f} "
          f"{str(n.hit):>5} {n.ccl_mm:>6.2f} {step.info['dist_mm']:>6.2f}")

print(f"\nterminated: {step.info['termination_reason']}, "
      f"total reward {env.log.total_reward:.1f}")
m = episode_metrics(env.log)
print(f"episode metrics: HR {m.hr_pct:.0f}%, CCL {m.ccl_mm:.1f}mm "
      f"(max {m.ccl_max_mm:.1f}), NA {m.na_mm2:.1f} mm^2")
print("\nJSON-lines log:")
print(env.log.to_jsonl())
