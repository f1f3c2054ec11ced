"""The two human-designed baselines on one case, then a small bias/SD grid
showing how positioning noise degrades them.
"""

import numpy as np

from bioptx import AnatomySpec, BiopsyEnv, EnvConfig, generate_synthetic
from bioptx.metrics import aggregate, episode_metrics
from bioptx.strategies import Perturbation, scout_candidates, scout_episode, sweep_episode

spec = AnatomySpec(lesion_volume_cc=0.4, lesion_center_mm=(5.0, 25.0, 45.0))
vol = generate_synthetic(spec)


def show(name, log):
    m = episode_metrics(log)
    holes = [(n.i, n.j) for n in log.needles]
    print(f"{name}: fired {m.needles_fired} at {holes}")
    print(f"   HR {m.hr_pct:.0f}%  CCL {m.ccl_mm:.1f}mm  NA {m.na_mm2:.1f}mm^2")


env = BiopsyEnv(vol, EnvConfig(seed=1))
env.reset()
show("sweep", sweep_episode(env, Perturbation(), np.random.default_rng(2)))

env = BiopsyEnv(vol, EnvConfig(seed=1))
env.reset()
print(f"\nscout candidates: {scout_candidates(env)}")
show("scout", scout_episode(env, Perturbation(), np.random.default_rng(2)))

print("\nbias/SD grid (10 episodes per cell):")
print(f"{'strategy':>8} {'bias':>4} {'sd':>4} {'HR%':>12} {'NA mm^2':>12}")
for strategy, run in (("sweep", sweep_episode), ("scout", scout_episode)):
    for bias, sd in ((0.0, 0.0), (0.0, 5.0), (5.0, 5.0), (0.0, 10.0)):
        mets = []
        for rep in range(10):
            env = BiopsyEnv(vol, EnvConfig(seed=100 + rep))
            env.reset()
            log = run(env, Perturbation(bias_mm=bias, sd_mm=sd),
                      np.random.default_rng(200 + rep))
            if log.needles:
                mets.append(episode_metrics(log))
        agg = aggregate(mets)
        print(f"{strategy:>8} {bias:>4.0f} {sd:>4.0f} "
              f"{agg['hr_pct_mean']:6.1f}±{agg['hr_pct_sd']:<5.1f} "
              f"{agg['na_mm2_mean']:6.1f}±{agg['na_mm2_sd']:<5.1f}")
