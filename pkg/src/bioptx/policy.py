"""Gaussian policy + value network and PPO trainer, written from scratch on
numpy: hand-derived backprop, from-scratch Adam, clipped surrogate objective,
GAE advantages, and checkpoint selection by periodic 10-episode evaluations.

Network: flattened observation (2*64*64 planes + 2 grid coords = 8194)
-> 128 relu -> 128 relu -> {tanh-squashed action mean scaled to ±15,
state-independent learnable log-std, scalar value head}.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

ACTION_SCALE = 15.0
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
LOG_2PI = math.log(2.0 * math.pi)

# Input embedding: the ~10^3 active plane pixels would otherwise drown the
# two grid coordinates, which carry the navigation signal. Planes are scaled
# down, grid coords recentered to [-1, 1] and scaled up.
PLANE_SCALE = 1.0 / 16.0
GRID_SCALE = 4.0

PARAM_ORDER = ("W1", "b1", "W2", "b2", "Wm", "bm", "Wv", "bv", "log_std")


def featurize(obs) -> np.ndarray:
    """Policy input vector from an Observation (same 8194 length as
    ``obs.as_vector()``, rebalanced for training)."""
    x = obs.as_vector()
    x[:-2] *= PLANE_SCALE
    x[-2:] = (2.0 * x[-2:] - 1.0) * GRID_SCALE
    return x


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rollout_steps: int = 2048
    minibatch: int = 256
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5    # global-norm gradient clip
    target_kl: float | None = 0.05  # stop the update round when exceeded
    total_episodes: int = 20000
    eval_every: int = 500         # episodes between checkpoint evaluations
    eval_episodes: int = 10
    hidden: int = 128
    log_std_init: float = 0.7
    ratio_abort: float = 1e3

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_eps <= 0 or self.lr <= 0:
            raise ValueError("clip_eps and lr must be > 0")

    def hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class PolicyParams:
    """Weight arrays keyed by name; optimizer moments ride along untouched by
    forward/backward code."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = arrays
        self.opt_state: dict | None = None

    @classmethod
    def init(cls, input_dim: int, hidden: int = 128, action_dim: int = 2,
             rng: np.random.Generator | None = None, dtype=np.float32,
             log_std_init: float = 0.7) -> "PolicyParams":
        rng = rng or np.random.default_rng(0)
        def he(fan_in, shape):
            return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)
        arrays = {
            "W1": he(input_dim, (hidden, input_dim)),
            "b1": np.zeros(hidden, dtype=dtype),
            "W2": he(hidden, (hidden, hidden)),
            "b2": np.zeros(hidden, dtype=dtype),
            "Wm": (rng.standard_normal((action_dim, hidden)) * 0.01).astype(dtype),
            "bm": np.zeros(action_dim, dtype=dtype),
            "Wv": (rng.standard_normal((1, hidden)) * 0.01).astype(dtype),
            "bv": np.zeros(1, dtype=dtype),
            "log_std": np.full(action_dim, log_std_init, dtype=dtype),
        }
        return cls(arrays)

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams({k: v.astype(dtype) for k, v in self.arrays.items()})

    def check_finite(self):
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite weights in {k}")


def _forward_cached(params: PolicyParams, x: np.ndarray):
    """Batched forward pass keeping intermediates for backprop."""
    p = params.arrays
    z1 = x @ p["W1"].T + p["b1"]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ p["W2"].T + p["b2"]
    h2 = np.maximum(z2, 0.0)
    m_pre = h2 @ p["Wm"].T + p["bm"]
    tanh_m = np.tanh(m_pre)
    mu = ACTION_SCALE * tanh_m
    v = (h2 @ p["Wv"].T + p["bv"])[:, 0]
    log_std = np.clip(p["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    cache = {"x": x, "z1": z1, "h1": h1, "z2": z2, "h2": h2, "tanh_m": tanh_m}
    return mu, log_std, v, cache


def forward(params: PolicyParams, obs: np.ndarray):
    """(mu, log_std, value) for one observation vector or a batch."""
    x = np.atleast_2d(np.asarray(obs))
    mu, log_std, v, _ = _forward_cached(params, x)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(v))):
        raise FloatingPointError("non-finite policy output (NaN weights?)")
    if np.asarray(obs).ndim == 1:
        return mu[0], log_std, float(v[0])
    return mu, log_std, v


def gaussian_logp(actions: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over action dims."""
    z = (actions - mu) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - mu.shape[-1] * 0.5 * LOG_2PI


def sample_action(mu, log_std, rng: np.random.Generator, return_raw: bool = False):
    """Gaussian sample clipped to the ±15 grid-delta range, with the log-prob
    of the pre-clip sample. ``return_raw`` also yields the unclipped draw
    (what the trainer stores so importance ratios stay exact)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.exp(np.asarray(log_std, dtype=float))
    raw = mu + sigma * rng.standard_normal(mu.shape)
    logp = float(gaussian_logp(raw, mu, np.asarray(log_std, dtype=float)))
    clipped = np.clip(raw, -ACTION_SCALE, ACTION_SCALE)
    if return_raw:
        return clipped, logp, raw
    return clipped, logp


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """G_t = sum_k gamma^k R_{t+k} over one terminated episode."""
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Raw generalized-advantage recursion for one terminated episode
    (terminal bootstrap 0). Batch normalization happens in ppo_update."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must align")
    adv = np.zeros_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < len(values) else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


# ---------------------------------------------------------------------------
# PPO loss with hand-derived gradients.

def ppo_loss_and_grads(params: PolicyParams, batch: dict, cfg: TrainConfig):
    """Clipped-surrogate PPO loss on one minibatch and its exact gradients.

    batch: obs (B,D) float, actions (B,2), logp_old (B,), adv (B,) already
    normalized, returns (B,).
    """
    x = batch["obs"]
    a = batch["actions"]
    adv = batch["adv"]
    ret = batch["returns"]
    B = x.shape[0]

    mu, log_std, v, cache = _forward_cached(params, x)
    sigma = np.exp(log_std)
    z = (a - mu) / sigma
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - mu.shape[1] * 0.5 * LOG_2PI
    # exponent clamp keeps runaway ratios finite; anything near the clamp is
    # far past ratio_abort and the update is discarded anyway
    ratio = np.exp(np.clip(logp - batch["logp_old"], -60.0, 60.0))

    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    surr1 = ratio * adv
    surr2 = np.clip(ratio, lo, hi) * adv
    pg_loss = -np.mean(np.minimum(surr1, surr2))
    v_err = v - ret
    v_loss = np.mean(v_err * v_err)
    entropy = float(np.sum(log_std) + mu.shape[1] * 0.5 * (LOG_2PI + 1.0))
    loss = pg_loss + cfg.value_coef * v_loss - cfg.entropy_coef * entropy

    # d loss / d ratio: only through whichever branch min() selected, and the
    # clipped branch transmits gradient only inside [lo, hi].
    pick1 = surr1 <= surr2
    inside = (ratio > lo) & (ratio < hi)
    dratio = np.where(pick1, adv, np.where(inside, adv, 0.0)) * (-1.0 / B)
    dlogp = dratio * ratio

    dmu = dlogp[:, None] * z / sigma
    dlogstd_pg = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    # gradient as if unclamped; the post-update clip keeps log_std in range
    dlog_std = dlogstd_pg - cfg.entropy_coef * np.ones_like(log_std)

    dv = cfg.value_coef * 2.0 * v_err / B

    p = params.arrays
    dm_pre = dmu * ACTION_SCALE * (1.0 - cache["tanh_m"] ** 2)
    dh2 = dm_pre @ p["Wm"] + dv[:, None] * p["Wv"]
    dz2 = dh2 * (cache["z2"] > 0)
    dh1 = dz2 @ p["W2"]
    dz1 = dh1 * (cache["z1"] > 0)

    grads = {
        "W1": dz1.T @ cache["x"],
        "b1": dz1.sum(axis=0),
        "W2": dz2.T @ cache["h1"],
        "b2": dz2.sum(axis=0),
        "Wm": dm_pre.T @ cache["h2"],
        "bm": dm_pre.sum(axis=0),
        "Wv": (dv[:, None].T @ cache["h2"]),
        "bv": np.array([dv.sum()]),
        "log_std": dlog_std,
    }
    stats = {
        "loss": float(loss),
        "pg_loss": float(pg_loss),
        "v_loss": float(v_loss),
        "entropy": entropy,
        "mean_ratio": float(np.mean(ratio)),
        "max_ratio": float(np.max(ratio)),
        "approx_kl": float(np.mean(batch["logp_old"] - logp)),
    }
    return float(loss), grads, stats


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def adam_step(params: PolicyParams, grads: dict, cfg: TrainConfig):
    """In-place adaptive-moment update; moments live on the params object."""
    if params.opt_state is None:
        params.opt_state = {
            "t": 0,
            "m": {k: np.zeros_like(v) for k, v in params.arrays.items()},
            "v": {k: np.zeros_like(v) for k, v in params.arrays.items()},
        }
    st = params.opt_state
    st["t"] += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** st["t"]
    bc2 = 1.0 - b2 ** st["t"]
    for k, w in params.arrays.items():
        g = grads[k].astype(w.dtype)
        st["m"][k] = b1 * st["m"][k] + (1 - b1) * g
        st["v"][k] = b2 * st["v"][k] + (1 - b2) * g * g
        m_hat = st["m"][k] / bc1
        v_hat = st["v"][k] / bc2
        w -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(w.dtype)
    np.clip(params.arrays["log_std"], LOG_STD_MIN, LOG_STD_MAX,
            out=params.arrays["log_std"])


def ppo_update(params: PolicyParams, batch: dict, cfg: TrainConfig,
               rng: np.random.Generator) -> dict:
    """Minibatched clipped-surrogate epochs over one rollout batch. Advantages
    are normalized here, once per batch. Aborts (leaving params as they are)
    if the importance ratio explodes."""
    adv = batch["adv"]
    batch = dict(batch)
    batch["adv"] = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(adv)
    stats = {"aborted": False, "updates": 0}
    last = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            mb = {k: v[idx] for k, v in batch.items()}
            loss, grads, last = ppo_loss_and_grads(params, mb, cfg)
            if last["max_ratio"] > cfg.ratio_abort:
                stats["aborted"] = True
                stats.update(last)
                return stats
            if cfg.target_kl is not None and last["approx_kl"] > cfg.target_kl:
                stats.update(last)
                return stats
            clip_grad_norm(grads, cfg.max_grad_norm)
            adam_step(params, grads, cfg)
            stats["updates"] += 1
    stats.update(last)
    return stats


def grad_check(params: PolicyParams, loss_and_grads, probes: int = 100,
               rng: np.random.Generator | None = None, h: float = 1e-4,
               min_grad: float = 1e-8, branches=None) -> float:
    """Max relative error between analytic gradients and central finite
    differences at randomly probed weights. ``loss_and_grads(params)`` must
    be deterministic and return (loss, grads dict).

    Probes with |gradient| < min_grad are skipped. When a ``branches``
    callback is given (params -> hashable signature of every relu/clip/min
    branch decision), probes that flip any branch inside [w-h, w+h] are also
    skipped: the loss is only piecewise smooth and a central difference
    across a kink is not a derivative.
    """
    rng = rng or np.random.default_rng(0)
    _, grads = loss_and_grads(params)
    names = [k for k in PARAM_ORDER if k in params.arrays]
    sizes = np.array([params.arrays[k].size for k in names], dtype=float)
    worst = 0.0
    for _ in range(probes):
        k = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
        flat_idx = int(rng.integers(params.arrays[k].size))
        idx = np.unravel_index(flat_idx, params.arrays[k].shape)
        g = float(np.asarray(grads[k])[idx])
        if abs(g) < min_grad:
            continue
        orig = params.arrays[k][idx]
        if branches is not None:
            sigs = set()
            for step in (0.0, h, -h, 2 * h, -2 * h):
                params.arrays[k][idx] = orig + step
                sigs.add(branches(params))
            params.arrays[k][idx] = orig
            if len(sigs) > 1:
                continue

        def eval_at(step):
            params.arrays[k][idx] = orig + step
            loss, _ = loss_and_grads(params)
            params.arrays[k][idx] = orig
            return loss

        # 5-point central stencil: truncation O(h^4) instead of O(h^2)
        fd = (-eval_at(2 * h) + 8 * eval_at(h)
              - 8 * eval_at(-h) + eval_at(-2 * h)) / (12.0 * h)
        worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), min_grad))
    return worst


def ppo_branch_signature(params: PolicyParams, batch: dict, cfg: TrainConfig) -> bytes:
    """Every branch decision the PPO loss makes on this batch (relu signs,
    clip interval membership, min() side), for grad_check probe validation."""
    mu, log_std, v, cache = _forward_cached(params, batch["obs"])
    sigma = np.exp(log_std)
    z = (batch["actions"] - mu) / sigma
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - mu.shape[1] * 0.5 * LOG_2PI
    ratio = np.exp(np.clip(logp - batch["logp_old"], -60.0, 60.0))
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    surr1 = ratio * batch["adv"]
    surr2 = np.clip(ratio, lo, hi) * batch["adv"]
    return ((cache["z1"] > 0).tobytes() + (cache["z2"] > 0).tobytes()
            + ((ratio > lo) & (ratio < hi)).tobytes()
            + (surr1 <= surr2).tobytes())


# ---------------------------------------------------------------------------
# Rollouts, evaluation, and the training loop.

@dataclass
class Trajectory:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)


def run_episode(params: PolicyParams, env, rng: np.random.Generator,
                deterministic: bool = False) -> Trajectory:
    """One full episode; actions from the policy (mean only if deterministic).
    The trajectory stores the pre-clip draw — the env clamps to ±15 itself —
    so recomputed log-probs match exactly."""
    traj = Trajectory()
    obs = env.reset()
    while not env.terminated:
        x = featurize(obs)
        mu, log_std, v = forward(params, x)
        if deterministic:
            action, logp = np.asarray(mu, dtype=float), float(gaussian_logp(mu, mu, log_std))
        else:
            _, logp, action = sample_action(mu, log_std, rng, return_raw=True)
        result = env.step(action)
        traj.obs.append(x)
        traj.actions.append(action)
        traj.logps.append(logp)
        traj.rewards.append(result.reward)
        traj.values.append(v)
        obs = result.observation
    return traj


def collect_rollout(params: PolicyParams, env, cfg: TrainConfig,
                    rng: np.random.Generator):
    """Whole episodes until at least ``rollout_steps`` transitions, assembled
    into one update batch with raw-GAE advantages. ``logp_old`` is recomputed
    in one batched pass so first-epoch importance ratios are exactly 1."""
    obs, actions, adv, rets = [], [], [], []
    episodes = 0
    total_rewards = []
    while len(obs) < cfg.rollout_steps:
        traj = run_episode(params, env, rng)
        a = gae(traj.rewards, traj.values, cfg.gamma, cfg.gae_lambda)
        g = a + np.asarray(traj.values)      # GAE-lambda returns for the value head
        obs.extend(traj.obs)
        actions.extend(traj.actions)
        adv.extend(a)
        rets.extend(g)
        episodes += 1
        total_rewards.append(float(np.sum(traj.rewards)))
    x = np.asarray(obs, dtype=np.float32)
    acts = np.asarray(actions, dtype=np.float64)
    mu, log_std, _ = forward(params, x)
    batch = {
        "obs": x,
        "actions": acts,
        "logp_old": gaussian_logp(acts, mu, log_std).astype(np.float64),
        "adv": np.asarray(adv, dtype=np.float64),
        "returns": np.asarray(rets, dtype=np.float64),
    }
    return batch, episodes, float(np.mean(total_rewards))


def evaluate_policy(params: PolicyParams, env, episodes: int,
                    rng: np.random.Generator | None = None,
                    deterministic: bool = True):
    """(mean total reward, hit-rate %, episode logs) over fresh episodes."""
    rng = rng or np.random.default_rng(0)
    rewards, logs = [], []
    fired = hits = 0
    for _ in range(episodes):
        traj = run_episode(params, env, rng, deterministic=deterministic)
        rewards.append(float(np.sum(traj.rewards)))
        logs.append(env.log)
        for n in env.log.needles:
            fired += 1
            hits += int(n.hit)
    hr = 100.0 * hits / fired if fired else 0.0
    return float(np.mean(rewards)), hr, logs


def random_policy_reward(env, episodes: int, rng: np.random.Generator) -> float:
    """Mean total reward of a uniform-random policy over ±15 actions."""
    totals = []
    for _ in range(episodes):
        env.reset()
        total = 0.0
        while not env.terminated:
            total += env.step(rng.uniform(-ACTION_SCALE, ACTION_SCALE, 2)).reward
        totals.append(total)
    return float(np.mean(totals))


@dataclass
class TrainResult:
    best_params: PolicyParams
    final_params: PolicyParams
    curve: list[dict]             # {episode, eval_mean_reward, hr}
    episodes: int
    best_eval_reward: float


def train(env_factory, cfg: TrainConfig = TrainConfig(),
          seed: int = 0, verbose: bool = False,
          stop_eval_reward: float | None = None) -> TrainResult:
    """Collect/update loop with periodic deterministic evaluation; keeps the
    checkpoint with the highest 10-episode mean reward. ``env_factory()``
    must yield a fresh environment per call."""
    rng = np.random.default_rng(seed)
    env = env_factory()
    input_dim = featurize(env.reset(seed=int(rng.integers(2 ** 31)))).shape[0]
    params = PolicyParams.init(input_dim, cfg.hidden, 2, rng,
                               log_std_init=cfg.log_std_init)

    eval_env = env_factory()
    best = params.copy()
    best_reward = -np.inf
    curve = []
    episodes = next_eval = 0

    while episodes < cfg.total_episodes:
        batch, n_eps, mean_r = collect_rollout(params, env, cfg, rng)
        stats = ppo_update(params, batch, cfg, rng)
        if not np.isfinite(stats.get("loss", 0.0)):
            raise FloatingPointError("NaN loss during PPO update")
        params.check_finite()
        episodes += n_eps

        if episodes >= next_eval:
            eval_env.reset(seed=100_000 + len(curve))
            eval_rng = np.random.default_rng(200_000 + len(curve))
            eval_r, hr, _ = evaluate_policy(params, eval_env, cfg.eval_episodes,
                                            eval_rng)
            curve.append({"episode": episodes, "eval_mean_reward": eval_r, "hr": hr})
            if eval_r > best_reward:
                best_reward = eval_r
                best = params.copy()
            if verbose:
                print(f"episode {episodes:>7d}  rollout_r {mean_r:7.2f}  "
                      f"eval_r {eval_r:7.2f}  hr {hr:5.1f}%  "
                      f"kl {stats.get('approx_kl', 0):.4f}")
            next_eval += cfg.eval_every
            if stop_eval_reward is not None and eval_r >= stop_eval_reward:
                break
    return TrainResult(best, params, curve, episodes, float(best_reward))


# ---------------------------------------------------------------------------
# Checkpoints: u32-LE length-prefixed JSON header (shapes, cfg hash, dtype)
# followed by the concatenated float32-LE weights in PARAM_ORDER.

def save_policy(params: PolicyParams, path, cfg_hash: str = ""):
    header = {
        "shapes": {k: list(params.arrays[k].shape) for k in PARAM_ORDER},
        "dtype": "float32",
        "cfg_hash": cfg_hash,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        for k in PARAM_ORDER:
            f.write(params.arrays[k].astype("<f4").tobytes())


def load_policy(path) -> tuple[PolicyParams, str]:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        arrays = {}
        for k in PARAM_ORDER:
            shape = tuple(header["shapes"][k])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * n)
            arrays[k] = np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)
    return PolicyParams(arrays), header.get("cfg_hash", "")


def write_curve_csv(curve: list[dict], path):
    with open(path, "w") as f:
        f.write("episode,eval_mean_reward,hr\n")
        for row in curve:
            f.write(f"{row['episode']},{row['eval_mean_reward']},{row['hr']}\n")
