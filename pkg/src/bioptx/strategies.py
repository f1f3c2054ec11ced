"""Human-designed baselines: column sweeping and candidate scouting, each with
the bias/SD positioning-noise model used for the operator-variance grid.

Both baselines read only the observed (noise-shifted) lesion, fire every
needle through the environment's step so rewards/termination stay authoritative,
and never place more than five needles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anatomy import LESION, PROSTATE
from .env import BiopsyEnv, EpisodeLog
from .geometry import DEFAULT_GRID, needle_line, line_intersects_mask, plane_angle


@dataclass(frozen=True)
class Perturbation:
    """Systematic bias plus Gaussian scatter applied to chosen positions,
    in template-plane world mm. Bias points along ``direction`` (+x default)."""

    bias_mm: float = 0.0
    sd_mm: float = 0.0
    direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self):
        if self.bias_mm < 0 or self.sd_mm < 0:
            raise ValueError("bias and sd must be >= 0")


MAX_NEEDLES = 5


def scatter_position(xy, p: Perturbation, rng: np.random.Generator) -> tuple[float, float]:
    """Bias plus Gaussian scatter in world mm, before grid snapping."""
    x = xy[0] + p.bias_mm * p.direction[0]
    y = xy[1] + p.bias_mm * p.direction[1]
    if p.sd_mm > 0:
        noise = rng.normal(0.0, p.sd_mm, size=2)
        x += noise[0]
        y += noise[1]
    return (x, y)


def perturb_position(xy, p: Perturbation, rng: np.random.Generator,
                     grid=None) -> tuple[float, float]:
    """Perturbed world position snapped back onto the template grid."""
    grid = grid or DEFAULT_GRID
    return grid.to_world(*grid.snap(*scatter_position(xy, p, rng)))


def _observed_plane_target(env: BiopsyEnv, i: int, j: int):
    """World (x, y) of the observed lesion's in-plane centroid at hole (i, j),
    or None when no lesion pixel is visible in that plane."""
    plane = env.peek_plane(i, j)
    iu, iv = np.nonzero(plane[1])
    if iu.size == 0:
        return None
    dv = env.cfg.window_mm[1] / env.cfg.obs_res
    radial = env.probe.radius_mm + float(np.mean((iv + 0.5) * dv))
    theta = plane_angle(i, j, env.probe)
    ax, ay = env.probe.axis_xy
    return (ax + radial * math.sin(theta), ay + radial * math.cos(theta))


def _anchor_row(env: BiopsyEnv) -> int:
    """Row whose hole sits nearest the observed gland's centroid height."""
    y = env.observed_volume.label_centroid(PROSTATE)[1]
    j = int(math.floor(y / env.grid.pitch_mm + 0.5))
    return min(max(j, 0), env.grid.rows - 1)


def _require_fresh(env: BiopsyEnv):
    if env.log is None or env.steps_taken > 0:
        raise ValueError("strategy needs a freshly reset environment")


def sweep_episode(env: BiopsyEnv, p: Perturbation = Perturbation(),
                  rng: np.random.Generator | None = None) -> EpisodeLog:
    """Left-to-right column sweep at the grid's 5mm pitch: wherever the
    observed lesion shows in the column's plane, fire once at the observed
    target centre (nearest hole, then perturbed). Stops at 5 needles."""
    _require_fresh(env)
    rng = rng or np.random.default_rng()
    j_look = _anchor_row(env)
    fired = 0
    for i in range(env.grid.cols):
        target = _observed_plane_target(env, i, j_look)
        if target is None:
            continue
        hole = env.grid.snap(*target)
        world = perturb_position(env.grid.to_world(*hole), p, rng, env.grid)
        env.fire_at(*env.grid.snap(*world))
        fired += 1
        if fired >= MAX_NEEDLES or env.terminated:
            break
    log = env.log
    log.strategy = "sweep"
    log.bias_mm = p.bias_mm
    log.sd_mm = p.sd_mm
    return log


def scout_candidates(env: BiopsyEnv) -> list[tuple[int, int]]:
    """All holes whose needle line passes through the observed lesion mask."""
    out = []
    for i, j in ((ii, jj) for jj in range(env.grid.rows) for ii in range(env.grid.cols)):
        if line_intersects_mask(env.observed_volume, LESION, needle_line(i, j),
                                env.cfg.sample_step_mm):
            out.append((i, j))
    return out


def scout_episode(env: BiopsyEnv, p: Perturbation = Perturbation(),
                  rng: np.random.Generator | None = None) -> EpisodeLog:
    """Scout every candidate hole that samples the observed target, then fire
    at up to 5 randomly chosen distinct candidates (perturbed, snapped)."""
    _require_fresh(env)
    rng = rng or np.random.default_rng()
    candidates = scout_candidates(env)
    k = min(MAX_NEEDLES, len(candidates))
    if k > 0:
        chosen = rng.choice(len(candidates), size=k, replace=False)
        for idx in chosen:
            hole = candidates[int(idx)]
            world = perturb_position(env.grid.to_world(*hole), p, rng, env.grid)
            env.fire_at(*env.grid.snap(*world))
            if env.terminated:
                break
    log = env.log
    log.strategy = "scout"
    log.bias_mm = p.bias_mm
    log.sd_mm = p.sd_mm
    return log
