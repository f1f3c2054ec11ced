"""The targeting MDP: reset/step semantics, the +5/-1/sgn reward, per-episode
localization noise on the observed target, and quota/cap termination.

The simulator keeps two volumes: the ground truth (used for rewards and all
metrics) and the observed volume, whose lesion mask is rigidly shifted by a
per-episode Gaussian offset. The agent only ever sees the observed planes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .anatomy import LESION, PROSTATE, LabelVolume, lesion_centroid, translate_mask
from .geometry import (CoreSegment, DEFAULT_GRID, ProbeModel, needle_line,
                       plane_angle, point_line_distance, resample_plane,
                       segment_mask_length, line_intersects_mask)


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 15
    hit_quota: int = 5
    reward_hit: float = 5.0
    reward_outside: float = -1.0
    gamma: float = 0.9                   # consumed by the trainer
    noise_sd_mm: float = 1.73            # per-axis SD of the lesion offset
    depth_noise_sd_mm: float = 1.0
    action_range: float = 15.0           # grid units, per Actions definition
    obs_res: int = 64
    window_mm: tuple[float, float] = (96.0, 96.0)
    core_length_mm: float = 20.0
    probe_radius_mm: float = 10.0
    sample_step_mm: float = 0.25
    shaping_target: str = "true"         # "true" | "observed" centroid for sgn shaping
    seed: int | None = None

    def __post_init__(self):
        if self.max_steps < 1 or self.hit_quota < 1:
            raise ValueError("max_steps and hit_quota must be >= 1")
        if self.noise_sd_mm < 0 or self.depth_noise_sd_mm < 0:
            raise ValueError("noise SDs must be >= 0")
        if self.shaping_target not in ("true", "observed"):
            raise ValueError("shaping_target must be 'true' or 'observed'")


@dataclass(frozen=True)
class Observation:
    """MDP state: the 2-channel plane image plus the normalized grid point."""

    plane: np.ndarray                    # uint8, (2, res, res): prostate, lesion
    grid_pos: tuple[float, float]        # (i/12, j/12)
    grid: tuple[int, int]

    def as_vector(self) -> np.ndarray:
        """Flat float32 input for the policy: both planes then grid_pos."""
        return np.concatenate([
            self.plane.ravel().astype(np.float32),
            np.asarray(self.grid_pos, dtype=np.float32),
        ])


@dataclass(frozen=True)
class NeedleRecord:
    i: int
    j: int
    x_mm: float
    y_mm: float
    depth_mm: float
    length_mm: float
    hit: bool
    ccl_mm: float
    step: int


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminated: bool
    info: dict


@dataclass
class EpisodeLog:
    case_id: str
    start: tuple[int, int]
    noise_offset_mm: tuple[float, float, float]
    steps: list[StepResult] = field(default_factory=list)
    total_reward: float = 0.0
    strategy: str | None = None
    bias_mm: float | None = None
    sd_mm: float | None = None

    @property
    def needles(self) -> list[NeedleRecord]:
        return [s.info["needle"] for s in self.steps]

    def records(self) -> list[dict]:
        """One dict per step in the wire/log schema."""
        out = []
        for t, s in enumerate(self.steps):
            n = s.info["needle"]
            rec = {
                "t": t,
                "i": n.i,
                "j": n.j,
                "reward": s.reward,
                "hit": n.hit,
                "ccl_mm": n.ccl_mm,
                "dist_mm": s.info["dist_mm"],
                "terminated": s.terminated,
            }
            if self.strategy is not None:
                rec["strategy"] = self.strategy
                rec["bias_mm"] = self.bias_mm
                rec["sd_mm"] = self.sd_mm
            out.append(rec)
        return out

    def to_jsonl(self) -> str:
        """Canonical JSON-lines form (sorted keys, compact separators)."""
        return "\n".join(json.dumps(r, sort_keys=True, separators=(",", ":"))
                         for r in self.records())


def reward_value(hit: bool, outside: bool, dist_prev: float, dist_now: float,
                 reward_hit: float = 5.0, reward_outside: float = -1.0) -> float:
    """Reward branches, precedence hit > outside > shaping sgn(d_prev - d_now)."""
    if hit:
        return float(reward_hit)
    if outside:
        return float(reward_outside)
    return float(np.sign(dist_prev - dist_now))


def fire_depth(plane: np.ndarray, depth_window_mm: float) -> float:
    """Core-center depth (mm): mean depth of observed lesion pixels, falling
    back to the prostate pixels, then to the window center."""
    n_u = plane.shape[1]
    du = depth_window_mm / n_u
    for channel in (1, 0):
        iu = np.nonzero(plane[channel].any(axis=1))[0]
        if iu.size:
            weights = plane[channel].sum(axis=1)[iu]
            return float(np.average((iu + 0.5) * du, weights=weights))
    return depth_window_mm / 2.0


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class BiopsyEnv:
    """One environment instance drives one episode stream over a fixed case.

    Not safe for concurrent stepping; run independent instances in parallel.
    """

    def __init__(self, vol: LabelVolume, cfg: EnvConfig = EnvConfig(),
                 case_id: str = "case"):
        if vol.count(LESION) == 0:
            raise ValueError("no target: volume has no lesion voxels")
        self.true_volume = vol
        self.cfg = cfg
        self.case_id = case_id
        self.probe = ProbeModel(cfg.probe_radius_mm)
        self.grid = DEFAULT_GRID
        self._true_centroid = lesion_centroid(vol)
        self._rng = np.random.default_rng(cfg.seed)
        self.observed_volume: LabelVolume | None = None
        self._log: EpisodeLog | None = None
        self._terminated = True

    # -- episode control ----------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        i = int(self._rng.integers(0, self.grid.cols))
        j = int(self._rng.integers(0, self.grid.rows))
        eps = self._rng.normal(0.0, self.cfg.noise_sd_mm, size=3)
        self.observed_volume = translate_mask(self.true_volume, LESION, eps)
        if self.cfg.shaping_target == "observed" and self.observed_volume.count(LESION):
            self._shaping_centroid = lesion_centroid(self.observed_volume)
        else:
            self._shaping_centroid = self._true_centroid
        self._pos = (i, j)
        self._steps = 0
        self._hits = 0
        self._terminated = False
        self._dist_prev = self._shaping_dist((i, j))
        self._log = EpisodeLog(self.case_id, (i, j), tuple(float(e) for e in eps))
        return self._observation()

    def step(self, action) -> StepResult:
        if self._terminated:
            raise RuntimeError("episode finished")
        di = float(np.clip(action[0], -self.cfg.action_range, self.cfg.action_range))
        dj = float(np.clip(action[1], -self.cfg.action_range, self.cfg.action_range))
        i = min(max(_half_up(self._pos[0] + di), 0), self.grid.cols - 1)
        j = min(max(_half_up(self._pos[1] + dj), 0), self.grid.rows - 1)
        self._pos = (i, j)

        plane = self.peek_plane(i, j)
        depth = fire_depth(plane, self.cfg.window_mm[0])
        depth += float(self._rng.normal(0.0, self.cfg.depth_noise_sd_mm))
        hit, ccl, outside = self.evaluate_needle(i, j, depth)

        dist_now = self.dist_to_target((i, j))
        shaping_now = self._shaping_dist((i, j))
        r = reward_value(hit, outside, self._dist_prev, shaping_now,
                         self.cfg.reward_hit, self.cfg.reward_outside)
        self._dist_prev = shaping_now
        self._steps += 1
        if hit:
            self._hits += 1
        reason = None
        if self._hits >= self.cfg.hit_quota:
            reason = "hit_quota"
        elif self._steps >= self.cfg.max_steps:
            reason = "max_steps"
        self._terminated = reason is not None

        x, y = self.grid.to_world(i, j)
        needle = NeedleRecord(i, j, x, y, depth, self.cfg.core_length_mm,
                              hit, ccl, self._steps - 1)
        result = StepResult(
            observation=Observation(plane, (i / 12.0, j / 12.0), (i, j)),
            reward=r,
            terminated=self._terminated,
            info={
                "hit": hit,
                "outside_prostate": outside,
                "ccl_mm": ccl,
                "dist_mm": dist_now,
                "needle": needle,
                "termination_reason": reason,
            },
        )
        self._log.steps.append(result)
        self._log.total_reward += r
        return result

    def fire_at(self, i: int, j: int) -> StepResult:
        """Step with the relative action that lands exactly on hole (i, j)."""
        return self.step((i - self._pos[0], j - self._pos[1]))

    # -- queries ------------------------------------------------------------

    def peek_plane(self, i: int, j: int) -> np.ndarray:
        """Observed 2-channel plane at hole (i, j); no state change."""
        theta = plane_angle(i, j, self.probe)
        return resample_plane(self.observed_volume, theta, self.cfg.window_mm,
                              (self.cfg.obs_res, self.cfg.obs_res), self.probe)

    def evaluate_needle(self, i: int, j: int, depth_mm: float):
        """(hit, ccl_mm, outside) of a core fired at (i, j); truth masks only."""
        seg = CoreSegment(i, j, depth_mm, self.cfg.core_length_mm)
        ccl = segment_mask_length(self.true_volume, LESION, seg,
                                  self.cfg.sample_step_mm)
        outside = not line_intersects_mask(self.true_volume, PROSTATE,
                                           needle_line(i, j))
        return ccl > 0.0, ccl, outside

    def dist_to_target(self, hole) -> float:
        """Distance from the TRUE lesion centroid to the needle line."""
        return point_line_distance(self._true_centroid, needle_line(*hole))

    def _shaping_dist(self, hole) -> float:
        """Target distance driving the sgn shaping term; the true centroid by
        default, the episode's observed centroid when configured."""
        return point_line_distance(self._shaping_centroid, needle_line(*hole))

    def _observation(self) -> Observation:
        i, j = self._pos
        return Observation(self.peek_plane(i, j), (i / 12.0, j / 12.0), (i, j))

    @property
    def position(self) -> tuple[int, int]:
        return self._pos

    @property
    def steps_taken(self) -> int:
        return self._steps

    @property
    def hits(self) -> int:
        return self._hits

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def log(self) -> EpisodeLog:
        return self._log
