"""Template-guided prostate biopsy targeting workbench."""

__version__ = "0.1.0"

from .anatomy import (AnatomySpec, LabelVolume, LESION, PROSTATE, RECTUM,
                      generate_synthetic, lesion_centroid, lesion_volume_cc,
                      load_volume, radius_for_volume_cc, save_volume,
                      translate_mask)
from .env import BiopsyEnv, EnvConfig, EpisodeLog, NeedleRecord, Observation, StepResult
from .geometry import (CoreSegment, ProbeModel, TemplateGrid, grid_to_world,
                       line_intersects_mask, needle_line, plane_angle,
                       point_line_distance, resample_plane, segment_mask_length)
from .metrics import (EpisodeMetrics, aggregate, ccl_summary, episode_metrics,
                      hit_rate, needle_area, two_sample_ttest)
from .policy import (PolicyParams, TrainConfig, evaluate_policy, forward, gae,
                     discounted_returns, grad_check, load_policy, ppo_update,
                     sample_action, save_policy, train)
from .strategies import (Perturbation, perturb_position, scout_candidates,
                         scout_episode, sweep_episode)
