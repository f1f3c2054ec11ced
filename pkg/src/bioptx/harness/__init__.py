from .cohort import (ExperimentConfig, compare, load_cohort, run_cohort,
                     synth_cohort_specs, write_cohort)
from .bridge import PROTOCOL, run_bridge
from .service import create_app

__all__ = [
    "ExperimentConfig", "compare", "load_cohort", "run_cohort",
    "synth_cohort_specs", "write_cohort", "PROTOCOL", "run_bridge",
    "create_app",
]
