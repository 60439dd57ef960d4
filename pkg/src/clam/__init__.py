"""Class-dependent multiplicative weights for fair classification."""
from .simplex import (
    MWConfig,
    Projection,
    RestrictedSimplex,
    ggf_value,
    min_linear_over_simplex,
    mw_update,
    project,
    weighted_value,
)
from .game import (
    GameTrace,
    RegretDiagnostics,
    best_response_column,
    last_iterate_check,
    last_iterate_history,
    run_mw_game,
    tau_theorem,
    verify_theorem1,
)
from .losses import LossSpec, PRESETS
from .classifier import TrainConfig, TrainResult, train_baseline, train_clam, train_method
from .metrics import FairnessReport, aggregate, fairness_report, range_difference
from .data import AugmentationSpec, Dataset, gen_synthetic, gen_synthetic_images, load_csv, load_idx

__version__ = "0.1.0"
