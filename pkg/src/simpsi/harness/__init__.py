"""Training, evaluation, checkpoints and run artifacts."""

from .checkpoint import Checkpoint, load_checkpoint, load_state, save_checkpoint
from .config import TrainConfig
from .metrics import accuracy, auprc, macro_auprc
from .runs import (
    compare_runs,
    comparable_metrics,
    export_preservation_maps,
    load_run_checkpoint,
    preservation_maps,
    read_metrics,
    top_bins,
    write_run,
)
from .training import EvalResult, RunResult, evaluate, model_configs, predict_proba, psi_map_for, train

__all__ = [name for name in dir() if not name.startswith("_")]
