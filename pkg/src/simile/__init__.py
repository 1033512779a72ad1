"""Smooth imitation learning for online sequence prediction."""

from .autoregressor import LinearAutoregressor, fit_autoregressor, predict_ar
from .forest import ForestConfig, SmoothForest, forest_predict, train_forest
from .metrics import imitation_loss, smoothness
from .policy import AffinePolicy, EnsemblePolicy, interpolate, rollout_det, rollout_sto
from .training import IterationRecord, SigmaSchedule, TrainingConfig, simile_train
from .trajectory import StateLayout, SynthConfig, Trajectory, load_trajectory, make_state, synth_expert

__all__ = [
    "AffinePolicy",
    "EnsemblePolicy",
    "ForestConfig",
    "IterationRecord",
    "LinearAutoregressor",
    "SigmaSchedule",
    "SmoothForest",
    "StateLayout",
    "SynthConfig",
    "TrainingConfig",
    "Trajectory",
    "fit_autoregressor",
    "forest_predict",
    "imitation_loss",
    "interpolate",
    "load_trajectory",
    "make_state",
    "predict_ar",
    "rollout_det",
    "rollout_sto",
    "simile_train",
    "smoothness",
    "synth_expert",
    "train_forest",
]
