"""Quasiperiodically forced logistic map: simulation, Lyapunov exponents and
from-scratch LSTM forecasting of its chaotic attractors."""

from .map_core import GOLDEN_OMEGA, MapParams, Trajectory, iterate, lyapunov, phase_scan, step
from .pipeline import ScalerParams, SupervisedSet, fit_scaler, scale, split, unscale, window
from .lstm_core import LstmConfig, LstmWeights, backward, forward, init_weights, predict
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train
from .evaluator import EvalReport, evaluate, multistep_eval, rmse, unit_sweep

__version__ = "0.1.0"
