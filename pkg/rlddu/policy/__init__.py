"""Contextual-bandit policy that compensates and stops the unfolded network"""

from .actions import ActionLayout, ActionVector, select_depth
from .environment import PrecodingEnvironment, reward, run_rlddu
from .network import GaussianPolicy, load_policy, save_policy
from .trainer import TrainingResult, train_policy

__all__ = [
    "ActionLayout",
    "ActionVector",
    "select_depth",
    "PrecodingEnvironment",
    "reward",
    "run_rlddu",
    "GaussianPolicy",
    "load_policy",
    "save_policy",
    "TrainingResult",
    "train_policy",
]
