"""Conditional-intensity models and baselines."""

from .base import VIEW_COMBINED, VIEW_TARGET, CifModel, log_likelihood
from .ctlstm import (
    CtLstmModel,
    CtLstmTrajectory,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    ctlstm_forward,
    ctlstm_gradient,
    ctlstm_train,
    ctlstm_value,
)
from .groundtruth import GroundTruthGamma, GroundTruthPoisson, gt_gamma_hazard
from .length import LenModel, len_commission_score, len_fit, len_omission_score
from .serialize import load_model, model_from_dict, model_to_dict, save_model

__all__ = [
    "CifModel",
    "VIEW_COMBINED",
    "VIEW_TARGET",
    "log_likelihood",
    "GroundTruthGamma",
    "GroundTruthPoisson",
    "gt_gamma_hazard",
    "LenModel",
    "len_fit",
    "len_commission_score",
    "len_omission_score",
    "CtLstmModel",
    "CtLstmTrajectory",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "ctlstm_forward",
    "ctlstm_gradient",
    "ctlstm_train",
    "ctlstm_value",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]
