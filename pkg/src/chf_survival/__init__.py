"""
CHF Survival Package

Time-to-hospitalization modelling for congestive heart failure from a
30-second single-lead ECG and clinical covariates: ECG features, a
gradient-boosted log-logistic AFT model, time-dependent discrimination
metrics and SHAP explanations, checked against synthetic ground truth.
"""

__version__ = "1.0.0"

from .boosting import AftModel, BoostParams, cross_validate, fit, load_model, save_model
from .config import RunConfig, load_config
from .evaluation import ModelEvaluator, SurvivalPredictions
from .explanation import explain_patient, global_summary, kernel_shap, tree_shap
from .feature_engineering import FeatureEngineer, QuantileTransform, assemble_dataset
from .signal_processing import EcgProcessor, EcgRecord
from .simulation import CohortGenParams, EcgGenParams, synth_cohort, synth_ecg
from .survival_core import CoxModel, SurvivalDataset, cox_fit
from .visualization import Visualizer

__all__ = [
    'AftModel',
    'BoostParams',
    'CohortGenParams',
    'CoxModel',
    'EcgGenParams',
    'EcgProcessor',
    'EcgRecord',
    'FeatureEngineer',
    'ModelEvaluator',
    'QuantileTransform',
    'RunConfig',
    'SurvivalDataset',
    'SurvivalPredictions',
    'Visualizer',
    'assemble_dataset',
    'cox_fit',
    'cross_validate',
    'explain_patient',
    'fit',
    'global_summary',
    'kernel_shap',
    'load_config',
    'load_model',
    'save_model',
    'synth_cohort',
    'synth_ecg',
    'tree_shap',
]
