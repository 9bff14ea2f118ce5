"""Density-ratio estimation by non-negative corrected Bregman divergence
minimization, with kernel baselines and two downstream applications."""
from ._accel import backend
from .apps import (CovShiftProblem, ImportanceWeights, RidgeSpec, covshift_experiment,
                   fit_weighted_ridge, outlier_scores)
from .baselines import fit_kliep_kernel, fit_ulsif_cv, fit_ulsif_kernel
from .errors import (ConfigError, ConvergenceWarning, DomainError, LabelError, NNBRError,
                     NumericalError, QuadratureError, RoleError, ShapeError,
                     SingularMatrixError, UnsupportedFamily)
from .evalkit import SyntheticProblem, auroc, l2_error, normalization_diag, pd
from .losses import Family, LossSpec
from .models import (CappedModel, ConstantModel, KernelLinearModel, MlpRatioModel, Role,
                     SampleSet, load_model, save_model)
from .risk import IDENTITY, RELU, CorrectionFn, empirical_br, empirical_nnbr
from .trainer import Holdout, TrainConfig, TrainTrace, train

__version__ = "0.1.0"
