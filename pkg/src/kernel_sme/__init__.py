"""Kernel-SME multi-target tracking.

Tracks a known number of targets from unlabeled measurements by mapping
each measurement set to a Gaussian mixture, sampling it at test vectors and
running an LMMSE update on the joint state with closed-form moments.
"""

__version__ = "0.1.0"

from .errors import ConfigError, KernelSMEError, NumericalError, PreconditionError
from .models import (
    GroundTruth,
    LinearModelBank,
    MeasurementSet,
    MultiTargetBelief,
    SingleTargetModel,
    predict,
    rng_stream,
    simulate_step,
    stack_models,
)
from .sme import (
    KernelConfig,
    PseudoMeasurementMoments,
    TestVectorSet,
    filter_step,
    kernel_transform,
    kernel_transform_eval,
    measurement_update,
    pseudo_moments,
    select_test_vectors,
)
from .oracle import OracleEstimate, mc_pseudo_moments, phd_convolved_with_kernel
from .assignment import Assignment, hungarian
from .baselines import gnn_update, kalman_update, oracle_kf_update
from .metrics import OspaParams, labeled_rmse, ospa, point_estimates

__all__ = [name for name in dir() if not name.startswith("_")]
