"""Vocal fold oscillation estimation from recorded speech.

The forward model is the asymmetric one-mass body-cover oscillator; its
parameters are fit per segment by adjoint least squares against the glottal
flow recovered by LPC inverse filtering, and the fitted parameters plus fit
residuals feed a logistic-regression screening harness.
"""
from .adles import (
    ADLESTransformer,
    AdjointTrajectory,
    EstimationResult,
    FlowObjective,
    Gradients,
    OptimizerConfig,
    ResidualSeries,
    estimate,
    gradients,
    integrate_adjoint,
    residual,
)
from .classify import CVPlan, EvalReport, LogisticClassifier, LogisticModel, evaluate, fit_logistic, make_cv_plan, predict_scores, roc_auc
from .config import PipelineConfig
from .features import FeatureScaler, SegmentFeatures, featurize, standardize
from .glottal import GlottalWaveform, InverseFilter, InverseFilterConfig, inverse_filter, scale_to_flow
from .signal import AudioClip, Segment, is_voiced, load_clip, segment_clip
from .vfmodel import (
    BoundaryConditions,
    DivergenceError,
    FoldState,
    FoldTrajectory,
    ModelParams,
    PhysicalConstants,
    accel,
    integrate_forward,
    phase_portrait,
    predict_flow,
)

__version__ = "0.1.0"
