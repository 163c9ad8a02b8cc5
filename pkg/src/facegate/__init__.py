"""Face-touch detection from wrist IMU data.

An STA/LTA gate decides when motion is worth classifying; gated windows are
summarised into per-channel statistics, expanded with pairwise products and
classified by a random forest.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CHANNELS,
    DEFAULT_SAMPLE_RATE,
    Activity,
    ActivityLabel,
    Category,
    ConfigError,
    FacegateError,
    Phase,
    PhaseInterval,
    SensorSample,
    Session,
    Stance,
)
from .evaluate import (  # noqa: E402
    ConfusionMatrix,
    EvalReport,
    evaluate_loo,
    evaluate_split,
    leave_one_out,
    pca_first_component_variance,
    sweep_feature_count,
    sweep_window_size,
)
from .features import FeatureTable, base_features, featurize_slices, poly_expand, segment, window_stats  # noqa: E402
from .forest import Forest, ForestConfig, load_model, predict, save_model, train_forest  # noqa: E402
from .gate import Decision, GateConfig, GateState, gate_step, gate_stream  # noqa: E402
from .ingest import ColumnMapping, load_session, trim_session, transition_slices  # noqa: E402
from .pipeline import run_stream, synth_trace  # noqa: E402

__all__ = [
    "CHANNELS", "DEFAULT_SAMPLE_RATE", "Activity", "ActivityLabel", "Category", "ConfigError", "FacegateError",
    "Phase", "PhaseInterval", "SensorSample", "Session", "Stance", "ConfusionMatrix", "EvalReport",
    "evaluate_loo", "evaluate_split", "leave_one_out", "pca_first_component_variance", "sweep_feature_count",
    "sweep_window_size", "FeatureTable", "base_features", "featurize_slices", "poly_expand", "segment",
    "window_stats", "Forest", "ForestConfig", "load_model", "predict", "save_model", "train_forest", "Decision",
    "GateConfig", "GateState", "gate_step", "gate_stream", "ColumnMapping", "load_session", "trim_session",
    "transition_slices", "run_stream", "synth_trace",
]
