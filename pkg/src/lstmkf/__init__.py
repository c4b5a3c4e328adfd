"""Learned Kalman filtering on numpy.

A Kalman filter whose state transition and time-varying noise covariances
come from three recurrent networks trained end to end through the filter
equations, next to the classic baselines it is benchmarked against:
fixed-model Kalman filters (constant velocity / constant acceleration),
exponential moving averages, and a plain sequence-to-sequence LSTM.

Everything runs on float64 numpy with a tape-based reverse-mode
differentiator; randomness flows through counter-based generators keyed
by (seed, stream), so results reproduce bit for bit across runs and
platforms.
"""

from .autodiff import (
    AdamState,
    GradientCheckReport,
    Tape,
    Tensor,
    adam_step,
    gradient_check,
    init_orthogonal,
    init_uniform,
    init_xavier,
    orthogonal_matrix,
    spd_cholesky,
    spd_solve,
    xavier_bound,
)
from .errors import (
    ConfigError,
    DatasetFormatError,
    FilterStepError,
    NonFiniteOutputError,
    ShapeMismatchError,
    SingularMatrixError,
    TrainingDivergedError,
)
from .filtering import (
    FilterTrace,
    LstmKfParams,
    LstmKfRuntimeState,
    StepRecord,
    build_lstm_kf,
    filter_sequence,
    initial_state,
    loss,
    module_jacobian,
    predict,
    rollout,
    step,
    update,
)
from .kalman import (
    GaussianBelief,
    GridSearchResult,
    LinearKfModel,
    build_ca_model,
    build_cv_model,
    default_init,
    ema_filter,
    grid_search,
    grid_table_csv,
    kf_filter,
    kf_predict,
    kf_update,
    measurement_estimates,
)
from .metrics import (
    MethodMetrics,
    compute_metrics,
    euclidean_errors,
    metrics_to_csv,
    metrics_to_text,
)
from .nets import (
    CellDetail,
    LinearLayer,
    LstmLayerParams,
    LstmState,
    NetModule,
    build_net_module,
    build_zero_module,
    load_weights,
    lstm_cell,
    lstm_cell_detail,
    module_forward,
    module_from_payload,
    module_to_payload,
    preset_big_f,
    preset_big_noise,
    preset_small,
    save_weights,
    standalone_lstm_filter,
)
from .rng import normals, philox, standard_normals, uniform
from .synth import (
    BurstSpec,
    TrajectoryDataset,
    TrajectorySequence,
    apply_bursts,
    gen_linear_cv,
    gen_oscillator,
    load_dataset,
    oracle_error,
    save_dataset,
)
from .training import (
    Checkpoint,
    EpochStats,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    read_train_log,
    save_checkpoint,
    scheduled_learning_rate,
    train_lstm_kf,
    train_standalone_lstm,
    write_train_log,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BurstSpec",
    "CellDetail",
    "Checkpoint",
    "ConfigError",
    "DatasetFormatError",
    "EpochStats",
    "FilterStepError",
    "FilterTrace",
    "GaussianBelief",
    "GradientCheckReport",
    "GridSearchResult",
    "LinearKfModel",
    "LinearLayer",
    "LstmKfParams",
    "LstmKfRuntimeState",
    "LstmLayerParams",
    "LstmState",
    "MethodMetrics",
    "NetModule",
    "NonFiniteOutputError",
    "ShapeMismatchError",
    "SingularMatrixError",
    "StepRecord",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "TrajectoryDataset",
    "TrajectorySequence",
    "adam_step",
    "apply_bursts",
    "build_ca_model",
    "build_cv_model",
    "build_lstm_kf",
    "build_net_module",
    "build_zero_module",
    "compute_metrics",
    "default_init",
    "ema_filter",
    "euclidean_errors",
    "filter_sequence",
    "gen_linear_cv",
    "gen_oscillator",
    "gradient_check",
    "grid_search",
    "grid_table_csv",
    "init_orthogonal",
    "init_uniform",
    "init_xavier",
    "initial_state",
    "kf_filter",
    "kf_predict",
    "kf_update",
    "load_checkpoint",
    "load_dataset",
    "load_weights",
    "loss",
    "lstm_cell",
    "lstm_cell_detail",
    "measurement_estimates",
    "metrics_to_csv",
    "metrics_to_text",
    "module_forward",
    "module_from_payload",
    "module_jacobian",
    "module_to_payload",
    "normals",
    "oracle_error",
    "orthogonal_matrix",
    "philox",
    "predict",
    "preset_big_f",
    "preset_big_noise",
    "preset_small",
    "read_train_log",
    "rollout",
    "save_checkpoint",
    "save_dataset",
    "save_weights",
    "scheduled_learning_rate",
    "spd_cholesky",
    "spd_solve",
    "standalone_lstm_filter",
    "standard_normals",
    "step",
    "train_lstm_kf",
    "train_standalone_lstm",
    "uniform",
    "update",
    "write_train_log",
    "xavier_bound",
]
