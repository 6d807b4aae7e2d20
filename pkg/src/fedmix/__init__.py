"""Deterministic simulator of personalized federated learning with
gradient-similarity user-centric aggregation at the server."""

__version__ = "0.1.0"

from .aggregation import (
    AggregationKind,
    AggregationRule,
    StreamPlan,
    fedavg_aggregate,
    kmeans_streams,
    select_num_streams,
    silhouette_score,
    streamed_aggregate,
    user_centric_aggregate,
)
from .comm import (
    COMM_PRESETS,
    CommModel,
    TimedCurve,
    TimingMode,
    expected_compute_time,
    round_time,
    sample_compute_times,
    timed_curve,
)
from .config import (
    BoundSettings,
    ConfigError,
    ExperimentConfig,
    SeedBlock,
    config_digest,
    config_from_dict,
    config_to_dict,
)
from .datagen import (
    ClientDataset,
    FederationSpec,
    SamplePool,
    Scenario,
    dump_jsonl,
    generate_base_task,
    generate_federation,
    load_jsonl,
    partition_concept_shift,
    partition_covariate_shift,
    partition_label_shift,
    train_val_split,
)
from .models import (
    Activation,
    Architecture,
    ModelSpec,
    OptimizerConfig,
    ParameterVector,
    forward,
    init_parameters,
    local_train,
    loss_and_gradient,
    predict_proba,
    sgd_step,
)
from .orchestrator import (
    ExperimentResult,
    RoundMetrics,
    evaluate,
    run_experiment,
    run_fedavg_baseline,
    run_local_baseline,
    run_oracle_baseline,
    write_metrics_csv,
)
from .presets import preset_config, preset_dict, preset_names
from .similarity import (
    GradientFingerprint,
    GradientVarianceEstimate,
    MixingMatrix,
    SimilarityMatrix,
    SimilarityRoundResult,
    estimate_sigma_sq,
    mixing_matrix,
    pairwise_delta,
    probe_gradients,
    similarity_round,
)
from .theory import (
    BoundInputs,
    BoundValidation,
    DiscreteDistribution,
    FiniteHypothesisClass,
    discrepancy_distance,
    lambda_term,
    mixture,
    theorem_bound,
    threshold_class,
    validate_bound,
    weighted_erm,
)
