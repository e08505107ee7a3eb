"""Anomaly detection by knowledge-distillation gap.

Thin python surface over the C++ core: synthetic data, one-class splits,
teacher pre-training, student distillation, KD / Gaussian anomaly scores,
brittleness diagnostics, and the config-driven experiment runner.
"""

from adkd._core import (
    ArgumentError,
    BrittlenessReport,
    CompatibilityError,
    DegenerateVarianceError,
    DimensionError,
    ExperimentConfig,
    FormatError,
    GaussianStats,
    HygieneError,
    LabeledDataset,
    NormalView,
    NumericError,
    PretrainResult,
    ProbeResult,
    ResultRow,
    SplitPlan,
    StateError,
    StudentTeacherPair,
    Teacher,
    aggregate_patch_scores,
    auroc,
    brittleness_score,
    build_split,
    emit_report,
    fit_gaussian_stats,
    format_results_csv,
    generate_synthetic,
    input_gradient,
    kd_scores,
    linear_probe,
    load_idx,
    mahalanobis_score,
    make_student,
    mse_center_score,
    parse_config_file,
    parse_config_text,
    parse_results_csv,
    pearson_corr,
    pretrain,
    random_teacher,
    representation_seed,
    run_experiment,
    save_idx,
    train_student,
)

__all__ = [
    "ArgumentError",
    "BrittlenessReport",
    "CompatibilityError",
    "DegenerateVarianceError",
    "DimensionError",
    "ExperimentConfig",
    "FormatError",
    "GaussianStats",
    "HygieneError",
    "LabeledDataset",
    "NormalView",
    "NumericError",
    "PretrainResult",
    "ProbeResult",
    "ResultRow",
    "SplitPlan",
    "StateError",
    "StudentTeacherPair",
    "Teacher",
    "aggregate_patch_scores",
    "auroc",
    "brittleness_score",
    "build_split",
    "emit_report",
    "fit_gaussian_stats",
    "format_results_csv",
    "generate_synthetic",
    "input_gradient",
    "kd_scores",
    "linear_probe",
    "load_idx",
    "mahalanobis_score",
    "make_student",
    "mse_center_score",
    "parse_config_file",
    "parse_config_text",
    "parse_results_csv",
    "pearson_corr",
    "pretrain",
    "random_teacher",
    "representation_seed",
    "run_experiment",
    "save_idx",
    "train_student",
]
