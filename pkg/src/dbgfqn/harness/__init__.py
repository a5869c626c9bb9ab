"""Experiment driver, metrics, parameter reports and the command line."""
from .experiment import (
    ENV_EMBED_DIM,
    ExperimentConfig,
    Run,
    check_compatible,
    default_model,
    evaluate_checkpoint,
    run_experiment,
    thread_limits,
    train_seed,
)
from .metrics import (
    FIELDS,
    MetricsRecord,
    MetricsWriter,
    export_metrics,
    read_metrics,
    running_success_rate,
)
from .report import parse_report, reduction_percent, report_parameters, sweep_configs
