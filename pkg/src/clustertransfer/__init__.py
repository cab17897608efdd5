"""K-means partitioned transfer learning for tabular grade regression."""

from .clustering import ClusterModel, WcssCurve, assign, elbow_select, kmeans, wcss
from .data_ingest import (
    EncodingSchema,
    NumericTable,
    RawTable,
    Scaler,
    apply_minmax,
    build_encoding_schema,
    encode,
    fit_minmax,
    parse_table,
    read_table,
    split_train_test,
)
from .metrics import EvalReport, Provenance, evaluate, mae, r2, rmse
from .neural_net import (
    AdamState,
    LossHistory,
    Mlp,
    TrainConfig,
    adam_step,
    backward,
    forward,
    freeze_layers,
    init_mlp,
    load_model,
    mae_loss,
    predict,
    save_model,
    train,
)
from .pca import PcaModel, export_scatter, fit_pca, project
from .pipeline import (
    ExperimentPlan,
    ExperimentResult,
    aggregate_seeds,
    frozen_layer_sweep,
    run_source_training,
    run_transfer,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ClusterModel",
    "EncodingSchema",
    "EvalReport",
    "ExperimentPlan",
    "ExperimentResult",
    "LossHistory",
    "Mlp",
    "NumericTable",
    "PcaModel",
    "Provenance",
    "RawTable",
    "Scaler",
    "TrainConfig",
    "WcssCurve",
    "adam_step",
    "aggregate_seeds",
    "apply_minmax",
    "assign",
    "backward",
    "build_encoding_schema",
    "elbow_select",
    "encode",
    "evaluate",
    "export_scatter",
    "fit_minmax",
    "fit_pca",
    "forward",
    "freeze_layers",
    "frozen_layer_sweep",
    "init_mlp",
    "kmeans",
    "load_model",
    "mae",
    "mae_loss",
    "parse_table",
    "predict",
    "project",
    "r2",
    "read_table",
    "rmse",
    "run_source_training",
    "run_transfer",
    "save_model",
    "split_train_test",
    "train",
    "wcss",
]
