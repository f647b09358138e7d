"""Regular-language transformer: tasks, model, training, and analysis."""

from ._core import (
    Model,
    ModelConfig,
    TaskSpec,
    TrainConfig,
    adaptive_depth,
    attention_cost,
    build_W1,
    build_W2,
    cluster_purity,
    evaluate,
    load_checkpoint,
    make_task,
    mlp_binary_matmul,
    oracle,
    receptive_profile,
    routing_coverage,
    sample,
    save_checkpoint,
    task_names,
    train,
    vanilla_cost,
    verify_lemma,
)

__all__ = [
    "Model",
    "ModelConfig",
    "TaskSpec",
    "TrainConfig",
    "adaptive_depth",
    "attention_cost",
    "build_W1",
    "build_W2",
    "cluster_purity",
    "evaluate",
    "load_checkpoint",
    "make_task",
    "mlp_binary_matmul",
    "oracle",
    "receptive_profile",
    "routing_coverage",
    "sample",
    "save_checkpoint",
    "task_names",
    "train",
    "vanilla_cost",
    "verify_lemma",
]
