"""Unified loss-minimisation estimation for cognitive diagnosis models."""

from ._kernels import BACKEND
from .estimators import (
    CentroidTable,
    EstimatorSpec,
    FitResult,
    classify_with_centroids,
    fit,
    iterative_fit,
    mmle_em_fit,
    npc_fit,
)
from .ideal import (
    GDINA_TABLE_LARGE,
    GDINA_TABLE_SMALL,
    DinaItemParams,
    GdinaItemParams,
    gnpc_constraints,
    ideal_dina,
    ideal_dino,
    ideal_table,
)
from .losses import LossKind, Penalty, item_loss, pattern_loss, total_loss
from .metrics import AgreementReport, agreement
from .patterns import (
    CDMError,
    DimensionError,
    ModelKind,
    QMatrix,
    class_counts,
    dominates,
    disjoint,
    equivalence_classes,
    index_to_pattern,
    pattern_to_index,
)
from .simulation import AttributeDistribution, ExperimentConfig, ItemModel, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "AttributeDistribution",
    "BACKEND",
    "CDMError",
    "CentroidTable",
    "DimensionError",
    "DinaItemParams",
    "EstimatorSpec",
    "ExperimentConfig",
    "FitResult",
    "GDINA_TABLE_LARGE",
    "GDINA_TABLE_SMALL",
    "GdinaItemParams",
    "ItemModel",
    "LossKind",
    "ModelKind",
    "Penalty",
    "QMatrix",
    "agreement",
    "class_counts",
    "classify_with_centroids",
    "disjoint",
    "dominates",
    "equivalence_classes",
    "fit",
    "gnpc_constraints",
    "ideal_dina",
    "ideal_dino",
    "ideal_table",
    "index_to_pattern",
    "item_loss",
    "iterative_fit",
    "mmle_em_fit",
    "npc_fit",
    "pattern_loss",
    "pattern_to_index",
    "run_experiment",
    "total_loss",
]
