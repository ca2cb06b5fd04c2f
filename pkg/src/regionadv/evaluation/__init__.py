from .edges import (
    CannyParams,
    canny_edges,
    cosine_similarity,
    edge_cosine_profile,
    edge_cosine_similarity,
    gaussian_blur,
    sobel_gradients,
    to_grayscale,
)
from .metrics import (
    ATTACK_KINDS,
    AttackSpec,
    accuracy_under_attack,
    adversarial_testset,
    heatmap_source_target,
    param_sweep,
    size_of_x_sweep,
    targeted_success,
    transfer_matrix,
)
from .report import (
    EvalReport,
    MetricTable,
    emit_report,
    load_report,
    report_from_dict,
    report_to_dict,
    table_from_matrix,
)

__all__ = [
    "ATTACK_KINDS",
    "AttackSpec",
    "CannyParams",
    "EvalReport",
    "MetricTable",
    "accuracy_under_attack",
    "adversarial_testset",
    "canny_edges",
    "cosine_similarity",
    "edge_cosine_profile",
    "edge_cosine_similarity",
    "emit_report",
    "gaussian_blur",
    "heatmap_source_target",
    "load_report",
    "param_sweep",
    "report_from_dict",
    "report_to_dict",
    "size_of_x_sweep",
    "sobel_gradients",
    "table_from_matrix",
    "targeted_success",
    "to_grayscale",
    "transfer_matrix",
]
