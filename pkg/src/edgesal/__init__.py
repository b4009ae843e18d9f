"""Edge-aware salient object detection at desk scale."""

__version__ = "0.1.0"

from .labels import TriLabelMap, three_category_labels
from .metrics import aggregate, evaluate, f_measure, mae, pr_curve
from .rbd import RBDParams, rbd_saliency

__all__ = [
    "RBDParams",
    "TriLabelMap",
    "__version__",
    "aggregate",
    "evaluate",
    "f_measure",
    "mae",
    "pr_curve",
    "rbd_saliency",
    "three_category_labels",
]
