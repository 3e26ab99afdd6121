"""Two-stream video salient object detection at desk scale.

The package bundles the network (shared pyramid encoder, confidence-gated
recalibration, dual differential fusion, top-down decoder), the hybrid
segmentation loss, the standard saliency metric suite, a synthetic moving-shape
video generator with exact ground-truth flow, and a training/evaluation/ablation
harness with a CLI.
"""

from vsodkit.encoder import EncoderConfig, PyramidEncoder
from vsodkit.gating import ConfidenceGate, gate_features, iou_target, gate_loss
from vsodkit.fusion import DifferentialEnhance, DifferentialFusion
from vsodkit.model import FUSION_MODES, ModelOutput, SaliencyModel
from vsodkit.losses import bce_loss, ssim_loss, iou_loss, final_loss, total_loss
from vsodkit.metrics import MetricReport, max_f_measure, s_measure, mae, evaluate_dataset
from vsodkit.syndata import SceneConfig, generate_sequence, render_flow_color
from vsodkit.config import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig",
    "PyramidEncoder",
    "ConfidenceGate",
    "gate_features",
    "iou_target",
    "gate_loss",
    "DifferentialEnhance",
    "DifferentialFusion",
    "FUSION_MODES",
    "ModelOutput",
    "SaliencyModel",
    "bce_loss",
    "ssim_loss",
    "iou_loss",
    "final_loss",
    "total_loss",
    "MetricReport",
    "max_f_measure",
    "s_measure",
    "mae",
    "evaluate_dataset",
    "SceneConfig",
    "generate_sequence",
    "render_flow_color",
    "TrainConfig",
    "__version__",
]
