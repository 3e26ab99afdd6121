"""End-to-end model assembly.

Each forward pass encodes the RGB frame and the rendered flow image with the
shared pyramid, optionally gates every level of each stream by its predicted
confidence, fuses the streams level-wise, and decodes top-down to the final
saliency map. The fusion mode selects the ablation variant; gate-free modes
carry no gating or differential-fusion parameters at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from vsodkit.decoder import SaliencyDecoder
from vsodkit.encoder import EncoderConfig, PyramidEncoder, validate_image
from vsodkit.fusion import AddFusion, ConcatFusion, DifferentialFusion, MulFusion
from vsodkit.gating import ConfidenceGate

FUSION_MODES = ("cag_dde", "cag_only", "dde_only", "concat", "add", "mul")
GATED_MODES = ("cag_dde", "cag_only")
STREAMS = ("rgb", "flow")


@dataclass
class ModelOutput:
    """Final map plus the auxiliary heads needed by the training loss."""

    final: torch.Tensor
    aux_maps: dict[str, list[torch.Tensor]] = field(default_factory=dict)
    confidences: dict[str, list[torch.Tensor]] = field(default_factory=dict)


class SaliencyModel(nn.Module):
    def __init__(
        self,
        encoder_config: EncoderConfig | None = None,
        fusion_mode: str = "cag_dde",
    ):
        super().__init__()
        if fusion_mode not in FUSION_MODES:
            raise ValueError(
                f"unknown fusion mode '{fusion_mode}', expected one of {FUSION_MODES}"
            )
        self.fusion_mode = fusion_mode
        self.encoder = PyramidEncoder(encoder_config)
        chans = self.encoder.channels

        self.gated = fusion_mode in GATED_MODES
        if self.gated:
            self.gates_rgb = nn.ModuleList([ConfidenceGate(c) for c in chans])
            self.gates_flow = nn.ModuleList([ConfidenceGate(c) for c in chans])

        if fusion_mode in ("cag_dde", "dde_only"):
            fusion_cls = DifferentialFusion
        elif fusion_mode in ("cag_only", "concat"):
            fusion_cls = ConcatFusion
        elif fusion_mode == "add":
            fusion_cls = AddFusion
        else:
            fusion_cls = MulFusion
        self.fusions = nn.ModuleList([fusion_cls(c) for c in chans])
        self.decoder = SaliencyDecoder(chans)

    def forward(self, rgb: torch.Tensor, flow_img: torch.Tensor) -> ModelOutput:
        validate_image(rgb, "rgb")
        validate_image(flow_img, "flow image")
        feats_rgb, feats_flow = self.encoder.forward_pair(rgb, flow_img)

        aux_maps: dict[str, list[torch.Tensor]] = {}
        confidences: dict[str, list[torch.Tensor]] = {}
        if self.gated:
            gated_rgb, gated_flow = [], []
            aux_maps = {s: [] for s in STREAMS}
            confidences = {s: [] for s in STREAMS}
            for gate_r, gate_f, f_r, f_f in zip(
                self.gates_rgb, self.gates_flow, feats_rgb, feats_flow
            ):
                out_r, map_r, conf_r = gate_r(f_r)
                out_f, map_f, conf_f = gate_f(f_f)
                gated_rgb.append(out_r)
                gated_flow.append(out_f)
                aux_maps["rgb"].append(map_r)
                aux_maps["flow"].append(map_f)
                confidences["rgb"].append(conf_r)
                confidences["flow"].append(conf_f)
            feats_rgb, feats_flow = gated_rgb, gated_flow

        fused = [
            fusion(f_r, f_f)
            for fusion, f_r, f_f in zip(self.fusions, feats_rgb, feats_flow)
        ]
        final = self.decoder(fused)
        return ModelOutput(final=final, aux_maps=aux_maps, confidences=confidences)
