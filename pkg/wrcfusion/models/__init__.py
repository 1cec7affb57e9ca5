"""Wavelet blocks, pyramids, fusion stages and the assembled detector."""

from wrcfusion.models.detector import (
    STREAMS,
    DetectorConfig,
    DetectorOutput,
    WRCFusionDetector,
    detections_for_sample,
    parse_streams,
)
from wrcfusion.models.fpn import FPN, FPNConfig, fpn_forward
from wrcfusion.models.gpf import GSAConfig, gsa_forward
from wrcfusion.models.head import DetectionHead, head_forward
from wrcfusion.models.wa_moe import WAMoEBlock, WAMoEConfig, wa_moe_forward, wa_moe_param_count
from wrcfusion.models.wavelet import Subbands, dwt2, iwt2

__all__ = [
    "STREAMS", "DetectorConfig", "DetectorOutput", "WRCFusionDetector", "detections_for_sample", "parse_streams",
    "FPN", "FPNConfig", "fpn_forward",
    "GSAConfig", "gsa_forward",
    "DetectionHead", "head_forward",
    "WAMoEBlock", "WAMoEConfig", "wa_moe_forward", "wa_moe_param_count",
    "Subbands", "dwt2", "iwt2",
]
