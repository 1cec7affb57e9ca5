"""
Radar-Camera Detector
Image, RA and EA encoders with WA-MoE pyramids, geometry-guided fusion and
the iterative detection head, assembled into one model.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from wrcfusion.core import functional as F
from wrcfusion.core.nn import Module, ModuleList
from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import BoxCoder, Detection
from wrcfusion.detection.postprocess import detections_from_output
from wrcfusion.errors import ConfigurationError, DimensionError
from wrcfusion.models.encoders import ConvEncoder
from wrcfusion.models.fpn import FPN, FPNConfig, PyramidOutput
from wrcfusion.models.gpf import (
    DeformableUncertainAttention,
    GeometrySemanticAlignment,
    GSAConfig,
    PathFusion,
    QueryState,
    ReferenceGenerator,
)
from wrcfusion.models.head import DetectionHead, HeadOutput
from wrcfusion.models.wa_moe import WAMoEConfig
from wrcfusion.radar.cube import EA_RANGE_TRIM, VIEW_CHANNELS
from wrcfusion.radar.dataset import Sample

logger = logging.getLogger(__name__)

STREAMS = ("camera", "ra", "ea")


def parse_streams(value: str) -> Tuple[str, ...]:
    """'all' or a '+'/','-separated subset of camera, ra, ea; 'none' masks every stream."""
    value = value.strip().lower()
    if value == "all":
        return STREAMS
    if value in ("none", ""):
        return ()
    parts = tuple(p.strip() for p in value.replace("+", ",").split(",") if p.strip())
    unknown = [p for p in parts if p not in STREAMS]
    if unknown:
        raise ConfigurationError(f"unknown streams {unknown}; choose from {STREAMS}, 'all' or 'none'")
    return tuple(s for s in STREAMS if s in parts)


def _stage_sizes(size: Tuple[int, int], strides: Sequence[int]) -> List[Tuple[int, int]]:
    sizes, (h, w) = [], size
    for s in strides:
        h, w = -(-h // s), -(-w // s)
        sizes.append((h, w))
    return sizes


@dataclass(frozen=True)
class DetectorConfig:
    """
    Attributes:
        image_size: (H, W) of camera images.
        cube_dims: (R, A, E, D) of radar cubes.
        num_classes: Foreground classes.
        encoder_widths: Channels per encoder stage, shared by all streams.
        image_strides / ra_strides / ea_strides: Per-stage strides of each encoder.
        fpn: Pyramid over the last len(fpn.widths) encoder stages.
        wa_moe: Block template (channels are set per level).
        gsa: Stage-1 attention; gsa.dim is also the query dimension.
        num_queries: Object queries (a perfect square).
        iterations: Head refinement rounds T.
        samples: Deformable samples per level K.
        pool_attention: Pooled grid side used by the reference generator.
    """

    image_size: Tuple[int, int] = (64, 64)
    cube_dims: Tuple[int, int, int, int] = (32, 32, 8, 16)
    num_classes: int = 2
    encoder_widths: Tuple[int, ...] = (16, 32, 64)
    image_strides: Tuple[int, ...] = (2, 2, 2)
    ra_strides: Tuple[int, ...] = (1, 2, 2)
    ea_strides: Tuple[int, ...] = (1, 1, 2)
    fpn: FPNConfig = field(default_factory=FPNConfig)
    wa_moe: WAMoEConfig = field(default_factory=WAMoEConfig)
    gsa: GSAConfig = field(default_factory=GSAConfig)
    num_queries: int = 36
    iterations: int = 3
    samples: int = 4
    pool_attention: int = 4

    def __post_init__(self):
        levels = self.fpn.levels
        if len(self.encoder_widths) < levels:
            raise ConfigurationError(f"{len(self.encoder_widths)} encoder stages cannot feed {levels} FPN levels")
        if tuple(self.encoder_widths[-levels:]) != tuple(self.fpn.in_widths):
            raise ConfigurationError(f"FPN input widths {self.fpn.in_widths} must equal the last encoder widths "
                                     f"{self.encoder_widths[-levels:]}")
        for name in ("image_strides", "ra_strides", "ea_strides"):
            if len(getattr(self, name)) != len(self.encoder_widths):
                raise ConfigurationError(f"{name} needs one stride per encoder stage")
        if self.cube_dims[0] <= 2 * EA_RANGE_TRIM:
            raise ConfigurationError(f"cube needs more than {2 * EA_RANGE_TRIM} range bins, got {self.cube_dims[0]}")

    def level_sizes(self, stream: str) -> List[Tuple[int, int]]:
        """(H, W) of each FPN level of `stream`, fine to coarse."""
        r, a, e, _ = self.cube_dims
        size, strides = {
            "camera": (tuple(self.image_size), self.image_strides),
            "ra": ((r, a), self.ra_strides),
            "ea": ((e, a), self.ea_strides),
        }[stream]
        return _stage_sizes(size, strides)[-self.fpn.levels:]


@dataclass
class DetectorOutput:
    """Head output plus the intermediate state used for inspection and scoring."""

    head: HeadOutput
    queries: QueryState
    pyramids: Dict[str, PyramidOutput]
    gs_maps: List[Tensor]

    @property
    def final_logits(self) -> Tensor:
        return self.head.logits[-1]

    @property
    def final_boxes(self) -> Tensor:
        return self.head.boxes[-1]


class WRCFusionDetector(Module):
    """
    Full detector over one scene.

    Raises:
        ConfigurationError: Pyramid sizes that do not halve, pooled grids too
            large for the EA levels, or a non-square query count.
    """

    def __init__(self, cfg: DetectorConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        levels = cfg.fpn.levels
        self.image_encoder = ConvEncoder(3, cfg.encoder_widths, cfg.image_strides, rng, name="image_encoder")
        self.ra_encoder = ConvEncoder(len(VIEW_CHANNELS), cfg.encoder_widths, cfg.ra_strides, rng, name="ra_encoder")
        self.ea_encoder = ConvEncoder(len(VIEW_CHANNELS), cfg.encoder_widths, cfg.ea_strides, rng, name="ea_encoder")
        self.image_fpn = FPN(cfg.fpn, cfg.wa_moe, rng)
        self.ra_fpn = FPN(cfg.fpn, cfg.wa_moe, rng)
        self.ea_fpn = FPN(cfg.fpn, cfg.wa_moe, rng)
        for stream in STREAMS:
            sizes = cfg.level_sizes(stream)
            for s in range(levels - 1):
                fine, coarse = sizes[s], sizes[s + 1]
                if coarse != (-(-fine[0] // 2), -(-fine[1] // 2)):
                    raise ConfigurationError(f"{stream} pyramid level {s + 1} size {coarse} is not half of {fine}")
        ea_sizes, image_sizes = cfg.level_sizes("ea"), cfg.level_sizes("camera")
        self.gsa = ModuleList([
            GeometrySemanticAlignment(cfg.fpn.widths[lv], cfg.gsa, ea_sizes[lv], image_sizes[lv], s, rng)
            for s, lv in enumerate(cfg.fpn.detection_levels)
        ])
        d = cfg.gsa.dim
        self.reference = ReferenceGenerator(d, cfg.num_queries, cfg.fpn.widths[-1], cfg.fpn.widths[-1], rng,
                                            pool=cfg.pool_attention)
        self.gs_attention = DeformableUncertainAttention(d, [d] * len(cfg.fpn.detection_levels), cfg.samples, rng)
        self.ra_attention = DeformableUncertainAttention(
            d, [cfg.fpn.widths[lv] for lv in cfg.fpn.detection_levels], cfg.samples, rng)
        self.fusion = PathFusion(d, rng)
        self.head = DetectionHead(d, cfg.num_classes, cfg.iterations, rng)

    def _inputs(self, sample: Sample, streams: Sequence[str]) -> Tuple[Tensor, Tensor, Tensor]:
        r, a, e, _ = self.cfg.cube_dims
        image, ra, ea = sample.image, sample.ra.channels, sample.ea.channels
        expected = {
            "image": (image, (3,) + tuple(self.cfg.image_size)),
            "RA map": (ra, (len(VIEW_CHANNELS), r, a)),
            "EA map": (ea, (len(VIEW_CHANNELS), e, a)),
        }
        for name, (tensor, shape) in expected.items():
            if tensor.shape != shape:
                raise DimensionError(f"scene {sample.scene_id}: {name} has shape {tensor.shape}, model expects {shape}")
        # absent streams are zero-masked
        if "camera" not in streams:
            image = Tensor(np.zeros(image.shape))
        if "ra" not in streams:
            ra = Tensor(np.zeros(ra.shape))
        if "ea" not in streams:
            ea = Tensor(np.zeros(ea.shape))
        return image, ra, ea

    def forward(self, sample: Sample, streams: Sequence[str] = STREAMS) -> DetectorOutput:
        levels = self.cfg.fpn.levels
        detection_levels = self.cfg.fpn.detection_levels
        image, ra, ea = self._inputs(sample, streams)
        pyramids = {
            "camera": self.image_fpn.pyramid(self.image_encoder(image)[-levels:]),
            "ra": self.ra_fpn.pyramid(self.ra_encoder(ra)[-levels:]),
            "ea": self.ea_fpn.pyramid(self.ea_encoder(ea)[-levels:]),
        }
        f_image, f_ra, f_ea = (pyramids[s].outputs for s in STREAMS)
        gs_maps = [gsa.as_map(gsa(f_ea[lv], f_image[lv])) for gsa, lv in zip(self.gsa, detection_levels)]

        queries = self.reference(f_image[-1], f_ea[-1])
        nq = queries.num_queries
        # the GS plane shares azimuth with RA; elevation is unknown, so sample mid-height
        gs_reference = F.concat([queries.reference[:, 0:1], np.full((nq, 1), 0.5)], axis=1)
        out_gs, u_gs = self.gs_attention(queries.embedding, gs_reference, gs_maps)
        out_ra, u_ra = self.ra_attention(queries.embedding, queries.reference, [f_ra[lv] for lv in detection_levels])
        queries.uncertainty = F.concat([u_gs, u_ra], axis=1)
        fused = self.fusion(out_gs, out_ra)
        head = self.head(fused, queries.reference)
        return DetectorOutput(head, queries, pyramids, gs_maps)


def detections_for_sample(output: DetectorOutput, sample: Sample, min_score=None) -> List[Detection]:
    """Fused-score detections decoded against the scene's polar extent."""
    coder = BoxCoder(*sample.extent)
    return detections_from_output(output.final_logits.data, output.final_boxes.data,
                                  output.queries.confidence.data, output.queries.uncertainty.data,
                                  coder, sample.scene_id, min_score)
