"""
Feature-Map Inspection
Dumps each stream's finest pyramid level before and after its WA-MoE block
as graymap grids.
"""

import logging
import os
from typing import List

from utils.graymap import tile_channels, write_pgm
from wrcfusion.core.tensor import no_grad
from wrcfusion.models.detector import STREAMS, WRCFusionDetector
from wrcfusion.radar.dataset import Sample

logger = logging.getLogger(__name__)


def dump_feature_maps(model: WRCFusionDetector, sample: Sample, out_dir: str, level: int = 0) -> List[str]:
    """
    Write `<stream>_pre_wa_moe.pgm` and `<stream>_post_wa_moe.pgm` for every stream.

    "pre" is the merged pyramid map entering the block, "post" the block
    output before the lateral skip, so an identity block yields identical files.

    Returns:
        list: Written paths, streams x 2.
    """
    with no_grad():
        output = model(sample)
    paths = []
    for stream in STREAMS:
        pyramid = output.pyramids[stream]
        for tag, maps in (("pre", pyramid.merged[level]), ("post", pyramid.blocks[level])):
            path = os.path.join(out_dir, f"{stream}_{tag}_wa_moe.pgm")
            paths.append(write_pgm(path, tile_channels(maps.data)))
    logger.info("Wrote %d feature-map dumps for scene %s to %s", len(paths), sample.scene_id, out_dir)
    return paths
