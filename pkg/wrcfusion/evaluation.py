"""
Evaluation
Runs a detector over a split, writes the detection dump and scores it.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from wrcfusion.config import RunConfig
from wrcfusion.core.checkpoint import load_checkpoint
from wrcfusion.core.tensor import no_grad
from wrcfusion.detection.boxes import Detection
from wrcfusion.detection.metrics import EvaluationReport, evaluate_detections, write_detections
from wrcfusion.models.detector import STREAMS, WRCFusionDetector, detections_for_sample, parse_streams
from wrcfusion.radar.dataset import SceneDataset
from wrcfusion.radar.synthesis import class_catalog
from wrcfusion.training import CHECKPOINT_NAME

logger = logging.getLogger(__name__)


def resolve_checkpoint(cfg: RunConfig, explicit: Optional[str] = None) -> str:
    """Explicit path, then eval.checkpoint, then <output.dir>/checkpoint.wrcf if it exists; "" for none."""
    path = explicit or cfg.eval.checkpoint
    if path:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"checkpoint {path} does not exist")
        return path
    default = os.path.join(cfg.output.dir, CHECKPOINT_NAME)
    if os.path.isfile(default):
        return default
    logger.warning("No checkpoint found at %s; using freshly initialized weights", default)
    return ""


@dataclass
class EvaluationResult:
    report: EvaluationReport
    detections: List[Detection]
    dump_path: str
    streams: Sequence[str]

    def as_dict(self) -> Dict:
        payload = self.report.as_dict()
        payload["streams"] = list(self.streams) or ["none"]
        payload["dump"] = self.dump_path
        return payload


class Evaluator:
    """
    Scores a detector on one split.

    Args:
        cfg: Run configuration.
        model: Detector (built from cfg when None, then loaded from `checkpoint`).
        checkpoint: Checkpoint path; empty leaves the freshly initialized weights.
    """

    def __init__(self, cfg: RunConfig, model: Optional[WRCFusionDetector] = None, checkpoint: str = ""):
        self.cfg = cfg
        self.model = model or WRCFusionDetector(cfg.detector(), np.random.default_rng(cfg.seed))
        if checkpoint:
            load_checkpoint(self.model, checkpoint)

    def predict(self, dataset: SceneDataset, streams: Sequence[str] = STREAMS,
                progress: bool = False) -> List[Detection]:
        """All Nq detections of every scene, in scene order."""
        detections: List[Detection] = []
        with no_grad():
            for i in tqdm(range(len(dataset)), desc=f"eval {dataset.split}", disable=not progress, unit="scene"):
                sample = dataset[i]
                output = self.model(sample, streams)
                detections.extend(detections_for_sample(output, sample))
        return detections

    def run(self, split: Optional[str] = None, streams=None, out_dir: Optional[str] = None,
            progress: bool = False) -> EvaluationResult:
        """
        Evaluate on `split` with the given sensor subset.

        Args:
            split: Split name (cfg.eval.split when None).
            streams: Stream tuple or a string such as "ra" or "camera+ra" (cfg.eval.streams when None).
            out_dir: Where detections.txt goes (cfg.output.dir when None).
            progress: Show a progress bar.

        Returns:
            EvaluationResult: Report, detections and the dump path.
        """
        split = split or self.cfg.eval.split
        if streams is None:
            streams = self.cfg.eval.streams
        if isinstance(streams, str):
            streams = parse_streams(streams)
        out_dir = out_dir or self.cfg.output.dir
        dataset = SceneDataset(self.cfg.data.root, split)
        detections = self.predict(dataset, streams, progress)
        label = "+".join(streams) if streams else "none"
        dump_path = os.path.join(out_dir, f"detections_{split}_{label}.txt")
        write_detections(dump_path, detections)
        ground_truths = {sid: dataset.get(sid).boxes for sid in dataset.scene_ids}
        weather = {entry.scene_id: entry.weather for entry in dataset.manifest.scenes}
        names = [spec.name for spec in class_catalog(self.cfg.radar.num_classes)]
        report = evaluate_detections(detections, ground_truths, names, self.cfg.eval.threshold, weather)
        logger.info("Evaluated %d scenes of %s with streams %s: AP_BEV %.4f, AP_3D %.4f",
                    len(dataset), split, label, report.mean_ap_bev, report.mean_ap_3d)
        return EvaluationResult(report, detections, dump_path, tuple(streams))
