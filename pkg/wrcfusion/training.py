"""
Training Loop
Dry-run validation, background batch preparation, cosine-scheduled AdamW
and periodic checkpoints.
"""

import logging
import math
import os
import queue
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.logging_config import log_training_step
from wrcfusion.config import RunConfig
from wrcfusion.core.checkpoint import save_checkpoint
from wrcfusion.core.optim import AdamW, cosine_lr
from wrcfusion.detection.boxes import BoxCoder
from wrcfusion.detection.losses import LossBreakdown, set_loss
from wrcfusion.errors import ConfigurationError, ContractError, NumericError
from wrcfusion.models.detector import STREAMS, WRCFusionDetector
from wrcfusion.models.wa_moe import expert_parameters
from wrcfusion.radar.dataset import Sample, SceneDataset

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.wrcf"
LOSS_LOG_NAME = "loss_log.jsonl"


@dataclass
class Batch:
    index: int
    samples: List[Sample]
    targets: List[Tuple[np.ndarray, np.ndarray]]


@dataclass
class TrainResult:
    steps: int
    losses: List[float] = field(default_factory=list)
    checkpoint: str = ""
    loss_log: str = ""

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else math.nan

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else math.nan


def sample_targets(sample: Sample) -> Tuple[np.ndarray, np.ndarray]:
    """Ground-truth class ids and encoded boxes of one scene."""
    coder = BoxCoder(*sample.extent)
    classes = np.array([b.class_id for b in sample.boxes], dtype=np.int64)
    return classes, coder.encode_all(sample.boxes)


def scene_loss(model: WRCFusionDetector, sample: Sample, targets, cfg: RunConfig,
               streams: Sequence[str] = STREAMS) -> LossBreakdown:
    output = model(sample, streams)
    classes, boxes = targets
    return set_loss(output.head.logits, output.head.boxes, classes, boxes, cfg.loss)


def check_dataset(dataset: SceneDataset, cfg: RunConfig) -> None:
    """The dataset must be non-empty and generated with the configured sizes."""
    manifest = dataset.manifest
    if len(dataset) == 0:
        raise ContractError(f"split {dataset.split!r} under {dataset.root} has no scenes; run synth first")
    if tuple(manifest.dims) != tuple(cfg.radar.dims):
        raise ConfigurationError(f"dataset cubes are {tuple(manifest.dims)}, config expects {tuple(cfg.radar.dims)}")
    if tuple(manifest.image_size) != tuple(cfg.image.size):
        raise ConfigurationError(f"dataset images are {tuple(manifest.image_size)}, "
                                 f"config expects {tuple(cfg.image.size)}")
    if manifest.num_classes > cfg.radar.num_classes:
        raise ConfigurationError(f"dataset has {manifest.num_classes} classes, model predicts "
                                 f"{cfg.radar.num_classes}")


class BatchPrefetcher:
    """
    Loads batches on a worker thread into a bounded queue.

    The batch order is fixed before the thread starts, so prefetching never
    changes what the model sees.
    """

    _DONE = object()

    def __init__(self, dataset: SceneDataset, order: Sequence[Sequence[int]], maxsize: int = 2):
        self.dataset = dataset
        self.order = [list(b) for b in order]
        self.queue: "queue.Queue" = queue.Queue(maxsize=maxsize)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="batch-prefetch", daemon=True)

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self.queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self) -> None:
        try:
            for index, ids in enumerate(self.order):
                samples = [self.dataset[i] for i in ids]
                if not self._put(Batch(index, samples, [sample_targets(s) for s in samples])):
                    return
        except Exception as e:  # handed to the consumer
            self._put(e)
            return
        self._put(self._DONE)

    def __enter__(self) -> "BatchPrefetcher":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._stop.set()
        self._thread.join(timeout=5.0)

    def __iter__(self):
        while True:
            item = self.queue.get()
            if item is self._DONE:
                return
            if isinstance(item, Exception):
                raise item
            yield item


def batch_order(num_scenes: int, batch_size: int, steps: int, seed: int) -> List[List[int]]:
    """Scene indices per step: reshuffled epochs, wrapped so every batch is full."""
    rng = np.random.default_rng([seed, 0x7EA1])
    order: List[int] = []
    needed = steps * batch_size
    while len(order) < needed:
        order.extend(rng.permutation(num_scenes).tolist())
    return [order[i * batch_size:(i + 1) * batch_size] for i in range(steps)]


class Trainer:
    """
    Fits a detector on the configured training split.

    Args:
        cfg: Run configuration.
        model: Model to train (built from cfg and seed when None).
        out_dir: Directory for checkpoints and loss_log.jsonl (cfg.output.dir when None).
    """

    def __init__(self, cfg: RunConfig, model: Optional[WRCFusionDetector] = None, out_dir: Optional[str] = None):
        self.cfg = cfg
        self.model = model or WRCFusionDetector(cfg.detector(), np.random.default_rng(cfg.seed))
        self.out_dir = out_dir or cfg.output.dir
        t = cfg.train
        self.optimizer = AdamW(self.model.parameters(), lr=t.lr, betas=tuple(t.betas),
                               weight_decay=t.weight_decay, grad_clip=t.grad_clip)
        # ids of parameters allowed to finish a step without a gradient
        self.gradient_optional = {id(p) for p in expert_parameters(self.model)}

    def dry_run(self, dataset: SceneDataset) -> float:
        """
        Forward, loss and backward on the first scene before step 0.

        Surfaces shape errors early and records the parameters the loss never
        reaches (the reference confidence head, pyramid levels outside
        fpn.detection_levels) as gradient-optional. The gradients are discarded.
        """
        check_dataset(dataset, self.cfg)
        sample = dataset[0]
        self.optimizer.zero_grad()
        loss = scene_loss(self.model, sample, sample_targets(sample), self.cfg)
        value = loss.total.item()
        if not math.isfinite(value):
            raise NumericError(f"dry run produced a non-finite loss on scene {sample.scene_id}")
        loss.total.backward()
        unreached = [p for p in self.optimizer.params if p.grad is None]
        self.gradient_optional.update(id(p) for p in unreached)
        self.optimizer.zero_grad()
        logger.info("Dry run passed on scene %s (loss %.4f, %d parameters, %d not reached by the loss)",
                    sample.scene_id, value, self.model.num_parameters(), len(unreached))
        return value

    def train_step(self, batch: Batch, lr: float) -> dict:
        """
        One AdamW step over `batch`.

        Gradient-optional parameters left without a gradient get zeros so weight
        decay still applies to them. A batch without any ground truth skips the
        box loss, so then every parameter is treated as optional. Any other missing
        gradient reaches adamw_step, which raises ContractError.
        """
        self.optimizer.zero_grad()
        scale = 1.0 / len(batch.samples)
        total = cls = box = 0.0
        for sample, targets in zip(batch.samples, batch.targets):
            loss = scene_loss(self.model, sample, targets, self.cfg)
            (loss.total * scale).backward()
            total += loss.total.item() * scale
            cls += loss.cls * scale
            box += loss.box * scale
        if not math.isfinite(total):
            raise NumericError(f"loss became non-finite at step {batch.index}")
        no_ground_truth = all(len(classes) == 0 for classes, _ in batch.targets)
        for p in self.optimizer.params:
            if p.grad is None and (no_ground_truth or id(p) in self.gradient_optional):
                p.grad = np.zeros_like(p.data)
        grad_norm = self.optimizer.grad_norm()
        self.optimizer.step(lr)
        return {"step": batch.index, "lr": lr, "loss": total, "loss_cls": cls, "loss_box": box,
                "grad_norm": grad_norm}

    def fit(self, dataset: Optional[SceneDataset] = None, progress: bool = False) -> TrainResult:
        """
        Run cfg.train.max_steps optimizer steps.

        Returns:
            TrainResult: Per-step losses and the written files.

        Raises:
            ConfigurationError: Dataset and config disagree, or shapes do not fit the model.
            NumericError: The loss becomes non-finite.
        """
        t = self.cfg.train
        dataset = dataset or SceneDataset(self.cfg.data.root, self.cfg.data.train_split)
        self.dry_run(dataset)
        os.makedirs(self.out_dir, exist_ok=True)
        checkpoint = os.path.join(self.out_dir, CHECKPOINT_NAME)
        loss_log = os.path.join(self.out_dir, LOSS_LOG_NAME)
        result = TrainResult(0, checkpoint=checkpoint, loss_log=loss_log)
        order = batch_order(len(dataset), t.batch_size, t.max_steps, self.cfg.seed)
        logger.info("Training %d steps, batch %d, lr %g on %d scenes", t.max_steps, t.batch_size, t.lr, len(dataset))
        with open(loss_log, "wb") as sink, BatchPrefetcher(dataset, order, t.prefetch) as batches:
            for batch in batches:
                lr = cosine_lr(batch.index, t.max_steps, t.lr, t.lr_floor)
                record = self.train_step(batch, lr)
                log_training_step(record, sink)
                result.losses.append(record["loss"])
                result.steps += 1
                if progress and (batch.index % max(1, t.log_every) == 0):
                    logger.info("step %d/%d loss %.4f lr %.3g", batch.index, t.max_steps, record["loss"], lr)
                if t.checkpoint_every and (batch.index + 1) % t.checkpoint_every == 0:
                    save_checkpoint(self.model, checkpoint)
        save_checkpoint(self.model, checkpoint)
        if result.losses:
            logger.info("Finished %d steps: loss %.4f -> %.4f", result.steps, result.initial_loss, result.final_loss)
        return result
