"""
Cost Report
Parameter counts, exact multiply-accumulate counts, wall-clock timings and
process memory for the WA-MoE block, the GSA attention core and the full
detector.
"""

import logging
import math
import time
from typing import Callable, Dict, List

import numpy as np
import psutil

from wrcfusion.config import RunConfig
from wrcfusion.core.profiler import count_macs
from wrcfusion.core.tensor import Tensor, no_grad
from wrcfusion.models.detector import WRCFusionDetector
from wrcfusion.models.gpf import dense_attention_op_count, gsa_attention, gsa_op_count
from wrcfusion.models.wa_moe import WAMoEBlock, wa_moe_param_count
from wrcfusion.radar.cube import View, cube_extent
from wrcfusion.radar.dataset import Sample
from wrcfusion.radar.projection import project
from wrcfusion.radar.synthesis import class_catalog, random_scene, synthesize

logger = logging.getLogger(__name__)


def _timed(fn: Callable[[], object], repeats: int) -> float:
    """Median wall-clock seconds of `repeats` calls."""
    times = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def loglog_slope(xs: List[int], ys: List[int]) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(xs, dtype=np.float64)), np.log(np.asarray(ys, dtype=np.float64)), 1)[0])


def gsa_sweep(cfg: RunConfig, rng: np.random.Generator) -> Dict:
    """MACs and timing of the attention core over a sweep of EA token counts N."""
    b = cfg.bench
    d, n, k_len = b.dim, b.pooled, b.key_length
    rows = []
    k = Tensor(rng.normal(size=(k_len, d)))
    v = Tensor(rng.normal(size=(k_len, d)))
    a = Tensor(rng.normal(size=(n, d)))
    bias = -math.log(k_len)
    for tokens in b.sweep:
        q = Tensor(rng.normal(size=(tokens, d)))
        with no_grad(), count_macs() as counter:
            gsa_attention(q, k, v, a, bias)
        seconds = _timed(lambda: gsa_attention(q, k, v, a, bias), b.repeats)
        rows.append({
            "tokens": tokens,
            "macs": counter.total,
            "analytic_macs": gsa_op_count(tokens, n, k_len, d),
            "dense_macs": dense_attention_op_count(tokens, k_len, d),
            "seconds": seconds,
        })
    slope = loglog_slope([r["tokens"] for r in rows], [r["macs"] for r in rows])
    return {"pooled": n, "key_length": k_len, "dim": d, "rows": rows, "slope": slope}


def wa_moe_report(cfg: RunConfig, rng: np.random.Generator, size: int = 16) -> Dict:
    block = WAMoEBlock(cfg.wa_moe, rng)
    x = Tensor(rng.normal(size=(cfg.wa_moe.channels, size, size)))
    with no_grad(), count_macs() as counter:
        block(x)
    with no_grad():
        seconds = _timed(lambda: block(x), cfg.bench.repeats)
    return {
        "channels": cfg.wa_moe.channels,
        "input": [cfg.wa_moe.channels, size, size],
        "params": block.num_parameters(),
        "params_closed_form": wa_moe_param_count(cfg.wa_moe),
        "macs": counter["wa_moe"],
        "seconds": seconds,
    }


def random_sample(cfg: RunConfig, rng: np.random.Generator) -> Sample:
    """One synthetic scene in memory, shaped like the configured dataset."""
    geometry = cfg.geometry()
    scene = random_scene(rng, geometry, cfg.scene_settings())
    cube, image, boxes = synthesize(scene, geometry, cfg.camera(), class_catalog(cfg.radar.num_classes))
    return Sample("bench", image, project(cube, View.RA), project(cube, View.EA), boxes, scene.weather.value,
                  cube_extent(cube))


def detector_report(cfg: RunConfig, rng: np.random.Generator) -> Dict:
    model = WRCFusionDetector(cfg.detector(), rng)
    sample = random_sample(cfg, rng)
    with no_grad(), count_macs() as counter:
        model(sample)
    with no_grad():
        seconds = _timed(lambda: model(sample), cfg.bench.repeats)
    return {
        "params": model.num_parameters(),
        "macs": counter.total,
        "macs_by_scope": dict(sorted((k, int(v)) for k, v in counter.by_scope.items())),
        "seconds": seconds,
    }


def run_bench(cfg: RunConfig) -> Dict:
    """
    Full cost report.

    Counts depend only on the configuration and seed; timings and memory do not.
    """
    rng = np.random.default_rng(cfg.seed)
    report = {
        "wa_moe": wa_moe_report(cfg, rng),
        "gsa": gsa_sweep(cfg, rng),
        "detector": detector_report(cfg, rng),
    }
    report["rss_mb"] = psutil.Process().memory_info().rss / (1024 * 1024)
    logger.info("GSA log-log slope %.4f over N=%s; WA-MoE params %d",
                report["gsa"]["slope"], list(cfg.bench.sweep), report["wa_moe"]["params"])
    return report
