"""
Synthetic Dataset
On-disk scene layout, manifest, generation and loading.

Layout under a dataset root:

    <root>/<split>/manifest.json
    <root>/<split>/scenes/NNNN/{cube.bin, image.bin, boxes.txt}
"""

import logging
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
from tqdm import tqdm

from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import GroundTruthBox
from wrcfusion.errors import FormatError
from wrcfusion.radar.cube import RadarCube, RadarGeometry, View, ViewMap, cube_extent
from wrcfusion.radar.cube_io import read_boxes, read_cube, read_image, write_boxes, write_cube, write_image
from wrcfusion.radar.projection import project
from wrcfusion.radar.synthesis import CameraModel, SceneSettings, class_catalog, random_scene, synthesize

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class SceneEntry:
    scene_id: str
    weather: str
    targets: int


@dataclass
class Manifest:
    """Generator parameters and per-scene summary of one split."""

    split: str
    seed: int
    dims: Tuple[int, int, int, int]
    image_size: Tuple[int, int]
    num_classes: int
    scenes: List[SceneEntry] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.scenes)

    def to_json(self) -> bytes:
        payload = asdict(self)
        payload["count"] = self.count
        return orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    @classmethod
    def from_json(cls, raw: bytes, source: str = MANIFEST_NAME) -> "Manifest":
        try:
            payload = orjson.loads(raw)
            return cls(
                split=payload["split"],
                seed=int(payload["seed"]),
                dims=tuple(payload["dims"]),
                image_size=tuple(payload["image_size"]),
                num_classes=int(payload["num_classes"]),
                scenes=[SceneEntry(**entry) for entry in payload["scenes"]],
            )
        except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"invalid manifest {source}: {e}") from None


def split_dir(root: str, split: str) -> str:
    return os.path.join(root, split)


def scene_dir(root: str, split: str, scene_id: str) -> str:
    return os.path.join(root, split, "scenes", scene_id)


def write_manifest(manifest: Manifest, root: str) -> str:
    path = os.path.join(split_dir(root, manifest.split), MANIFEST_NAME)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(manifest.to_json())
        f.write(b"\n")
    return path


def read_manifest(root: str, split: str) -> Manifest:
    path = os.path.join(split_dir(root, split), MANIFEST_NAME)
    with open(path, "rb") as f:
        return Manifest.from_json(f.read(), source=path)


def list_scenes(root: str, split: str) -> List[str]:
    base = os.path.join(root, split, "scenes")
    if not os.path.isdir(base):
        return []
    return sorted(name for name in os.listdir(base) if os.path.isdir(os.path.join(base, name)))


def write_scene(directory: str, cube: RadarCube, image: Tensor, boxes: Sequence[GroundTruthBox]) -> None:
    """Write cube.bin, image.bin and boxes.txt into `directory`, creating it if needed."""
    os.makedirs(directory, exist_ok=True)
    write_cube(cube, os.path.join(directory, "cube.bin"))
    write_image(image, os.path.join(directory, "image.bin"))
    write_boxes(boxes, os.path.join(directory, "boxes.txt"))


def read_scene(directory: str) -> Tuple[RadarCube, Tensor, List[GroundTruthBox]]:
    cube = read_cube(os.path.join(directory, "cube.bin"))
    image = read_image(os.path.join(directory, "image.bin"))
    boxes = read_boxes(os.path.join(directory, "boxes.txt"))
    return cube, image, boxes


def _scene_seeds(seed: int, split: str, count: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence([seed, zlib.crc32(split.encode("utf-8"))]).spawn(count)


def generate_dataset(root: str, split: str, count: int, seed: int,
                     geometry: RadarGeometry = RadarGeometry(), camera: CameraModel = CameraModel(),
                     settings: SceneSettings = SceneSettings(), workers: int = 1,
                     progress: bool = False) -> Manifest:
    """
    Synthesize `count` scenes of one split and write them with their manifest.

    Scenes are seeded from (seed, split) independently of each other, so the
    output is byte-identical regardless of `workers`.

    Args:
        root: Dataset root directory.
        split: Split name, e.g. "train".
        count: Number of scenes (0 writes an empty manifest).
        seed: Generator seed recorded in the manifest.
        geometry: Radar cube geometry.
        camera: Camera for the paired images.
        settings: Scene drawing knobs.
        workers: Threads used for synthesis.
        progress: Show a tqdm progress bar.

    Returns:
        Manifest: The written manifest.
    """
    classes = class_catalog(settings.num_classes)
    os.makedirs(split_dir(root, split), exist_ok=True)

    def build(index_and_seed) -> SceneEntry:
        index, seq = index_and_seed
        scene_id = f"{index:04d}"
        scene = random_scene(np.random.default_rng(seq), geometry, settings)
        cube, image, boxes = synthesize(scene, geometry, camera, classes)
        write_scene(scene_dir(root, split, scene_id), cube, image, boxes)
        return SceneEntry(scene_id, scene.weather.value, len(boxes))

    jobs = list(enumerate(_scene_seeds(seed, split, count)))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(tqdm(pool.map(build, jobs), total=len(jobs), desc=f"synth {split}",
                            disable=not progress, unit="scene"))

    manifest = Manifest(split, seed, tuple(geometry.dims), tuple(camera.image_size),
                        settings.num_classes, entries)
    path = write_manifest(manifest, root)
    logger.info("Wrote %d %s scenes to %s", len(entries), split, path)
    return manifest


@dataclass
class Sample:
    """One scene ready for the detector."""

    scene_id: str
    image: Tensor
    ra: ViewMap
    ea: ViewMap
    boxes: List[GroundTruthBox]
    weather: str = "clear"
    extent: Tuple[float, float, float] = (0.0, 48.0, math.pi / 4)


def load_sample(root: str, split: str, scene_id: str, weather: str = "clear") -> Sample:
    """
    Read one scene from disk and project its cube to both views.

    Raises:
        FileNotFoundError: The scene directory or one of its files is missing.
        FormatError: A scene file is malformed.
    """
    base = scene_dir(root, split, scene_id)
    if not os.path.isdir(base):
        raise FileNotFoundError(f"scene {scene_id} not found under {split_dir(root, split)}")
    cube, image, boxes = read_scene(base)
    return Sample(scene_id, image, project(cube, View.RA), project(cube, View.EA), boxes, weather,
                  cube_extent(cube))


class SceneDataset:
    """Indexed access to the scenes of one split, with an in-memory sample cache."""

    def __init__(self, root: str, split: str, cache: bool = True):
        self.root = root
        self.split = split
        self.manifest = read_manifest(root, split)
        self.cache = cache
        self._samples: Dict[str, Sample] = {}
        self._weather = {entry.scene_id: entry.weather for entry in self.manifest.scenes}
        self.scene_ids = [entry.scene_id for entry in self.manifest.scenes]

    def __len__(self) -> int:
        return len(self.scene_ids)

    def __getitem__(self, index: int) -> Sample:
        return self.get(self.scene_ids[index])

    def get(self, scene_id: str) -> Sample:
        sample: Optional[Sample] = self._samples.get(scene_id)
        if sample is None:
            sample = load_sample(self.root, self.split, scene_id, self._weather.get(scene_id, "clear"))
            if self.cache:
                self._samples[scene_id] = sample
        return sample
