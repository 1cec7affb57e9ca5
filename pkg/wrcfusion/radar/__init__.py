"""Radar cube synthesis, projection and scene files."""

from wrcfusion.radar.cube import EA_RANGE_TRIM, VIEW_CHANNELS, RadarCube, RadarGeometry, View, ViewMap, cube_extent
from wrcfusion.radar.cube_io import read_boxes, read_cube, read_image, write_boxes, write_cube, write_image
from wrcfusion.radar.dataset import (
    Manifest,
    Sample,
    SceneDataset,
    generate_dataset,
    list_scenes,
    load_sample,
    read_scene,
    write_scene,
)
from wrcfusion.radar.projection import project
from wrcfusion.radar.synthesis import (
    CLASS_CATALOG,
    CameraModel,
    ClassSpec,
    SceneSettings,
    SyntheticScene,
    Target,
    Weather,
    random_scene,
    synthesize,
)

__all__ = [
    "EA_RANGE_TRIM", "VIEW_CHANNELS", "RadarCube", "RadarGeometry", "View", "ViewMap", "cube_extent",
    "read_boxes", "read_cube", "read_image", "write_boxes", "write_cube", "write_image",
    "Manifest", "Sample", "SceneDataset", "generate_dataset", "list_scenes", "load_sample", "read_scene", "write_scene",
    "project",
    "CLASS_CATALOG", "CameraModel", "ClassSpec", "SceneSettings", "SyntheticScene", "Target", "Weather",
    "random_scene", "synthesize",
]
