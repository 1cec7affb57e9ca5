"""
Scene Synthesis
Random scenes, their radar cubes, paired camera images and exact boxes.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import Box3D, GroundTruthBox
from wrcfusion.errors import ConfigurationError, SceneError
from wrcfusion.radar.cube import RadarCube, RadarGeometry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassSpec:
    """Appearance of one object class: mean size (w, l, h), radar reflectivity, image colour."""

    name: str
    size: Tuple[float, float, float]
    reflectivity: float
    color: Tuple[float, float, float]
    max_speed_mps: float


CLASS_CATALOG = (
    ClassSpec("sedan", (1.8, 4.5, 1.5), 1.0, (0.85, 0.15, 0.15), 6.0),
    ClassSpec("bus_or_truck", (2.5, 10.0, 3.2), 1.6, (0.95, 0.75, 0.10), 4.0),
    ClassSpec("pedestrian", (0.6, 0.6, 1.75), 0.35, (0.15, 0.35, 0.90), 1.5),
    ClassSpec("bicycle", (0.6, 1.8, 1.6), 0.45, (0.20, 0.80, 0.25), 3.0),
    ClassSpec("motorcycle", (0.8, 2.1, 1.5), 0.6, (0.70, 0.20, 0.75), 5.0),
)


def class_catalog(num_classes: int) -> Tuple[ClassSpec, ...]:
    if not 1 <= num_classes <= len(CLASS_CATALOG):
        raise ConfigurationError(f"num_classes must be in 1..{len(CLASS_CATALOG)}, got {num_classes}")
    return CLASS_CATALOG[:num_classes]


class Weather(str, enum.Enum):
    CLEAR = "clear"
    OVERCAST = "overcast"
    FOG = "fog"
    RAIN = "rain"
    SLEET = "sleet"
    SNOW = "snow"


# (image contrast, image noise std, radar noise-floor factor)
WEATHER_EFFECTS = {
    Weather.CLEAR: (1.0, 0.01, 1.0),
    Weather.OVERCAST: (0.85, 0.02, 1.0),
    Weather.FOG: (0.35, 0.03, 1.05),
    Weather.RAIN: (0.7, 0.06, 1.2),
    Weather.SLEET: (0.55, 0.08, 1.3),
    Weather.SNOW: (0.45, 0.10, 1.25),
}


@dataclass(frozen=True)
class Target:
    """
    One object in a scene.

    Attributes:
        center: (x, y, z) in metres, ego frame.
        size: (w, l, h) in metres.
        yaw: Heading in radians.
        radial_velocity: Closing speed along the line of sight in m/s.
        reflectivity: Peak radar amplitude before noise (> 0).
        class_id: Index into the class catalog.
    """

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float
    radial_velocity: float
    reflectivity: float
    class_id: int

    @property
    def box(self) -> Box3D:
        return Box3D(*self.center, *self.size, self.yaw)

    def polar(self) -> Tuple[float, float, float]:
        x, y, z = self.center
        ground = math.hypot(x, y)
        return math.hypot(ground, z), math.atan2(y, x), math.atan2(z, ground)


@dataclass
class SyntheticScene:
    targets: List[Target] = field(default_factory=list)
    noise_floor: float = 0.05
    seed: int = 0
    weather: Weather = Weather.CLEAR


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera at the radar origin looking along +x."""

    image_size: Tuple[int, int] = (64, 64)
    hfov_deg: float = 90.0

    @property
    def focal(self) -> float:
        return (self.image_size[1] / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project N x 3 ego points (x > 0) to N x 2 pixel (col, row) coordinates."""
        h, w = self.image_size
        depth = points[:, 0]
        cols = w / 2.0 - self.focal * points[:, 1] / depth
        rows = h / 2.0 - self.focal * points[:, 2] / depth
        return np.column_stack([cols, rows])


@dataclass(frozen=True)
class SceneSettings:
    """Knobs of `random_scene`."""

    num_classes: int = 2
    max_targets: int = 3
    min_separation_m: float = 6.0
    min_range_m: float = 6.0
    mount_height_m: float = 0.8
    noise_floor: float = 0.05
    weathers: Tuple[str, ...] = tuple(w.value for w in Weather)


def _check_target(index: int, target: Target, geometry: RadarGeometry, classes: int) -> None:
    label = f"target {index} (class {target.class_id} at x={target.center[0]:.2f}, y={target.center[1]:.2f})"
    rng, az, el = target.polar()
    doppler = geometry.axes()[3]
    if not 0.0 <= rng <= geometry.range_max_m:
        raise SceneError(f"{label} is at range {rng:.2f} m, outside 0..{geometry.range_max_m} m")
    if abs(az) > geometry.azimuth_half_rad:
        raise SceneError(f"{label} is at azimuth {math.degrees(az):.1f} deg, outside the field of view")
    if abs(el) > geometry.elevation_half_rad:
        raise SceneError(f"{label} is at elevation {math.degrees(el):.1f} deg, outside the field of view")
    dv = geometry.doppler_resolution_mps / 2.0
    if not doppler[0] - dv <= target.radial_velocity <= doppler[-1] + dv:
        raise SceneError(f"{label} has radial velocity {target.radial_velocity} m/s outside the Doppler axis")
    if target.reflectivity <= 0:
        raise SceneError(f"{label} has non-positive reflectivity {target.reflectivity}")
    if not 0 <= target.class_id < classes:
        raise SceneError(f"{label} has class id outside 0..{classes - 1}")


def render_radar(scene: SyntheticScene, geometry: RadarGeometry, rng: np.random.Generator) -> RadarCube:
    range_m, azimuth, elevation, doppler = geometry.axes()
    dr = range_m[1] - range_m[0]
    da = azimuth[1] - azimuth[0]
    de = elevation[1] - elevation[0]
    amp = np.zeros(geometry.dims)
    for target in scene.targets:
        r, az, el = target.polar()
        w, length, h = target.size
        extent = max(w, length)
        sigma_r = max(dr, 0.25 * (w + length))
        sigma_a = max(da, math.atan2(0.5 * extent, r))
        sigma_e = max(de, math.atan2(0.5 * h, r))
        gr = np.exp(-0.5 * ((range_m - r) / sigma_r) ** 2)
        ga = np.exp(-0.5 * ((azimuth - az) / sigma_a) ** 2)
        ge = np.exp(-0.5 * ((elevation - el) / sigma_e) ** 2)
        profile = np.zeros(len(doppler))
        main = int(np.argmin(np.abs(doppler - target.radial_velocity)))
        profile[main] = 1.0
        for side in (main - 1, main + 1):
            if 0 <= side < len(doppler):
                profile[side] = 0.25
        amp += target.reflectivity * np.einsum("r,a,e,d->raed", gr, ga, ge, profile)
    factor = WEATHER_EFFECTS[Weather(scene.weather)][2]
    if scene.noise_floor > 0:
        amp += rng.rayleigh(scale=scene.noise_floor * factor, size=amp.shape)
    return RadarCube(amp, range_m, azimuth, elevation, doppler)


def render_image(scene: SyntheticScene, camera: CameraModel, rng: np.random.Generator,
                 classes: Sequence[ClassSpec] = CLASS_CATALOG) -> np.ndarray:
    """3 x H x W image in [0, 1]: sky/ground backdrop, targets as shaded rectangles, weather degradation."""
    h, w = camera.image_size
    image = np.empty((3, h, w))
    horizon = h // 2
    image[:, :horizon] = np.array([0.55, 0.65, 0.80])[:, None, None]
    image[:, horizon:] = np.array([0.30, 0.30, 0.30])[:, None, None]
    # painter's order: far targets first
    for target in sorted(scene.targets, key=lambda t: -t.center[0]):
        corners = target.box.corners()
        if np.any(corners[:, 0] <= 0.1):
            continue
        pix = camera.project(corners)
        c0, r0 = np.floor(pix.min(axis=0)).astype(int)
        c1, r1 = np.ceil(pix.max(axis=0)).astype(int)
        c0, c1 = max(c0, 0), min(c1, w)
        r0, r1 = max(r0, 0), min(r1, h)
        if c0 >= c1 or r0 >= r1:
            continue
        shade = 1.0 / (1.0 + target.center[0] / 30.0)
        color = np.asarray(classes[target.class_id].color) * (0.4 + 0.6 * shade)
        image[:, r0:r1, c0:c1] = color[:, None, None]
    contrast, noise, _ = WEATHER_EFFECTS[Weather(scene.weather)]
    image = contrast * image + (1.0 - contrast) * 0.7
    if noise > 0:
        image = image + rng.normal(0.0, noise, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def synthesize(scene: SyntheticScene, geometry: RadarGeometry = RadarGeometry(),
               camera: CameraModel = CameraModel(),
               classes: Sequence[ClassSpec] = CLASS_CATALOG) -> Tuple[RadarCube, Tensor, List[GroundTruthBox]]:
    """
    Render a scene into a radar cube, a camera image and its ground truth.

    Each target deposits a Gaussian blob at its (range, azimuth, elevation)
    with energy at the Doppler bin nearest its radial velocity (a quarter of
    it leaks into both neighbours). Rayleigh noise at the scene's noise floor
    is added on top.

    Args:
        scene: Scene description; its seed drives all noise.
        geometry: Cube dimensions and physical extent.
        camera: Pinhole camera for the paired image.
        classes: Class catalog used for image colours.

    Returns:
        tuple: (cube, 3 x H x W image tensor, ground-truth boxes).

    Raises:
        SceneError: A target falls outside the cube extent.
    """
    for index, target in enumerate(scene.targets):
        _check_target(index, target, geometry, len(classes))
    rng = np.random.default_rng(scene.seed)
    cube = render_radar(scene, geometry, rng)
    image = render_image(scene, camera, rng, classes)
    boxes = [GroundTruthBox(t.class_id, t.box, t.radial_velocity) for t in scene.targets]
    return cube, Tensor(image), boxes


def random_scene(rng: np.random.Generator, geometry: RadarGeometry = RadarGeometry(),
                 settings: SceneSettings = SceneSettings()) -> SyntheticScene:
    """
    Draw 1..max_targets targets inside the field of view with a minimum centre separation.

    Args:
        rng: Source of randomness; the scene's own noise seed is drawn from it too.
        geometry: Extent the targets must fit.
        settings: Class count, target count and placement limits.

    Returns:
        SyntheticScene: A scene that `synthesize` accepts.
    """
    classes = class_catalog(settings.num_classes)
    if not settings.weathers:
        raise ConfigurationError("at least one weather condition is required")
    weathers = [Weather(w) for w in settings.weathers]
    vmax = (geometry.dims[3] // 2 - 1) * geometry.doppler_resolution_mps
    count = int(rng.integers(1, settings.max_targets + 1))
    targets: List[Target] = []
    attempts = 0
    while len(targets) < count and attempts < 200:
        attempts += 1
        class_id = int(rng.integers(len(classes)))
        spec = classes[class_id]
        size = tuple(float(s) for s in np.asarray(spec.size) * rng.uniform(0.9, 1.1, size=3))
        far = max(geometry.range_max_m - max(6.0, size[1]), settings.min_range_m + 1.0)
        ground = float(rng.uniform(settings.min_range_m, far))
        az = float(rng.uniform(-0.8, 0.8) * geometry.azimuth_half_rad)
        center = (ground * math.cos(az), ground * math.sin(az), size[2] / 2.0 - settings.mount_height_m)
        if any(math.dist(center[:2], t.center[:2]) < settings.min_separation_m for t in targets):
            continue
        speed = min(spec.max_speed_mps, vmax)
        targets.append(Target(
            center=center,
            size=size,
            yaw=float(rng.uniform(-math.pi, math.pi)),
            radial_velocity=float(rng.uniform(-speed, speed)),
            reflectivity=float(spec.reflectivity * rng.uniform(0.8, 1.2)),
            class_id=class_id,
        ))
    weather = weathers[int(rng.integers(len(weathers)))]
    seed = int(rng.integers(2 ** 32))
    logger.debug("Drew scene with %d targets in %s weather (seed %d)", len(targets), weather.value, seed)
    return SyntheticScene(targets, settings.noise_floor, seed, weather)
