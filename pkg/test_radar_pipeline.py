"""
Radar cubes, view projection, scene synthesis and the on-disk dataset.
"""

import math
import os

import numpy as np
import pytest

from wrcfusion.core.tensor import Tensor
from wrcfusion.detection.boxes import Box3D, GroundTruthBox
from wrcfusion.errors import ConfigurationError, FormatError, SceneError
from wrcfusion.radar.cube import EA_RANGE_TRIM, RadarCube, RadarGeometry, View, cube_extent
from wrcfusion.radar.cube_io import decode_cube, encode_cube, parse_boxes
from wrcfusion.radar.dataset import (
    SceneDataset,
    generate_dataset,
    list_scenes,
    read_manifest,
    read_scene,
    scene_dir,
    write_scene,
)
from wrcfusion.radar.projection import project
from wrcfusion.radar.synthesis import CameraModel, SceneSettings, SyntheticScene, Target, synthesize

SMALL = RadarGeometry((16, 16, 8, 8))


def cube_with(geometry: RadarGeometry, cells) -> RadarCube:
    cube = RadarCube.zeros(geometry)
    for index, value in cells:
        cube.amp[index] = value
    return cube


def test_view_shapes_and_trimmed_range():
    cube = RadarCube.zeros(SMALL)
    ra, ea = project(cube, View.RA), project(cube, "EA")
    assert ra.channels.shape == (6, 16, 16)
    assert ea.channels.shape == (6, 8, 16)
    assert ra.range_bins_used == 16
    assert ea.range_bins_used == 16 - 2 * EA_RANGE_TRIM


def test_zero_cube_projects_to_zeros_without_nans():
    stats = project(RadarCube.zeros(SMALL), View.RA, normalize=False).channels.data
    assert np.all(np.isfinite(stats))
    assert np.all(stats == 0.0)


def test_constant_cube_has_zero_amplitude_variance():
    cube = RadarCube(np.full(SMALL.dims, 0.7), *SMALL.axes())
    for view in (View.RA, View.EA):
        vm = project(cube, view, normalize=False)
        np.testing.assert_allclose(vm.channel("amp_var"), 0.0, atol=1e-15)
        np.testing.assert_allclose(vm.channel("amp_max"), 0.7)
        np.testing.assert_allclose(vm.channel("amp_median"), 0.7)


def test_single_return_statistics():
    doppler = SMALL.axes()[3]
    cube = cube_with(SMALL, [((5, 3, 2, 6), 2.0)])
    vm = project(cube, View.RA, normalize=False)
    assert vm.channel("amp_max")[5, 3] == 2.0
    assert vm.channel("amp_median")[5, 3] == 0.0
    assert vm.channel("dop_max")[5, 3] == doppler[6]
    assert vm.channel("dop_median")[5, 3] == doppler[6]
    assert vm.channel("dop_var")[5, 3] == 0.0
    assert vm.channel("amp_max")[4, 3] == 0.0


def test_doppler_statistics_are_amplitude_weighted():
    doppler = SMALL.axes()[3]
    cube = cube_with(SMALL, [((2, 2, 0, 1), 1.0), ((2, 2, 0, 5), 3.0)])
    vm = project(cube, View.RA, normalize=False)
    mean = (1.0 * doppler[1] + 3.0 * doppler[5]) / 4.0
    expected_var = (1.0 * (doppler[1] - mean) ** 2 + 3.0 * (doppler[5] - mean) ** 2) / 4.0
    assert vm.channel("dop_var")[2, 2] == pytest.approx(expected_var)
    assert vm.channel("dop_median")[2, 2] == doppler[5]
    assert vm.channel("dop_max")[2, 2] == doppler[5]


def test_ea_view_ignores_trimmed_range_bins():
    cube = cube_with(SMALL, [((0, 4, 4, 4), 5.0), ((15, 4, 4, 4), 5.0)])
    ea = project(cube, View.EA, normalize=False)
    assert np.all(ea.channel("amp_max") == 0.0)
    ra = project(cube, View.RA, normalize=False)
    assert ra.channel("amp_max")[0, 4] == 5.0


def test_ea_needs_more_range_bins_than_the_trim():
    cube = RadarCube.zeros(RadarGeometry((2 * EA_RANGE_TRIM, 4, 4, 4)))
    with pytest.raises(ConfigurationError):
        project(cube, View.EA)


def test_normalized_channels_are_zero_mean():
    rng = np.random.default_rng(3)
    cube = RadarCube(rng.rayleigh(size=SMALL.dims), *SMALL.axes())
    stats = project(cube, View.RA).channels.data
    np.testing.assert_allclose(stats.mean(axis=(1, 2)), 0.0, atol=1e-12)


def test_cube_rejects_inconsistent_axes():
    r, a, e, d = SMALL.axes()
    with pytest.raises(ConfigurationError):
        RadarCube(np.zeros(SMALL.dims), r[::-1], a, e, d)
    with pytest.raises(ConfigurationError):
        RadarCube(-np.ones(SMALL.dims), r, a, e, d)


def test_cube_extent_matches_geometry():
    range_min, range_max, half = cube_extent(RadarCube.zeros(RadarGeometry()))
    assert range_min == pytest.approx(0.0)
    assert range_max == pytest.approx(48.0)
    assert half == pytest.approx(math.pi / 4)


def test_target_lands_in_its_bins():
    target = Target(center=(20.0, 0.0, 0.0), size=(1.8, 4.5, 1.5), yaw=0.0, radial_velocity=2.0,
                    reflectivity=1.0, class_id=0)
    cube, image, boxes = synthesize(SyntheticScene([target], noise_floor=0.0, seed=1), SMALL,
                                    CameraModel((32, 32)))
    range_m, _, _, doppler = SMALL.axes()
    r, a, e, d = np.unravel_index(np.argmax(cube.amp), cube.dims)
    assert r == int(np.argmin(np.abs(range_m - 20.0)))
    assert doppler[d] == 2.0
    assert image.shape == (3, 32, 32)
    assert boxes[0].box == target.box and boxes[0].radial_velocity == 2.0


def test_target_outside_the_field_of_view_is_rejected():
    behind = Target((5.0, 30.0, 0.0), (1.8, 4.5, 1.5), 0.0, 0.0, 1.0, 0)
    too_fast = Target((20.0, 0.0, 0.0), (1.8, 4.5, 1.5), 0.0, 40.0, 1.0, 0)
    for target in (behind, too_fast):
        with pytest.raises(SceneError):
            synthesize(SyntheticScene([target]), SMALL)


def test_generation_is_deterministic_and_worker_independent(tmp_path):
    settings = SceneSettings(num_classes=2)
    first = generate_dataset(str(tmp_path / "a"), "train", 3, 7, SMALL, CameraModel((32, 32)), settings, workers=1)
    second = generate_dataset(str(tmp_path / "b"), "train", 3, 7, SMALL, CameraModel((32, 32)), settings, workers=3)
    assert first == second
    for scene_id in list_scenes(str(tmp_path / "a"), "train"):
        for name in ("cube.bin", "image.bin", "boxes.txt"):
            a = open(os.path.join(scene_dir(str(tmp_path / "a"), "train", scene_id), name), "rb").read()
            b = open(os.path.join(scene_dir(str(tmp_path / "b"), "train", scene_id), name), "rb").read()
            assert a == b


def test_splits_draw_different_scenes(tmp_path):
    root = str(tmp_path)
    generate_dataset(root, "train", 1, 7, SMALL, CameraModel((32, 32)))
    generate_dataset(root, "val", 1, 7, SMALL, CameraModel((32, 32)))
    train_cube, _, _ = read_scene(scene_dir(root, "train", "0000"))
    val_cube, _, _ = read_scene(scene_dir(root, "val", "0000"))
    assert not np.array_equal(train_cube.amp, val_cube.amp)


def test_zero_scenes_writes_an_empty_manifest(tmp_path):
    manifest = generate_dataset(str(tmp_path), "train", 0, 0, SMALL, CameraModel((32, 32)))
    assert manifest.count == 0
    assert read_manifest(str(tmp_path), "train").count == 0
    assert len(SceneDataset(str(tmp_path), "train")) == 0


def test_scene_files_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    cube = RadarCube(rng.rayleigh(size=SMALL.dims), *SMALL.axes())
    image = Tensor(rng.uniform(size=(3, 8, 8)))
    boxes = [GroundTruthBox(1, Box3D(10.0, -2.0, 0.1, 0.6, 1.8, 1.6, 0.3), -1.5)]
    write_scene(str(tmp_path / "scene"), cube, image, boxes)
    cube2, image2, boxes2 = read_scene(str(tmp_path / "scene"))
    np.testing.assert_array_equal(cube2.amp, cube.amp)
    np.testing.assert_array_equal(cube2.doppler_mps, cube.doppler_mps)
    np.testing.assert_array_equal(image2.data, image.data)
    assert boxes2 == boxes


def test_cube_decoder_reports_bad_magic_and_truncation():
    data = encode_cube(RadarCube.zeros(SMALL))
    with pytest.raises(FormatError) as info:
        decode_cube(b"XXXX" + data[4:])
    assert info.value.offset == 0
    with pytest.raises(FormatError) as info:
        decode_cube(data[:-8])
    assert info.value.offset is not None


def test_box_list_rejects_short_lines():
    with pytest.raises(FormatError):
        parse_boxes("0 1.0 2.0 3.0\n")


def test_dataset_samples_carry_views_and_extent(tmp_path):
    generate_dataset(str(tmp_path), "val", 2, 3, SMALL, CameraModel((32, 32)))
    dataset = SceneDataset(str(tmp_path), "val")
    sample = dataset[1]
    assert sample.scene_id == "0001"
    assert sample.ra.channels.shape == (6, 16, 16)
    assert sample.ea.channels.shape == (6, 8, 16)
    assert sample.extent[1] == pytest.approx(48.0)
    assert dataset.get("0001") is sample
    with pytest.raises(FileNotFoundError):
        dataset.get("0099")
