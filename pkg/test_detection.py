"""
Matching, losses, overlap, average precision, decoding and the assembled detector.
"""

import dataclasses
import itertools
import math

import numpy as np
import pytest

from wrcfusion.bench import random_sample
from wrcfusion.core.gradcheck import gradcheck
from wrcfusion.core.tensor import Tensor, no_grad
from wrcfusion.detection.boxes import BoxCoder, Box3D, Detection, GroundTruthBox, decode_box, fuse_score
from wrcfusion.detection.iou import iou_3d, iou_bev
from wrcfusion.detection.losses import LossWeights, focal_loss, set_loss
from wrcfusion.detection.matching import hungarian_match, matching_cost
from wrcfusion.detection.metrics import average_precision, evaluate_detections, read_detections, write_detections
from wrcfusion.detection.postprocess import detections_from_output
from wrcfusion.errors import ConfigurationError, ContractError, FormatError, NumericError
from wrcfusion.models.detector import STREAMS, DetectorConfig, WRCFusionDetector, detections_for_sample, parse_streams
from wrcfusion.models.head import DetectionHead, RefinementFFN, head_forward


def det(box, score, scene="0000", class_id=0, num_classes=2):
    probs = np.full(num_classes + 1, 0.1)
    probs[class_id] = 0.8
    return Detection(box, probs, score, 1.0, 1.0, score, scene)


CAR = Box3D(10.0, 0.0, 0.0, 2.0, 4.0, 1.5)
CYCLIST = Box3D(20.0, 5.0, 0.0, 0.6, 1.8, 1.6, 0.4)
FAR = Box3D(40.0, -10.0, 0.0, 2.0, 4.0, 1.5)


# ---------- matching ----------
def test_hungarian_prefers_the_cheaper_diagonal():
    result = hungarian_match(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert result.total == 2.0
    assert result.pairs() == [(0, 0), (1, 1)]


def test_hungarian_matches_brute_force_on_random_squares():
    rng = np.random.default_rng(11)
    perms = list(itertools.permutations(range(5)))
    for _ in range(100):
        cost = rng.uniform(size=(5, 5))
        best = min(sum(cost[q, g] for g, q in enumerate(perm)) for perm in perms)
        assert hungarian_match(cost).total == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("shape", [(5, 5), (6, 3)])
def test_hungarian_matches_brute_force(rng, shape):
    cost = rng.uniform(size=shape)
    nq, ng = shape
    best = min(sum(cost[q, g] for g, q in enumerate(perm)) for perm in itertools.permutations(range(nq), ng))
    result = hungarian_match(cost)
    assert result.total == pytest.approx(best)
    np.testing.assert_array_equal(result.targets, np.arange(ng))
    assert len(set(result.queries.tolist())) == ng


def test_hungarian_rejects_bad_costs():
    with pytest.raises(NumericError):
        hungarian_match(np.array([[np.nan, 1.0], [1.0, 0.0]]))
    with pytest.raises(ContractError):
        hungarian_match(np.zeros((2, 3)))
    assert hungarian_match(np.zeros((4, 0))).total == 0.0


def test_matching_cost_combines_class_and_box_terms():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    pred = np.array([[0.5] * 8, [0.0] * 8])
    gt_boxes = np.array([[0.5] * 8])
    cost = matching_cost(probs, pred, np.array([1]), gt_boxes, cls_weight=2.0, box_weight=5.0)
    np.testing.assert_allclose(cost[:, 0], [2.0 * 0.8, 2.0 * 0.7 + 5.0 * 4.0])


# ---------- losses ----------
def test_focal_loss_hand_values():
    logits = Tensor(np.zeros((2, 2)))
    # p_t = 0.5 for both rows; row 0 foreground, row 1 background
    expected = -(0.25 + 0.75) * 0.25 * math.log(0.5)
    assert focal_loss(logits, np.array([0, 1])).item() == pytest.approx(expected)


def test_focal_loss_vanishes_for_confident_correct_predictions():
    logits = Tensor(np.array([[30.0, 0.0, 0.0], [0.0, 0.0, 30.0]]))
    assert focal_loss(logits, np.array([0, 2])).item() < 1e-12


def test_set_loss_is_invariant_to_ground_truth_order(rng):
    coder = BoxCoder()
    gts = [GroundTruthBox(0, CAR), GroundTruthBox(1, CYCLIST)]
    logits = [Tensor(rng.normal(size=(4, 3))) for _ in range(2)]
    boxes = [Tensor(rng.normal(size=(4, 8))) for _ in range(2)]
    forward = set_loss(logits, boxes, np.array([0, 1]), coder.encode_all(gts))
    backward = set_loss(logits, boxes, np.array([1, 0]), coder.encode_all(gts[::-1]))
    assert forward.total.item() == pytest.approx(backward.total.item())
    assert len(forward.assignments) == 2


def test_zero_box_weight_ignores_box_predictions(rng):
    logits = [Tensor(rng.normal(size=(4, 3)))]
    gt = BoxCoder().encode_all([GroundTruthBox(0, CAR)])
    weights = LossWeights(cls=2.0, box=0.0)
    a = set_loss(logits, [Tensor(rng.normal(size=(4, 8)))], np.array([0]), gt, weights)
    b = set_loss(logits, [Tensor(rng.normal(size=(4, 8)))], np.array([0]), gt, weights)
    assert a.total.item() == b.total.item()
    with pytest.raises(ConfigurationError):
        LossWeights(cls=0.0, box=0.0)


def test_set_loss_without_ground_truth_supervises_background(rng):
    logits = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    boxes = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
    loss = set_loss([logits], [boxes], np.zeros(0), np.zeros((0, 8)))
    assert loss.box == 0.0 and loss.cls > 0.0
    loss.total.backward()
    assert logits.grad is not None and boxes.grad is None


# ---------- overlap ----------
def test_bev_iou_values():
    unit = Box3D(0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
    assert iou_bev(unit, unit) == pytest.approx(1.0)
    assert iou_bev(unit, Box3D(0.5, 0.0, 0.0, 1.0, 1.0, 1.0)) == pytest.approx(1 / 3)
    assert iou_bev(unit, Box3D(5.0, 0.0, 0.0, 1.0, 1.0, 1.0)) == 0.0
    # a quarter turn swaps width and length
    assert iou_bev(Box3D(0, 0, 0, 2, 4, 1), Box3D(0, 0, 0, 4, 2, 1, math.pi / 2)) == pytest.approx(1.0)


def test_3d_iou_accounts_for_height_overlap():
    a = Box3D(0.0, 0.0, 0.0, 1.0, 1.0, 2.0)
    b = Box3D(0.0, 0.0, 1.0, 1.0, 1.0, 2.0)
    assert iou_3d(a, b) == pytest.approx(1 / 3)
    assert iou_3d(a, Box3D(0.0, 0.0, 5.0, 1.0, 1.0, 2.0)) == 0.0
    assert iou_3d(a, a) == pytest.approx(1.0)


# ---------- average precision ----------
def test_average_precision_hand_case():
    gts = {"0000": [CAR, CYCLIST]}
    detections = [det(CAR, 0.9), det(FAR, 0.8), det(CYCLIST, 0.7)]
    # precision 1 up to recall 0.5, then 2/3 up to recall 1
    assert average_precision(detections, gts).ap == pytest.approx(5 / 6)


def test_average_precision_extremes():
    gts = {"0000": [CAR], "0001": [CYCLIST]}
    perfect = [det(CAR, 0.9, "0000"), det(CYCLIST, 0.8, "0001")]
    assert average_precision(perfect, gts).ap == pytest.approx(1.0)
    assert average_precision(perfect, gts, iou_3d).ap == pytest.approx(1.0)
    assert average_precision([], gts).ap == 0.0
    # right box, wrong scene
    assert average_precision([det(CAR, 0.9, "0001")], gts).ap == 0.0


def test_average_precision_without_ground_truth_is_flagged():
    result = average_precision([det(CAR, 0.9)], {"0000": []})
    assert result.ap == 0.0 and result.no_ground_truth


def test_ground_truth_is_claimed_once():
    result = average_precision([det(CAR, 0.9), det(CAR, 0.8)], {"0000": [CAR]})
    assert result.ap == pytest.approx(1.0)
    assert result.num_det == 2


def test_evaluation_report_by_class_and_weather():
    gts = {"0000": [GroundTruthBox(0, CAR)], "0001": [GroundTruthBox(1, CYCLIST)]}
    detections = [det(CAR, 0.9, "0000", 0), det(CYCLIST, 0.9, "0001", 0)]
    report = evaluate_detections(detections, gts, ["car", "cyclist"], weather={"0000": "clear", "0001": "fog"})
    assert report.per_class["car"]["ap_bev"] == pytest.approx(1.0)
    assert report.per_class["cyclist"]["ap_bev"] == 0.0
    assert report.mean_ap_bev == pytest.approx(0.5)
    assert report.per_weather == {"clear": pytest.approx(1.0), "fog": 0.0}


# ---------- scoring, decoding and the dump ----------
def test_fused_score():
    assert fuse_score(0.8, 0.9, [0.5]) == pytest.approx(0.36)
    assert fuse_score(0.8, 0.9, [0.25, 0.75]) == pytest.approx(0.36)
    with pytest.raises(ContractError):
        fuse_score(0.8, 0.9, [])
    with pytest.raises(ContractError):
        fuse_score(1.2, 0.9, [0.5])


def test_box_decoding_centre_of_the_plane():
    box = decode_box([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    assert (box.x, box.y) == (pytest.approx(24.0), pytest.approx(0.0))
    assert (box.w, box.l, box.h, box.yaw) == (pytest.approx(1.0), pytest.approx(2.0), pytest.approx(1.5), 0.0)
    coder = BoxCoder()
    again = coder.decode(coder.encode(CYCLIST))
    np.testing.assert_allclose(again.as_tuple(), CYCLIST.as_tuple(), atol=1e-9)


def test_detections_from_output_filters_by_score():
    logits = np.array([[5.0, 0.0, 0.0], [0.0, 0.0, 5.0]])
    boxes = np.tile([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], (2, 1))
    confidence = np.array([0.9, 0.9])
    uncertainty = np.full((2, 4), 0.5)
    dets = detections_from_output(logits, boxes, confidence, uncertainty, BoxCoder(), "0003")
    assert len(dets) == 2 and dets[0].class_id == 0 and dets[0].scene_id == "0003"
    assert dets[0].score == pytest.approx(dets[0].raw_score * 0.9 * 0.5)
    kept = detections_from_output(logits, boxes, confidence, uncertainty, BoxCoder(), min_score=0.1)
    assert len(kept) == 1


def test_detection_dump_round_trip(tmp_path):
    path = str(tmp_path / "dump" / "detections.txt")
    assert write_detections(path, [det(CAR, 0.9, "0000"), det(CYCLIST, 0.25, "0002", 1)]) == 2
    records = read_detections(path)
    assert [(r.scene_id, r.class_id, r.score) for r in records] == [("0000", 0, 0.9), ("0002", 1, 0.25)]
    assert records[1].box == CYCLIST


def test_detection_dump_rejects_malformed_lines(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0000 0 0.5 1 2 3\n")
    with pytest.raises(FormatError):
        read_detections(str(path))
    path.write_text("0000 zero 0.5 1 2 3 1 1 1 0\n")
    with pytest.raises(FormatError):
        read_detections(str(path))


# ---------- head and detector ----------
def test_head_emits_one_prediction_per_iteration(rng):
    head = DetectionHead(8, 2, 3, rng)
    reference = Tensor(rng.uniform(size=(5, 2)))
    out = head_forward(head, Tensor(rng.normal(size=(5, 8))), reference)
    assert out.iterations == 3
    assert all(lg.shape == (5, 3) for lg in out.logits)
    assert all(bx.shape == (5, 8) for bx in out.boxes)
    with pytest.raises(ConfigurationError):
        DetectionHead(8, 2, 0, rng)


def test_zero_initialized_refinement_is_identity(rng):
    ffn = RefinementFFN(6, rng, zero_init=True)
    q = Tensor(rng.normal(size=(4, 6)))
    np.testing.assert_array_equal(ffn(q).data, q.data)


def test_parse_streams():
    assert parse_streams("all") == STREAMS
    assert parse_streams("ra+camera") == ("camera", "ra")
    assert parse_streams("ea, ra") == ("ra", "ea")
    assert parse_streams("none") == ()
    with pytest.raises(ConfigurationError):
        parse_streams("lidar")


def test_detector_config_rejects_mismatched_widths():
    with pytest.raises(ConfigurationError):
        DetectorConfig(encoder_widths=(16, 32, 48))


def test_detector_forward_on_tiny_scene(tiny_config, rng):
    cfg = tiny_config
    model = WRCFusionDetector(cfg.detector(), rng)
    sample = random_sample(cfg, rng)
    with no_grad():
        output = model(sample)
    nq = cfg.model.num_queries
    assert output.head.iterations == cfg.model.iterations
    assert output.final_logits.shape == (nq, cfg.radar.num_classes + 1)
    assert output.final_boxes.shape == (nq, 8)
    # two paths, two levels, two samples each
    assert output.queries.uncertainty.shape == (nq, 8)
    dets = detections_for_sample(output, sample)
    assert len(dets) == nq
    assert all(0.0 <= d.score <= 1.0 for d in dets)


def test_masked_stream_equals_zeroed_input(tiny_config, rng):
    cfg = tiny_config
    model = WRCFusionDetector(cfg.detector(), rng)
    sample = random_sample(cfg, rng)
    blank = dataclasses.replace(sample, image=Tensor(np.zeros(sample.image.shape)))
    with no_grad():
        masked = model(sample, ("ra", "ea"))
        zeroed = model(blank)
        full = model(sample)
    np.testing.assert_array_equal(masked.final_logits.data, zeroed.final_logits.data)
    assert not np.array_equal(masked.final_logits.data, full.final_logits.data)


def test_head_and_loss_are_differentiable(rng):
    head = DetectionHead(4, 2, 2, rng)
    fused = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    reference = Tensor(rng.uniform(0.2, 0.8, size=(3, 2)), requires_grad=True)
    gt = BoxCoder().encode_all([GroundTruthBox(1, CAR)])

    def fn():
        out = head_forward(head, fused, reference)
        return set_loss(out.logits, out.boxes, np.array([1]), gt).total

    assert gradcheck(fn, [fused, reference, head.classifier.weight], rtol=1e-6)
