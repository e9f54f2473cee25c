import json

import numpy as np
import pytest

from modules.core.dsg_model import DsgModel, QueryPrediction
from modules.core.heads import decode_scene_graph
from modules.data.collectors.sample_collector import SampleCollector, collect_scenes
from modules.data.scene_generator import N_CATEGORIES, N_RELATIONS
from modules.reports.evaluator import (
    EvalReport,
    ModelEvaluator,
    RrReport,
    SgReport,
    boxes_to_map,
    evaluate_rr,
    evaluate_sg_decoding,
    gt_role_boxes,
    holding_relations,
    map_iou,
    predicted_relation_truth,
    relation_prediction_correct,
    relation_truth,
    standard_error,
)
from modules.utils.config_manager import ProposalConfig, SceneConfig
from modules.utils.errors import EmptyInputError, ShapeError


# ----------------------------------------------------------------------
# 주의 맵
# ----------------------------------------------------------------------
def test_full_canvas_box_lights_every_cell():
    assert boxes_to_map([(0.0, 0.0, 1.0, 1.0)], 14).all()


def test_half_box_lights_left_column():
    grid = boxes_to_map([(0.0, 0.0, 0.5, 1.0)], 2)
    np.testing.assert_array_equal(grid, [[True, False], [True, False]])


def test_touching_edge_does_not_light_cell():
    grid = boxes_to_map([(0.5, 0.0, 0.5, 0.5)], 2)
    np.testing.assert_array_equal(grid, [[False, True], [False, False]])


def test_zero_area_and_empty_boxes_light_nothing():
    assert not boxes_to_map([(0.3, 0.3, 0.0, 0.2)], 14).any()
    assert not boxes_to_map(np.zeros((0, 4)), 14).any()


def _cell_oracle(boxes, L):
    """셀마다 박스와의 교집합 면적을 직접 계산"""
    grid = np.zeros((L, L), dtype=bool)
    for r in range(L):
        for c in range(L):
            x0, x1, y0, y1 = c / L, (c + 1) / L, r / L, (r + 1) / L
            for x, y, w, h in boxes:
                overlap_x = min(x + w, x1) - max(x, x0)
                overlap_y = min(y + h, y1) - max(y, y0)
                if overlap_x > 0 and overlap_y > 0:
                    grid[r, c] = True
    return grid


def test_map_matches_per_cell_oracle():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 4))
        boxes = []
        for _ in range(n):
            w, h = rng.uniform(0.005, 0.6, 2)
            boxes.append((rng.uniform(0, 1 - w), rng.uniform(0, 1 - h), w, h))
        np.testing.assert_array_equal(boxes_to_map(boxes, 14), _cell_oracle(boxes, 14))


def _fine_raster_oracle(boxes, L, pixels_per_cell=100):
    """L·100 해상도로 박스를 래스터화한 뒤, 켜진 픽셀이 하나라도 있는 셀을 켭니다"""
    n = L * pixels_per_cell
    edges = np.arange(n + 1) / n
    raster = np.zeros((n, n), dtype=bool)
    for x, y, w, h in boxes:
        cols = np.minimum(x + w, edges[1:]) - np.maximum(x, edges[:-1]) > 0
        rows = np.minimum(y + h, edges[1:]) - np.maximum(y, edges[:-1]) > 0
        raster |= np.outer(rows, cols)
    return raster.reshape(L, pixels_per_cell, L, pixels_per_cell).any(axis=(1, 3))


@pytest.mark.slow
def test_map_matches_fine_raster_oracle():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 4))
        boxes = []
        for _ in range(n):
            w, h = rng.uniform(0.005, 0.6, 2)
            boxes.append((rng.uniform(0, 1 - w), rng.uniform(0, 1 - h), w, h))
        np.testing.assert_array_equal(boxes_to_map(boxes, 14), _fine_raster_oracle(boxes, 14))



def test_map_iou_examples():
    a = np.array([[True, False], [True, False]])
    b = np.array([[True, False], [False, False]])
    assert map_iou(a, b) == 0.5
    assert map_iou(a, a) == 1.0
    assert map_iou(a, ~a) == 0.0
    assert map_iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert map_iou(np.zeros((2, 2)), a) == 0.0


def test_map_iou_size_mismatch():
    with pytest.raises(ShapeError):
        map_iou(np.zeros((2, 2)), np.zeros((3, 3)))


def test_standard_error():
    assert standard_error([1.0, 2.0, 3.0, 4.0]) == pytest.approx(np.sqrt(5 / 3) / 2)
    assert standard_error([0.7]) == 0.0
    assert standard_error([]) == 0.0


# ----------------------------------------------------------------------
# RR 평가
# ----------------------------------------------------------------------
def _oracle_predictor(sample):
    scene = sample.scene
    return [QueryPrediction([], [], gt_role_boxes(scene, q.gt_subject_ids), gt_role_boxes(scene, q.gt_object_ids))
            for q in scene.queries]


def _empty_predictor(sample):
    return [QueryPrediction([], [], np.zeros((0, 4)), np.zeros((0, 4))) for _ in sample.scene.queries]


def test_perfect_predictor_scores_one(tiny_samples):
    report = evaluate_rr(_oracle_predictor, tiny_samples, 14)
    assert report.subject_iou == 1.0 and report.object_iou == 1.0
    assert report.subject_iou_se == 0.0
    assert report.n_queries == sum(len(s.scene.queries) for s in tiny_samples)


def test_empty_predictor_scores_zero(tiny_samples):
    report = evaluate_rr(_empty_predictor, tiny_samples, 14)
    assert report.subject_iou == 0.0 and report.object_iou == 0.0


def test_no_queries_is_an_error(tiny_samples):
    with pytest.raises(EmptyInputError):
        evaluate_rr(_oracle_predictor, [s for s in tiny_samples if not s.scene.queries], 14)


# ----------------------------------------------------------------------
# SG 디코딩 평가 / 리포트
# ----------------------------------------------------------------------
def test_holding_relations(two_entity_scene):
    assert holding_relations(two_entity_scene, 0, 1) == [0, 2]   # left, front
    assert holding_relations(two_entity_scene, 1, 0) == [1, 3]   # right, behind


def test_undefined_accuracy_is_reported_as_null():
    report = EvalReport(RrReport([0.5, 1.0], [0.0, 1.0]), SgReport())
    payload = report.to_dict()
    assert payload["entity_acc"] is None and payload["entity_acc_defined"] is False
    assert payload["relation_acc"] is None and payload["relation_acc_defined"] is False
    assert payload["subject_iou"] == 0.75 and payload["n_queries"] == 2
    json.dumps(payload)


def test_sg_counts_exact_proposals(small_model_config, zero_jitter_samples):
    model = DsgModel(small_model_config)
    params = model.init_parameters(0)
    report = evaluate_sg_decoding(model, params, zero_jitter_samples, iou_floor=0.999)
    # 흔들림이 없으면 엔티티 박스는 GT 와 IOU 1 (반올림 오차 허용)
    assert report.n_entities == sum(len(s.scene.entities) for s in zero_jitter_samples)
    assert 0 <= report.entity_correct <= report.n_entities
    assert report.n_relations > 0


def test_model_evaluator_report_and_export(tmp_path, small_model_config, tiny_samples):
    model = DsgModel(small_model_config)
    evaluator = ModelEvaluator(model, model.init_parameters(0), attention_l=14, sg_top_k=5)
    payload = evaluator.evaluate(tiny_samples).to_dict()
    assert set(payload) == {"subject_iou", "object_iou", "entity_acc", "relation_acc", "n_queries",
                            "subject_iou_se", "object_iou_se", "n_entities", "n_relations",
                            "entity_acc_defined", "relation_acc_defined"}
    assert 0.0 <= payload["subject_iou"] <= 1.0

    path = evaluator.export_scene_graphs(tiny_samples, tmp_path / "graphs.json", limit=2)
    graphs = json.loads(path.read_text(encoding="utf-8"))
    assert len(graphs) == 2
    assert all(len(g["edges"]) <= 5 for g in graphs)
    assert len(graphs[0]["nodes"]) == len(graphs[0]["boxes"])


def test_relation_truth_per_axis():
    truth = np.array([True, False, True, False])   # left, front
    assert list(predicted_relation_truth([0.4, 0.1, 0.3, 0.2])) == [True, False, True, False]
    assert relation_prediction_correct([0.4, 0.1, 0.3, 0.2], truth)
    assert not relation_prediction_correct([0.4, 0.1, 0.2, 0.3], truth)
    assert not relation_prediction_correct([0.25, 0.25, 0.3, 0.2], truth)


def test_axis_without_gt_relation_is_not_scored():
    truth = np.array([True, False, False, False])
    assert relation_prediction_correct([0.3, 0.2, 0.1, 0.4], truth)
    assert relation_prediction_correct([0.3, 0.2, 0.4, 0.1], truth)


class _RandomLabeler:
    """박스/순서쌍마다 표준정규 로짓을 뽑는 라벨러"""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def decode(self, params, box_set, top_k):
        return decode_scene_graph(self.rng.normal(size=(box_set.n_boxes, N_CATEGORIES)),
                                  self.rng.normal(size=(box_set.n_pairs, N_RELATIONS)),
                                  box_set.pair_index, top_k)


class _OracleLabeler:
    """매칭된 GT 엔티티의 카테고리와 관계를 그대로 내는 라벨러"""

    def __init__(self, samples):
        self.samples = {id(s.box_set): s for s in samples}

    def decode(self, params, box_set, top_k):
        sample = self.samples[id(box_set)]
        scene, matched = sample.scene, sample.matches.matched_entity
        entity_logits = np.zeros((box_set.n_boxes, N_CATEGORIES))
        for i, entity in enumerate(matched):
            entity_logits[i, scene.entity(int(entity)).category_id] = 10.0
        relation_logits = np.zeros((box_set.n_pairs, N_RELATIONS))
        for k, (i, j) in enumerate(box_set.pair_index):
            if matched[i] != matched[j]:
                relation_logits[k] = 10.0 * relation_truth(scene, int(matched[i]), int(matched[j]))
        return decode_scene_graph(entity_logits, relation_logits, box_set.pair_index, top_k)


@pytest.fixture(scope="module")
def exact_proposal_samples():
    scenes = collect_scenes(range(200), 7, SceneConfig())
    return SampleCollector(ProposalConfig(jitter=0.0, n_bg=0), seed=0).collect(scenes)


def test_random_labeler_scores_chance(exact_proposal_samples):
    report = evaluate_sg_decoding(_RandomLabeler(0), None, exact_proposal_samples, iou_floor=0.999)
    assert report.n_entities > 500 and report.n_relations > 1000
    assert report.entity_acc == pytest.approx(1 / N_CATEGORIES, abs=0.015)
    assert report.relation_acc == pytest.approx(0.25, abs=0.03)


def test_oracle_labeler_scores_one(exact_proposal_samples):
    report = evaluate_sg_decoding(_OracleLabeler(exact_proposal_samples), None, exact_proposal_samples,
                                  iou_floor=0.999)
    assert report.entity_acc == 1.0
    assert report.relation_acc == 1.0
