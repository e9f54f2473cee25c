"""
평가: 주의 맵(attention map) IOU, 장면 그래프 디코딩 정확도, 평가 리포트 저장

L×L 셀 (r, c) 는 [c/L, (c+1)/L) × [r/L, (r+1)/L) 를 덮고,
어떤 박스와든 교집합 면적이 양수이면 켜집니다 (접하기만 하면 제외).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from modules.core.dsg_model import DsgModel, QueryPrediction
from modules.core.layers import Parameters
from modules.data.collectors.sample_collector import Sample
from modules.data.scene_generator import RELATIONS, Scene, relation_holds
from modules.utils.errors import EmptyInputError, ShapeError

logger = logging.getLogger(__name__)

Predictor = Callable[[Sample], Sequence[QueryPrediction]]


# ----------------------------------------------------------------------
# 주의 맵
# ----------------------------------------------------------------------
def _axis_cells(start: float, length: float, L: int) -> np.ndarray:
    edges = np.arange(L + 1) / L
    return (start < edges[1:]) & (start + length > edges[:-1])


def boxes_to_map(boxes, L: int = 14) -> np.ndarray:
    """정규화 박스 목록 → (L, L) bool 맵. 면적 0인 박스는 아무 셀도 켜지 않습니다."""
    grid = np.zeros((L, L), dtype=bool)
    for x, y, w, h in np.asarray(boxes, dtype=np.float64).reshape(-1, 4):
        if w <= 0 or h <= 0:
            continue
        grid |= np.outer(_axis_cells(y, h, L), _axis_cells(x, w, L))
    return grid


def map_iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a∧b| / |a∨b| (둘 다 비면 1.0, 한쪽만 비면 0.0)"""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeError(f"주의 맵 크기가 다릅니다: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def standard_error(values: Sequence[float]) -> float:
    """표본 표준편차 / √n (n < 2 이면 0)"""
    n = len(values)
    if n < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1) / math.sqrt(n))


# ----------------------------------------------------------------------
# referring relationship 평가
# ----------------------------------------------------------------------
@dataclass
class RrReport:
    subject_ious: List[float] = field(default_factory=list)
    object_ious: List[float] = field(default_factory=list)

    @property
    def n_queries(self) -> int:
        return len(self.subject_ious)

    @property
    def subject_iou(self) -> float:
        return float(np.mean(self.subject_ious))

    @property
    def object_iou(self) -> float:
        return float(np.mean(self.object_ious))

    @property
    def subject_iou_se(self) -> float:
        return standard_error(self.subject_ious)

    @property
    def object_iou_se(self) -> float:
        return standard_error(self.object_ious)


def gt_role_boxes(scene: Scene, entity_ids: Sequence[int]) -> np.ndarray:
    return np.array([scene.entity(e).box for e in entity_ids], dtype=np.float64).reshape(-1, 4)


def model_predictor(model: DsgModel, params: Parameters, top_k: int = 10) -> Predictor:
    def _predict(sample: Sample) -> Sequence[QueryPrediction]:
        return model.predict(params, sample.box_set, list(sample.scene.queries), top_k).queries
    return _predict


def evaluate_rr(predictor: Predictor, samples: Sequence[Sample], attention_l: int = 14) -> RrReport:
    """
    질의마다 GT 역할 박스와 예측 박스를 L×L 맵으로 바꿔 IOU를 구하고 질의 평균을 냅니다.

    Args:
        predictor: 샘플 → 질의별 예측 (질의 순서대로)
        samples: 평가 샘플
        attention_l: 맵 해상도 L

    Returns:
        RrReport (질의별 IOU 목록 포함)
    """
    report = RrReport()
    for sample in samples:
        scene = sample.scene
        if not scene.queries:
            continue
        predictions = predictor(sample)
        for query, prediction in zip(scene.queries, predictions):
            gt_s = boxes_to_map(gt_role_boxes(scene, query.gt_subject_ids), attention_l)
            gt_o = boxes_to_map(gt_role_boxes(scene, query.gt_object_ids), attention_l)
            report.subject_ious.append(map_iou(gt_s, boxes_to_map(prediction.subject_boxes, attention_l)))
            report.object_ious.append(map_iou(gt_o, boxes_to_map(prediction.object_boxes, attention_l)))
    if report.n_queries == 0:
        raise EmptyInputError("평가할 질의가 없습니다")
    return report


# ----------------------------------------------------------------------
# 장면 그래프 디코딩 평가
# ----------------------------------------------------------------------
@dataclass
class SgReport:
    entity_correct: int = 0
    n_entities: int = 0
    relation_correct: int = 0
    n_relations: int = 0

    @property
    def entity_acc(self) -> Optional[float]:
        return self.entity_correct / self.n_entities if self.n_entities else None

    @property
    def relation_acc(self) -> Optional[float]:
        return self.relation_correct / self.n_relations if self.n_relations else None


RELATION_AXES = (
    (RELATIONS.index("left"), RELATIONS.index("right")),
    (RELATIONS.index("front"), RELATIONS.index("behind")),
)


def relation_truth(scene: Scene, a_id: int, b_id: int) -> np.ndarray:
    """순서쌍 (a, b) 의 관계별 성립 여부 (4,)"""
    a, b = scene.entity(a_id), scene.entity(b_id)
    return np.array([relation_holds(a, b, r) for r in RELATIONS], dtype=bool)


def holding_relations(scene: Scene, a_id: int, b_id: int) -> List[int]:
    return [int(k) for k in np.flatnonzero(relation_truth(scene, a_id, b_id))]


def predicted_relation_truth(probs: np.ndarray) -> np.ndarray:
    """
    관계 확률 (4,) → 관계별 예측 성립 여부.
    축마다 (left/right, front/behind) 확률이 더 큰 쪽이 성립한다고 봅니다. 동률이면 둘 다 불성립.
    """
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.zeros(len(RELATIONS), dtype=bool)
    for a, b in RELATION_AXES:
        truth[a] = probs[a] > probs[b]
        truth[b] = probs[b] > probs[a]
    return truth


def relation_prediction_correct(probs: np.ndarray, truth: np.ndarray) -> bool:
    """GT 에서 관계가 성립하는 축마다 예측 성립 여부가 일치하는지"""
    predicted = predicted_relation_truth(probs)
    for a, b in RELATION_AXES:
        if (truth[a] or truth[b]) and (predicted[a] != truth[a] or predicted[b] != truth[b]):
            return False
    return True


def evaluate_sg_decoding(model: DsgModel, params: Parameters, samples: Sequence[Sample],
                         iou_floor: float = 0.8, top_k: int = 10) -> SgReport:
    """
    GT 대비 IOU >= iou_floor 인 제안 박스의 엔티티 라벨 정확도와,
    그런 박스 순서쌍(서로 다른 엔티티에 매칭)의 관계 라벨 정확도.
    순서쌍은 GT 관계가 있는 모든 축에서 예측 성립 여부가 같을 때 정답입니다
    (무작위 라벨러 기준 약 1/4).
    """
    report = SgReport()
    for sample in samples:
        scene = sample.scene
        decoded = model.decode(params, sample.box_set, top_k)
        matched = sample.matches.matched_entity
        qualifying = set(int(i) for i in np.flatnonzero(sample.matches.max_iou >= iou_floor))
        for i in sorted(qualifying):
            report.n_entities += 1
            report.entity_correct += int(decoded.node_labels[i] == scene.entity(int(matched[i])).category_id)
        if decoded.relation_probs.shape[0] == 0:
            continue
        for k, (i, j) in enumerate(decoded.pair_index):
            if int(i) not in qualifying or int(j) not in qualifying or matched[i] == matched[j]:
                continue
            truth = relation_truth(scene, int(matched[i]), int(matched[j]))
            if not truth.any():
                continue
            report.n_relations += 1
            report.relation_correct += int(relation_prediction_correct(decoded.relation_probs[k], truth))
    if report.n_entities == 0:
        logger.warning(f"⚠️ IOU >= {iou_floor} 인 제안 박스가 없어 정확도를 계산할 수 없습니다")
    return report


# ----------------------------------------------------------------------
# 리포트
# ----------------------------------------------------------------------
@dataclass
class EvalReport:
    rr: RrReport
    sg: SgReport

    def to_dict(self) -> Dict[str, Union[float, int, bool, None]]:
        return {
            "subject_iou": self.rr.subject_iou,
            "object_iou": self.rr.object_iou,
            "entity_acc": self.sg.entity_acc,
            "relation_acc": self.sg.relation_acc,
            "n_queries": self.rr.n_queries,
            "subject_iou_se": self.rr.subject_iou_se,
            "object_iou_se": self.rr.object_iou_se,
            "n_entities": self.sg.n_entities,
            "n_relations": self.sg.n_relations,
            "entity_acc_defined": self.sg.entity_acc is not None,
            "relation_acc_defined": self.sg.relation_acc is not None,
        }


class ModelEvaluator:
    """학습된 모델 평가기"""

    def __init__(self, model: DsgModel, params: Parameters, attention_l: int = 14,
                 sg_iou_floor: float = 0.8, sg_top_k: int = 10):
        self.model = model
        self.params = params
        self.attention_l = attention_l
        self.sg_iou_floor = sg_iou_floor
        self.sg_top_k = sg_top_k
        self.logger = logging.getLogger('ModelEvaluator')

    def evaluate_rr(self, samples: Sequence[Sample]) -> RrReport:
        return evaluate_rr(model_predictor(self.model, self.params, self.sg_top_k), samples, self.attention_l)

    def evaluate(self, samples: Sequence[Sample]) -> EvalReport:
        rr = self.evaluate_rr(samples)
        sg = evaluate_sg_decoding(self.model, self.params, samples, self.sg_iou_floor, self.sg_top_k)
        report = EvalReport(rr, sg)
        self.logger.info(f"📊 subject IOU {rr.subject_iou:.4f} ± {rr.subject_iou_se:.4f}, "
                         f"object IOU {rr.object_iou:.4f} ± {rr.object_iou_se:.4f} ({rr.n_queries}개 질의)")
        if sg.entity_acc is not None:
            relation = f"{sg.relation_acc:.4f}" if sg.relation_acc is not None else "n/a"
            self.logger.info(f"📊 SG 디코딩: 엔티티 {sg.entity_acc:.4f} ({sg.n_entities}), "
                             f"관계 {relation} ({sg.n_relations})")
        return report

    def export_scene_graphs(self, samples: Sequence[Sample], path: Union[str, Path],
                            limit: int = 20) -> Path:
        """앞쪽 장면들의 디코딩된 장면 그래프를 JSON으로 저장"""
        graphs = []
        for sample in list(samples)[:limit]:
            decoded = self.model.decode(self.params, sample.box_set, self.sg_top_k)
            graphs.append({"scene_id": sample.scene_id, "boxes": sample.box_set.boxes.tolist(),
                           **decoded.to_dict()})
        return write_json(path, graphs)


def write_json(path: Union[str, Path], payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    logger.info(f"💾 저장: {path}")
    return path
