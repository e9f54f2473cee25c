"""
다중 작업 손실 (이미지 하나 = 그 이미지의 모든 질의가 한 배치)

    total = w_rr · RR + w_box · BOX + w_sgl · (ENTITY + RELATION)

- RR: Ignore 가 아닌 박스에 대한 역할 CE, 질의 평균
- BOX: 모든 엔티티 대비 최대 IOU >= 0.5 인 제안 박스의 보정 박스 vs 매칭 GT (smooth L1)
- SGL: Subject/Object 박스의 엔티티 라벨 CE + (Subject, Object) 순서쌍의 관계 라벨 CE
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.core.autodiff import (
    ComputationGraph,
    Tensor,
    gather_rows,
    scalar_mul,
    smooth_l1,
    softmax_cross_entropy,
)
from modules.core.heads import Role
from modules.core.role_assignment import POSITIVE_IOU, RoleAssignment
from modules.data.scene_generator import Query, Scene, relation_holds
from modules.utils.config_manager import AblationFlags, LossWeights
from modules.utils.errors import EmptyInputError

logger = logging.getLogger(__name__)

TWO_STEP_SGL_WEIGHT = 1.0


@dataclass
class LossBreakdown:
    total: Tensor
    rr: float = 0.0
    box: float = 0.0
    sgl: float = 0.0

    @property
    def total_value(self) -> float:
        return float(self.total.values)


def effective_weights(weights: LossWeights, flags: AblationFlags) -> LossWeights:
    """ablation 플래그를 반영한 가중치 (2단계 변형은 RR 항을 빼고 SG 라벨링을 주 신호로)"""
    if flags.two_step:
        weights = replace(weights, w_rr=0.0, w_sgl=TWO_STEP_SGL_WEIGHT)
    if not flags.use_box_refiner:
        weights = replace(weights, w_box=0.0)
    if not flags.use_sgl_loss:
        weights = replace(weights, w_sgl=0.0)
    return weights


def _mean(terms: List[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return scalar_mul(total, 1.0 / len(terms))


def rr_loss(role_logits: Sequence[Tensor], assignments: Sequence[RoleAssignment]) -> Optional[Tensor]:
    """질의별 CE(Ignore 제외)의 평균. 학습 가능한 박스가 하나도 없으면 None."""
    terms = []
    for logits, assignment in zip(role_logits, assignments):
        rows = assignment.trainable()
        if rows.size == 0:
            continue
        terms.append(softmax_cross_entropy(gather_rows(logits, rows), assignment.labels[rows]))
    return _mean(terms) if terms else None


def box_targets(matches: RoleAssignment, scene: Scene) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.flatnonzero(matches.max_iou >= POSITIVE_IOU)
    targets = np.array([scene.entity(int(matches.matched_entity[i])).box for i in rows]).reshape(-1, 4)
    return rows, targets


def box_loss(refined: Tensor, matches: RoleAssignment, scene: Scene) -> Optional[Tensor]:
    rows, targets = box_targets(matches, scene)
    if rows.size == 0:
        return None
    return smooth_l1(gather_rows(refined, rows), targets)


def sgl_targets(queries: Sequence[Query], assignments: Sequence[RoleAssignment], scene: Scene,
                pair_lookup: Dict[Tuple[int, int], int]):
    """(엔티티 행, 엔티티 타깃, 순서쌍 행, 관계 타깃)"""
    entity_rows, entity_targets, pair_rows, relation_targets = [], [], [], []
    for query, assignment in zip(queries, assignments):
        subjects = assignment.indices(Role.SUBJECT)
        objects = assignment.indices(Role.OBJECT)
        entity_rows += subjects + objects
        entity_targets += [query.subject_category] * len(subjects) + [query.object_category] * len(objects)
        for i in subjects:
            for j in objects:
                ei, ej = int(assignment.matched_entity[i]), int(assignment.matched_entity[j])
                if i == j or ei == ej:
                    continue
                if relation_holds(scene.entity(ei), scene.entity(ej), query.relation):
                    pair_rows.append(pair_lookup[(i, j)])
                    relation_targets.append(query.relation_index)
    return entity_rows, entity_targets, pair_rows, relation_targets


def sgl_loss(entity_logits: Tensor, relation_logits: Optional[Tensor], queries: Sequence[Query],
             assignments: Sequence[RoleAssignment], scene: Scene,
             pair_index: np.ndarray) -> Optional[Tensor]:
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(pair_index)}
    entity_rows, entity_targets, pair_rows, relation_targets = sgl_targets(queries, assignments, scene, lookup)
    loss = None
    if entity_rows:
        loss = softmax_cross_entropy(gather_rows(entity_logits, entity_rows), entity_targets)
    if pair_rows and relation_logits is not None:
        relation_term = softmax_cross_entropy(gather_rows(relation_logits, pair_rows), relation_targets)
        loss = relation_term if loss is None else loss + relation_term
    return loss


def total_loss(graph: ComputationGraph, model, sample, weights: LossWeights) -> LossBreakdown:
    """
    이미지 하나에 대한 가중 합 손실

    Args:
        graph: 이번 스텝의 계산 그래프 (파라미터 포함)
        model: DsgModel (ablation 플래그 포함)
        sample: Sample (장면, 제안 박스, 역할 할당)
        weights: 손실 가중치 (플래그 반영 전)
    """
    scene = sample.scene
    if not scene.queries:
        raise EmptyInputError(f"scene {scene.scene_id}: 질의가 없는 배치")
    weights = effective_weights(weights, model.flags)
    state = model.forward(graph, sample.box_set)
    breakdown = LossBreakdown(Tensor.constant(0.0))
    weighted: List[Tensor] = []

    if weights.w_rr > 0:
        logits = [model.role_logits(graph, state, q) for q in scene.queries]
        term = rr_loss(logits, sample.assignments)
        if term is not None:
            breakdown.rr = float(term.values)
            weighted.append(scalar_mul(term, weights.w_rr))

    if weights.w_box > 0:
        term = box_loss(model.refined_boxes(graph, state, sample.box_set), sample.matches, scene)
        if term is not None:
            breakdown.box = float(term.values)
            weighted.append(scalar_mul(term, weights.w_box))

    if weights.w_sgl > 0:
        term = sgl_loss(model.entity_logits(graph, state), model.relation_logits(graph, state),
                        scene.queries, sample.assignments, scene, state.pair_index)
        if term is not None:
            breakdown.sgl = float(term.values)
            weighted.append(scalar_mul(term, weights.w_sgl))

    if weighted:
        total = weighted[0]
        for term in weighted[1:]:
            total = total + term
        breakdown.total = total
    return breakdown
