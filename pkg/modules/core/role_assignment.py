"""
제안 박스별 정답 역할 할당

규칙 (박스 i, 질의 q):
  1. 이미지의 GT 박스(어느 질의든 참조된 엔티티, id 순) 중 IOU 최대 (동률이면 낮은 인덱스)
  2. 그 GT가 q의 subject/object 이고 IOU >= 0.5 → Subject / Object
  3. q의 역할 엔티티가 아닌, 다른 질의의 GT 박스와 IOU > 0.5 → Other
  4. 최대 IOU < 0.3 → Background, 나머지 → Ignore (RR 손실에서 제외)
  5. GT subject/object 박스마다 IOU가 가장 높은 제안 박스(동률이면 낮은 인덱스)를 해당 역할로 강제 지정
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from modules.core.heads import Role
from modules.data.scene_generator import Query, Scene
from modules.utils.box_utils import iou_matrix
from modules.utils.errors import EmptyInputError

logger = logging.getLogger(__name__)

POSITIVE_IOU = 0.5
BACKGROUND_IOU = 0.3
NO_MATCH = -1


@dataclass
class RoleAssignment:
    labels: np.ndarray          # (B,) Role 값
    matched_entity: np.ndarray  # (B,) 최대 IOU GT 엔티티 id (GT 가 없으면 -1)
    max_iou: np.ndarray         # (B,)

    def indices(self, role: Role) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.labels == role)]

    def trainable(self) -> np.ndarray:
        return np.flatnonzero(self.labels != Role.IGNORE)


def gt_entity_ids(scene: Scene) -> List[int]:
    """이미지 안의 어느 질의에서든 참조된 엔티티 id (정렬)"""
    ids = set()
    for q in scene.queries:
        ids.update(q.gt_subject_ids)
        ids.update(q.gt_object_ids)
    return sorted(ids)


def assign_roles(boxes: np.ndarray, query: Query, scene: Scene) -> RoleAssignment:
    if not query.gt_subject_ids or not query.gt_object_ids:
        raise EmptyInputError(f"scene {scene.scene_id}: GT 목록이 빈 질의 {query.describe()}")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]

    gt_ids = gt_entity_ids(scene)
    for entity_id in list(query.gt_subject_ids) + list(query.gt_object_ids):
        if entity_id not in gt_ids:
            gt_ids.append(entity_id)
    gt_ids = sorted(gt_ids)
    gt_boxes = np.array([scene.entity(e).box for e in gt_ids])
    overlaps = iou_matrix(boxes, gt_boxes)   # (B, G)

    best = np.argmax(overlaps, axis=1) if n else np.zeros(0, dtype=np.int64)
    max_iou = overlaps[np.arange(n), best] if n else np.zeros(0)
    matched = np.array([gt_ids[k] for k in best], dtype=np.int64)

    subjects = set(query.gt_subject_ids)
    objects = set(query.gt_object_ids)
    others = [k for k, e in enumerate(gt_ids) if e not in subjects and e not in objects]

    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        entity = int(matched[i])
        if entity in subjects and max_iou[i] >= POSITIVE_IOU:
            labels[i] = Role.SUBJECT
        elif entity in objects and max_iou[i] >= POSITIVE_IOU:
            labels[i] = Role.OBJECT
        elif others and np.any(overlaps[i, others] > POSITIVE_IOU):
            labels[i] = Role.OTHER
        elif max_iou[i] < BACKGROUND_IOU:
            labels[i] = Role.BACKGROUND
        else:
            labels[i] = Role.IGNORE

    forced_subject = set()
    for role, entity_ids in ((Role.SUBJECT, query.gt_subject_ids), (Role.OBJECT, query.gt_object_ids)):
        for entity in sorted(entity_ids):
            column = overlaps[:, gt_ids.index(entity)]
            if n == 0 or column.max() <= 0.0:
                continue
            winner = int(np.argmax(column))
            if role == Role.OBJECT and winner in forced_subject:
                continue
            labels[winner] = role
            if role == Role.SUBJECT:
                forced_subject.add(winner)
    return RoleAssignment(labels, matched, max_iou)


def match_boxes(boxes: np.ndarray, scene: Scene) -> RoleAssignment:
    """모든 엔티티 대비 최대 IOU 매칭 (박스 보정/SG 평가용, 역할 라벨은 Ignore)"""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    if not scene.entities or n == 0:
        return RoleAssignment(np.full(n, Role.IGNORE, dtype=np.int64),
                              np.full(n, NO_MATCH, dtype=np.int64), np.zeros(n))
    ids = [e.id for e in scene.entities]
    overlaps = iou_matrix(boxes, scene.boxes())
    best = np.argmax(overlaps, axis=1)
    return RoleAssignment(np.full(n, Role.IGNORE, dtype=np.int64),
                          np.array([ids[k] for k in best], dtype=np.int64),
                          overlaps[np.arange(n), best])

