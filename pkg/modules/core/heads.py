"""
DSG 위의 태스크 헤드
- QueryEmbedding: ⟨s, r, o⟩ 질의 임베딩
- RR 분류기 (Subject / Object / Other / Background)
- 박스 보정기 (Faster-RCNN 델타)
- SG 라벨러 (엔티티 48, 관계 4) 및 장면 그래프 디코딩
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Sequence, Tuple

import numpy as np

from modules.core.autodiff import (
    ComputationGraph,
    Tensor,
    concat,
    exp,
    gather_rows,
    mul,
    relu,
    scalar_mul,
    slice_cols,
    softmax_rows,
)
from modules.core.layers import Mlp, Parameters, glorot_uniform
from modules.data.scene_generator import N_CATEGORIES, N_RELATIONS, RELATIONS
from modules.utils.errors import DegenerateBoxError, ShapeError

logger = logging.getLogger(__name__)


class Role(IntEnum):
    SUBJECT = 0
    OBJECT = 1
    OTHER = 2
    BACKGROUND = 3
    IGNORE = 4


N_ROLES = 4


class QueryEmbedding:
    """엔티티(48 × dim), 관계(4 × dim) 임베딩 테이블"""

    def __init__(self, dim: int, prefix: str = "query"):
        self.dim = dim
        self.entity_name = f"{prefix}.entity"
        self.relation_name = f"{prefix}.relation"

    @property
    def out_width(self) -> int:
        return 3 * self.dim

    def parameter_names(self) -> List[str]:
        return [self.entity_name, self.relation_name]

    def initialize(self, params: Parameters, rng: np.random.Generator) -> None:
        params.add(self.entity_name, glorot_uniform(rng, N_CATEGORIES, self.dim))
        params.add(self.relation_name, glorot_uniform(rng, N_RELATIONS, self.dim))

    def forward(self, graph: ComputationGraph, subject_category: int, relation: int,
                object_category: int) -> Tensor:
        """(1, 3·dim) = [E[s]; R[r]; E[o]]"""
        entity = graph.param(self.entity_name)
        table = graph.param(self.relation_name)
        return concat([
            gather_rows(entity, [subject_category]),
            gather_rows(table, [relation]),
            gather_rows(entity, [object_category]),
        ], axis=1)


def rr_classify(graph: ComputationGraph, classifier: Mlp, node_features: Tensor, query_vec: Tensor) -> Tensor:
    """F_RRC(z'_i, q): 박스마다 독립적으로 (B, 4) 로짓"""
    n = node_features.shape[0]
    tiled = gather_rows(query_vec, np.zeros(n, dtype=np.int64))
    return classifier.forward(graph, concat([node_features, tiled], axis=1))


def select_boxes(logits: np.ndarray) -> Tuple[List[int], List[int]]:
    """argmax 가 Subject/Object 인 박스 목록. 비어 있으면 해당 로짓이 가장 큰 박스 하나."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != N_ROLES or logits.shape[0] == 0:
        raise ShapeError(f"역할 로짓 형태 오류: {logits.shape}")
    winners = np.argmax(logits, axis=1)
    subjects = [int(i) for i in np.flatnonzero(winners == Role.SUBJECT)]
    objects = [int(i) for i in np.flatnonzero(winners == Role.OBJECT)]
    if not subjects:
        subjects = [int(np.argmax(logits[:, Role.SUBJECT]))]
    if not objects:
        objects = [int(np.argmax(logits[:, Role.OBJECT]))]
    return subjects, objects


def _column(t: Tensor, k: int) -> Tensor:
    return slice_cols(t, k, k + 1)


def refine_boxes(boxes: np.ndarray, deltas: Tensor) -> Tensor:
    """
    미분 가능한 박스 보정 (B, 4) → (B, 4), 코너 형식 입출력

    중심 형식 (cx + dx·w, cy + dy·h, e^dw·w, e^dh·h) 을 코너로 되돌린 뒤
    캔버스를 넘친 만큼만 잘라냅니다. 델타 0 이면 입력과 비트 단위로 같습니다.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if deltas.shape != boxes.shape:
        raise ShapeError(f"델타 형태 {deltas.shape} != 박스 형태 {boxes.shape}")
    out = []
    for axis in (0, 1):
        pos = Tensor.constant(boxes[:, axis:axis + 1])
        size = Tensor.constant(boxes[:, axis + 2:axis + 3])
        new_size = mul(exp(_column(deltas, axis + 2)), size)
        start = pos + mul(_column(deltas, axis), size) + scalar_mul(size - new_size, 0.5)
        over_low = relu(scalar_mul(start, -1.0))
        over_high = relu(start + new_size - 1.0)
        out.append((start + over_low, new_size - over_low - over_high))
    (x, w), (y, h) = out
    return concat([x, y, w, h], axis=1)


def refine_box(box: Sequence[float], deltas: Sequence[float]) -> np.ndarray:
    """단일 박스 수치 버전. 잘린 뒤 면적이 0 이하이면 DegenerateBoxError."""
    refined = refine_boxes(np.asarray(box, dtype=np.float64).reshape(1, 4),
                           Tensor.constant(np.asarray(deltas, dtype=np.float64).reshape(1, 4))).values[0]
    if refined[2] <= 0 or refined[3] <= 0:
        raise DegenerateBoxError(f"보정 후 박스 면적이 0입니다: {refined.tolist()}")
    return refined


@dataclass
class DecodedSceneGraph:
    node_labels: np.ndarray        # (B,) argmax 엔티티 라벨
    node_probs: np.ndarray         # (B, 48)
    relation_probs: np.ndarray     # (P, 4)
    pair_index: np.ndarray         # (P, 2)
    edges: List[Tuple[int, int, int, float]] = field(default_factory=list)  # (i, j, r, confidence)

    @property
    def n_nodes(self) -> int:
        return int(self.node_labels.shape[0])

    def to_dict(self) -> dict:
        return {
            "nodes": [int(v) for v in self.node_labels],
            "edges": [{"subject": i, "relation": RELATIONS[r], "object": j, "confidence": conf}
                      for i, j, r, conf in self.edges],
        }


def decode_scene_graph(entity_logits: np.ndarray, relation_logits: np.ndarray,
                       pair_index: np.ndarray, top_k: int) -> DecodedSceneGraph:
    """노드 = argmax 엔티티 라벨, 간선 = 확신도 상위 top_k 개 관계 (동률은 순서쌍 순서)"""
    node_probs = softmax_rows(np.asarray(entity_logits, dtype=np.float64).reshape(-1, N_CATEGORIES))
    relation_probs = softmax_rows(np.asarray(relation_logits, dtype=np.float64).reshape(-1, N_RELATIONS))
    pair_index = np.asarray(pair_index, dtype=np.int64).reshape(-1, 2)
    best = np.argmax(relation_probs, axis=1) if relation_probs.shape[0] else np.zeros(0, dtype=np.int64)
    confidence = relation_probs[np.arange(relation_probs.shape[0]), best]
    order = np.argsort(-confidence, kind="stable")[:max(int(top_k), 0)]
    edges = [(int(pair_index[k, 0]), int(pair_index[k, 1]), int(best[k]), float(confidence[k])) for k in order]
    return DecodedSceneGraph(np.argmax(node_probs, axis=1), node_probs, relation_probs, pair_index, edges)
