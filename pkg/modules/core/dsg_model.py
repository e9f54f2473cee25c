"""
전체 모델 조립: 디스크립터 임베딩 → DSG 생성기 → 태스크 헤드

ablation 플래그:
- use_dsg=False: 헤드가 z'_i 대신 z_i = [f_i; b_i] 를 입력으로 받음 (DSG 파라미터는 기울기 0)
- use_box_refiner=False: 예측 박스로 원래 제안 박스를 사용
- two_step=True: RR 분류기 대신 장면 그래프 디코딩 + 2단계 추론으로 박스 선택
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from modules.core.autodiff import ComputationGraph, Tensor, concat
from modules.core.dsg_generator import DsgOutput, GpiGenerator, gpi_forward
from modules.core.heads import (
    N_ROLES,
    DecodedSceneGraph,
    QueryEmbedding,
    decode_scene_graph,
    refine_box,
    refine_boxes,
    rr_classify,
    select_boxes,
)
from modules.core.layers import Mlp, Parameters
from modules.core.two_step_reasoner import two_step_reason
from modules.data.processors.proposal_simulator import DESCRIPTOR_WIDTH, BoxSet
from modules.data.scene_generator import N_CATEGORIES, N_RELATIONS, Query
from modules.utils.config_manager import AblationFlags, ModelConfig
from modules.utils.errors import DegenerateBoxError

logger = logging.getLogger(__name__)

BOX_WIDTH = 4


@dataclass
class ModelState:
    """한 이미지에 대한 순전파 결과 (헤드 입력 포함)"""
    zs: Tensor
    z_pairs: Tensor
    dsg: Optional[DsgOutput]
    node_features: Tensor
    pair_features: Tensor
    pair_index: np.ndarray


@dataclass
class QueryPrediction:
    subject_indices: List[int]
    object_indices: List[int]
    subject_boxes: np.ndarray
    object_boxes: np.ndarray
    role_logits: Optional[np.ndarray] = None


@dataclass
class ImagePrediction:
    queries: List[QueryPrediction]
    refined_boxes: np.ndarray
    decoded: Optional[DecodedSceneGraph] = None
    outer_weights: Optional[np.ndarray] = None
    degenerate_refinements: int = 0


class DsgModel:
    """DSG 기반 referring-relationship 모델"""

    def __init__(self, config: ModelConfig, flags: AblationFlags = AblationFlags()):
        self.config = config
        self.flags = flags
        self.z_width = config.feature_width + BOX_WIDTH
        self.embed_box = Mlp.two_layer("embed.box", DESCRIPTOR_WIDTH, config.embed_hidden, config.feature_width)
        self.embed_pair = Mlp.two_layer("embed.pair", DESCRIPTOR_WIDTH, config.embed_hidden, config.feature_width)
        self.generator = GpiGenerator(self.z_width, config.gpi_hidden, config.gpi_value,
                                      config.gpi_summary, config.dsg_width, mode=config.gpi_mode)
        head_in = config.dsg_width if flags.use_dsg else self.z_width
        self.head_width = head_in
        self.query = QueryEmbedding(config.query_dim)
        self.rr_head = Mlp.two_layer("rr", head_in + self.query.out_width, config.head_hidden, N_ROLES)
        self.refiner = Mlp.linear("refine", head_in, BOX_WIDTH)
        self.entity_labeler = Mlp.linear("label.entity", head_in, N_CATEGORIES)
        self.relation_labeler = Mlp.linear("label.relation", head_in, N_RELATIONS)

    # ------------------------------------------------------------------
    # 파라미터
    # ------------------------------------------------------------------
    def init_parameters(self, seed: int) -> Parameters:
        rng = np.random.default_rng(seed)
        params = Parameters()
        self.embed_box.initialize(params, rng)
        self.embed_pair.initialize(params, rng)
        self.generator.initialize(params, rng)
        self.query.initialize(params, rng)
        self.rr_head.initialize(params, rng)
        self.refiner.initialize(params, rng)
        # 보정기는 항등 변환에서 시작
        params.set(self.refiner.weight_name(0), np.zeros_like(params[self.refiner.weight_name(0)]))
        self.entity_labeler.initialize(params, rng)
        self.relation_labeler.initialize(params, rng)
        logger.debug(f"파라미터 초기화: {len(params)}개 텐서, {params.num_values()}개 값")
        return params

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return self.init_parameters(0).shapes()

    def dsg_parameter_names(self) -> List[str]:
        return self.generator.parameter_names()

    # ------------------------------------------------------------------
    # 순전파
    # ------------------------------------------------------------------
    def encode(self, graph: ComputationGraph, box_set: BoxSet) -> Tuple[Tensor, Tensor]:
        """z_i = [f_i; b_i], z_ij = [f_ij; b_ij]"""
        f = self.embed_box.forward(graph, Tensor.constant(box_set.descriptors))
        zs = concat([f, Tensor.constant(box_set.boxes)], axis=1)
        if box_set.n_pairs == 0:
            return zs, Tensor.constant(np.zeros((0, self.z_width)))
        f_pairs = self.embed_pair.forward(graph, Tensor.constant(box_set.pair_descriptors))
        z_pairs = concat([f_pairs, Tensor.constant(box_set.union_boxes)], axis=1)
        return zs, z_pairs

    def forward(self, graph: ComputationGraph, box_set: BoxSet) -> ModelState:
        zs, z_pairs = self.encode(graph, box_set)
        if not self.flags.use_dsg:
            return ModelState(zs, z_pairs, None, zs, z_pairs, box_set.pair_index)
        dsg = gpi_forward(graph, self.generator, zs, z_pairs, box_set.pair_index)
        return ModelState(zs, z_pairs, dsg, dsg.nodes, dsg.pairs, box_set.pair_index)

    def role_logits(self, graph: ComputationGraph, state: ModelState, query: Query) -> Tensor:
        q = self.query.forward(graph, query.subject_category, query.relation_index, query.object_category)
        return rr_classify(graph, self.rr_head, state.node_features, q)

    def box_deltas(self, graph: ComputationGraph, state: ModelState) -> Tensor:
        return self.refiner.forward(graph, state.node_features)

    def refined_boxes(self, graph: ComputationGraph, state: ModelState, box_set: BoxSet) -> Tensor:
        return refine_boxes(box_set.boxes, self.box_deltas(graph, state))

    def entity_logits(self, graph: ComputationGraph, state: ModelState) -> Tensor:
        return self.entity_labeler.forward(graph, state.node_features)

    def relation_logits(self, graph: ComputationGraph, state: ModelState) -> Optional[Tensor]:
        if state.pair_index.shape[0] == 0:
            return None
        return self.relation_labeler.forward(graph, state.pair_features)

    # ------------------------------------------------------------------
    # 추론
    # ------------------------------------------------------------------
    def _decode_state(self, graph: ComputationGraph, state: ModelState, top_k: int) -> DecodedSceneGraph:
        relation = self.relation_logits(graph, state)
        relation_values = relation.values if relation is not None else np.zeros((0, N_RELATIONS))
        return decode_scene_graph(self.entity_logits(graph, state).values, relation_values,
                                  state.pair_index, top_k)

    def decode(self, params: Parameters, box_set: BoxSet, top_k: int) -> DecodedSceneGraph:
        graph = ComputationGraph(params, track=False)
        return self._decode_state(graph, self.forward(graph, box_set), top_k)

    def _numeric_refine(self, box_set: BoxSet, deltas: np.ndarray) -> Tuple[np.ndarray, int]:
        refined = box_set.boxes.copy()
        degenerate = 0
        for i in range(box_set.n_boxes):
            try:
                refined[i] = refine_box(box_set.boxes[i], deltas[i])
            except DegenerateBoxError:
                degenerate += 1
        if degenerate:
            logger.warning(f"⚠️ 보정 후 면적 0인 박스 {degenerate}개는 원래 제안 박스를 사용합니다")
        return refined, degenerate

    def predict(self, params: Parameters, box_set: BoxSet, queries: List[Query],
                top_k: int = 10) -> ImagePrediction:
        """이미지 하나의 모든 질의에 대해 Subject/Object 박스 예측"""
        graph = ComputationGraph(params, track=False)
        state = self.forward(graph, box_set)
        if self.flags.use_box_refiner:
            refined, degenerate = self._numeric_refine(box_set, self.box_deltas(graph, state).values)
        else:
            refined, degenerate = box_set.boxes.copy(), 0

        decoded = None
        if self.flags.two_step:
            decoded = self._decode_state(graph, state, top_k)

        predictions = []
        for query in queries:
            logits = None
            if self.flags.two_step:
                subjects, objects = two_step_reason(decoded, query)
            else:
                logits = self.role_logits(graph, state, query).values
                subjects, objects = select_boxes(logits)
            predictions.append(QueryPrediction(subjects, objects, refined[subjects], refined[objects], logits))

        outer = state.dsg.outer_weights if state.dsg is not None else None
        return ImagePrediction(predictions, refined, decoded, outer, degenerate)
