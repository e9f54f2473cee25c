"""
Differentiable Scene-Graph 생성기 (GPI 집계)

    s_i = Σ_{j≠i} φ(z_i, z_ij, z_j)        (attention 모드: j에 대한 softmax 가중합)
    g   = Σ_i α(z_i, s_i)                    (attention 모드: i에 대한 softmax 가중합)
    z'_k  = ρ_entity(z_k, g)
    z'_kl = ρ_relation(z_kl, g)

순서쌍은 (P, ·) 행렬로 평탄화하고 세그먼트 합/softmax로 i별 집계를 계산합니다.
φ, α 의 마지막 출력 열은 attention 점수이며 sum 모드에서는 쓰이지 않습니다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from modules.core.autodiff import (
    ComputationGraph,
    Tensor,
    concat,
    gather_rows,
    reduce_sum,
    reshape,
    scale_rows,
    segment_softmax,
    segment_sum,
    slice_cols,
    softmax_weights,
)
from modules.core.layers import Mlp, Parameters
from modules.utils.config_manager import GPI_MODES
from modules.utils.errors import EmptyInputError, ModeError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class DsgOutput:
    g: Tensor                 # (S,)
    nodes: Tensor             # (B, D)   z'_i
    pairs: Tensor             # (P, D)   z'_ij (pair_index 순서)
    pair_index: np.ndarray
    outer_weights: Optional[np.ndarray] = None  # attention 모드에서만


class GpiGenerator:
    """φ, α, ρ_entity, ρ_relation 네 개의 2층 MLP"""

    def __init__(self, z_width: int, hidden: int, value_width: int, summary_width: int,
                 out_width: int, mode: str = "sum", prefix: str = "dsg"):
        if mode not in GPI_MODES:
            raise ModeError(f"알 수 없는 GPI 모드: {mode}")
        self.mode = mode
        self.z_width = z_width
        self.value_width = value_width
        self.summary_width = summary_width
        self.out_width = out_width
        self.phi = Mlp.two_layer(f"{prefix}.phi", 3 * z_width, hidden, value_width + 1)
        self.alpha = Mlp.two_layer(f"{prefix}.alpha", z_width + value_width, hidden, summary_width + 1)
        self.rho_entity = Mlp.two_layer(f"{prefix}.rho_entity", z_width + summary_width, hidden, out_width)
        self.rho_relation = Mlp.two_layer(f"{prefix}.rho_relation", z_width + summary_width, hidden, out_width)

    @property
    def networks(self) -> Dict[str, Mlp]:
        return {"phi": self.phi, "alpha": self.alpha,
                "rho_entity": self.rho_entity, "rho_relation": self.rho_relation}

    def parameter_names(self):
        return [name for net in self.networks.values() for name in net.parameter_names()]

    def initialize(self, params: Parameters, rng: np.random.Generator) -> None:
        for net in self.networks.values():
            net.initialize(params, rng)

    def _check_inputs(self, zs: Tensor, z_pairs: Tensor, pair_index: np.ndarray) -> int:
        if zs.values.ndim != 2 or zs.shape[1] != self.z_width:
            raise ShapeError(f"z 형태 {zs.shape}, 폭 {self.z_width} 필요")
        n = zs.shape[0]
        if n < 1:
            raise EmptyInputError("GPI 입력에 노드가 없습니다")
        if pair_index.shape[0] != n * (n - 1) or z_pairs.shape != (n * (n - 1), self.z_width):
            raise ShapeError(f"B={n} 에는 {n * (n - 1)}개 순서쌍이 필요합니다 (받은 형태 {z_pairs.shape})")
        return n

    def _inner(self, graph: ComputationGraph, zs: Tensor, z_pairs: Tensor,
               pair_index: np.ndarray, n: int) -> Tensor:
        """노드별 이웃 집계 s_i (B, V). B=1 이면 0 벡터."""
        if pair_index.shape[0] == 0:
            return Tensor.constant(np.zeros((n, self.value_width)))
        first, second = pair_index[:, 0], pair_index[:, 1]
        phi_in = concat([gather_rows(zs, first), z_pairs, gather_rows(zs, second)], axis=1)
        phi_out = self.phi.forward(graph, phi_in)
        values = slice_cols(phi_out, 0, self.value_width)
        if self.mode == "sum":
            return segment_sum(values, first, n)
        scores = reshape(slice_cols(phi_out, self.value_width, self.value_width + 1), (phi_out.shape[0],))
        weights = segment_softmax(scores, first, n)
        return segment_sum(scale_rows(values, weights), first, n)

    def _outer(self, graph: ComputationGraph, zs: Tensor, s: Tensor):
        alpha_out = self.alpha.forward(graph, concat([zs, s], axis=1))
        values = slice_cols(alpha_out, 0, self.summary_width)
        if self.mode == "sum":
            return reduce_sum(values, axis=0), None
        scores = reshape(slice_cols(alpha_out, self.summary_width, self.summary_width + 1), (alpha_out.shape[0],))
        weights = softmax_weights(scores)
        return reduce_sum(scale_rows(values, weights), axis=0), weights.values.copy()

    def forward(self, graph: ComputationGraph, zs: Tensor, z_pairs: Tensor,
                pair_index: np.ndarray) -> DsgOutput:
        pair_index = np.asarray(pair_index, dtype=np.int64).reshape(-1, 2)
        n = self._check_inputs(zs, z_pairs, pair_index)
        s = self._inner(graph, zs, z_pairs, pair_index, n)
        g, outer_weights = self._outer(graph, zs, s)

        g_row = reshape(g, (1, self.summary_width))
        nodes = self.rho_entity.forward(graph, concat([zs, gather_rows(g_row, np.zeros(n, dtype=np.int64))], axis=1))
        n_pairs = pair_index.shape[0]
        if n_pairs:
            pair_in = concat([z_pairs, gather_rows(g_row, np.zeros(n_pairs, dtype=np.int64))], axis=1)
            pairs = self.rho_relation.forward(graph, pair_in)
        else:
            pairs = Tensor.constant(np.zeros((0, self.out_width)))
        return DsgOutput(g, nodes, pairs, pair_index, outer_weights)


def gpi_forward(graph: ComputationGraph, generator: GpiGenerator, zs: Tensor, z_pairs: Tensor,
                pair_index: np.ndarray) -> DsgOutput:
    """{z_i}, {z_ij} → 문맥화된 {z'_i}, {z'_ij} 와 전역 요약 g"""
    return generator.forward(graph, zs, z_pairs, pair_index)


def attention_weights_report(generator: GpiGenerator, params: Parameters, zs: np.ndarray,
                             z_pairs: np.ndarray, pair_index: np.ndarray) -> np.ndarray:
    """attention 모드의 외부 softmax 가중치 (노드별, 합 1)"""
    if generator.mode != "attention":
        raise ModeError("attention_weights_report 는 attention 모드에서만 호출할 수 있습니다")
    graph = ComputationGraph(params, track=False)
    output = gpi_forward(graph, generator, Tensor.constant(zs), Tensor.constant(z_pairs), pair_index)
    return output.outer_weights
