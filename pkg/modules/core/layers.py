"""
파라미터 저장소와 완전연결 네트워크(MLP)
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from modules.core.autodiff import ComputationGraph, Tensor, add_row, matmul, relu
from modules.utils.errors import ShapeError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")


class Parameters(Mapping[str, np.ndarray]):
    """이름 → float64 배열 (삽입 순서 유지)"""

    def __init__(self, arrays: Mapping[str, np.ndarray] = None):
        self._arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, value in (arrays or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._arrays:
            raise KeyError(f"중복 파라미터 이름: {name}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def set(self, name: str, value: np.ndarray) -> None:
        if self._arrays[name].shape != np.shape(value):
            raise ShapeError(f"{name}: 형태 불일치 {self._arrays[name].shape} vs {np.shape(value)}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self._arrays.items()})

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    def num_values(self) -> int:
        return int(sum(v.size for v in self._arrays.values()))

    def bitwise_equal(self, other: Mapping[str, np.ndarray]) -> bool:
        if list(self.keys()) != list(other.keys()):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == np.asarray(other[k]).tobytes()
            for k in self
        )


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Mlp:
    """층별 가중치/바이어스 + 활성화 태그 (relu 또는 identity)"""

    def __init__(self, name: str, widths: Sequence[int], activations: Sequence[str]):
        if len(widths) < 2 or len(activations) != len(widths) - 1:
            raise ShapeError(f"{name}: 폭 {list(widths)} 과 활성화 {list(activations)} 개수가 맞지 않습니다")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"{name}: 알 수 없는 활성화 '{act}'")
        self.name = name
        self.widths = [int(w) for w in widths]
        self.activations = list(activations)

    @classmethod
    def two_layer(cls, name: str, in_width: int, hidden: int, out_width: int) -> "Mlp":
        return cls(name, [in_width, hidden, out_width], ["relu", "identity"])

    @classmethod
    def linear(cls, name: str, in_width: int, out_width: int) -> "Mlp":
        return cls(name, [in_width, out_width], ["identity"])

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    def weight_name(self, layer: int) -> str:
        return f"{self.name}.w{layer}"

    def bias_name(self, layer: int) -> str:
        return f"{self.name}.b{layer}"

    def parameter_names(self) -> List[str]:
        names = []
        for layer in range(len(self.activations)):
            names += [self.weight_name(layer), self.bias_name(layer)]
        return names

    def initialize(self, params: Parameters, rng: np.random.Generator) -> None:
        for layer in range(len(self.activations)):
            fan_in, fan_out = self.widths[layer], self.widths[layer + 1]
            params.add(self.weight_name(layer), glorot_uniform(rng, fan_in, fan_out))
            params.add(self.bias_name(layer), np.zeros(fan_out))

    def forward(self, graph: ComputationGraph, x: Tensor) -> Tensor:
        if x.values.ndim != 2 or x.shape[1] != self.in_width:
            raise ShapeError(f"{self.name}: 입력 폭 {self.in_width} 필요, 받은 형태 {x.shape}")
        h = x
        for layer, act in enumerate(self.activations):
            h = add_row(matmul(h, graph.param(self.weight_name(layer))),
                        graph.param(self.bias_name(layer)))
            if act == "relu":
                h = relu(h)
        return h
