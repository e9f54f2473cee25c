"""
최소 밀집 텐서 엔진 (역전파 자동미분)
모든 연산은 float64, 그래프는 학습 스텝마다 새로 만듭니다 (define-by-run).

사용 예:
    graph = ComputationGraph(parameters)
    w = graph.param("embed.w0")
    loss = reduce_sum(relu(matmul(x, w)))
    grads = graph.backward(loss)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from modules.utils.errors import (
    EmptyInputError,
    GraphError,
    LabelRangeError,
    NonFiniteError,
    ShapeError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """float64 값 배열 + 계산 그래프 핸들 (상수는 node_id 없음)"""

    __slots__ = ("values", "graph", "node_id")

    def __init__(self, values: ArrayLike, graph: Optional["ComputationGraph"] = None,
                 node_id: Optional[int] = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.graph = graph
        self.node_id = node_id

    @classmethod
    def constant(cls, values: ArrayLike) -> "Tensor":
        return cls(np.array(values, dtype=np.float64))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_constant(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"스칼라가 아닌 텐서입니다: {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self) -> str:
        kind = "const" if self.node_id is None else f"node={self.node_id}"
        return f"Tensor(shape={self.shape}, {kind})"

    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return scalar_mul(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class NodeRecord:
    """그래프 노드 기록 (연산 종류, 부모 id, 순전파 캐시)"""
    op: str
    parents: Tuple[Optional[int], ...]
    value: np.ndarray
    backward: Optional[BackwardFn]
    param_name: Optional[str] = None


class Gradients:
    """backward 결과: node-id 별 기울기 버퍼"""

    def __init__(self, by_node: Dict[int, np.ndarray], graph: "ComputationGraph"):
        self.by_node = by_node
        self._graph = graph

    def for_tensor(self, tensor: Tensor) -> np.ndarray:
        if tensor.node_id is None:
            return np.zeros_like(tensor.values)
        grad = self.by_node.get(tensor.node_id)
        if grad is None:
            return np.zeros_like(tensor.values)
        return grad

    def for_param(self, name: str) -> np.ndarray:
        node_id = self._graph.param_nodes.get(name)
        if node_id is not None and node_id in self.by_node:
            return self.by_node[node_id]
        if self._graph.parameters is not None and name in self._graph.parameters:
            return np.zeros_like(self._graph.parameters[name])
        raise KeyError(name)

    def for_parameters(self, parameters: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """저장소의 모든 파라미터에 대한 기울기 (순전파에 쓰이지 않은 것은 0)"""
        result = {}
        for name, value in parameters.items():
            node_id = self._graph.param_nodes.get(name)
            grad = self.by_node.get(node_id) if node_id is not None else None
            result[name] = grad if grad is not None else np.zeros_like(value)
        return result


class ComputationGraph:
    """노드 기록 목록. 부모 id는 항상 자식보다 앞섭니다."""

    def __init__(self, parameters: Optional[Mapping[str, np.ndarray]] = None, track: bool = True):
        self.parameters = parameters
        # track=False: 파라미터를 상수로 돌려주어 노드를 기록하지 않음 (추론 전용)
        self.track = track
        self.nodes: List[NodeRecord] = []
        self.param_nodes: Dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def param(self, name: str) -> Tensor:
        """파라미터를 리프로 등록 (같은 이름은 같은 노드를 재사용해 기울기가 누적됨)"""
        if name in self.param_nodes:
            node_id = self.param_nodes[name]
            return Tensor(self.nodes[node_id].value, self, node_id)
        if self.parameters is None or name not in self.parameters:
            raise GraphError(f"등록되지 않은 파라미터: {name}")
        value = np.asarray(self.parameters[name], dtype=np.float64)
        if not self.track:
            return Tensor(value)
        tensor = self._append("param", (), value, None, param_name=name)
        self.param_nodes[name] = tensor.node_id
        return tensor

    def variable(self, values: ArrayLike, name: str = "input") -> Tensor:
        """기울기를 추적하는 임의 입력 리프"""
        return self._append(name, (), np.array(values, dtype=np.float64), None)

    def record(self, op: str, parents: Sequence[Tensor], value: np.ndarray,
               backward: BackwardFn) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"'{op}' 연산 결과에 NaN/Inf가 있습니다")
        parent_ids = tuple(p.node_id for p in parents)
        return self._append(op, parent_ids, value, backward)

    def _append(self, op: str, parents: Tuple[Optional[int], ...], value: np.ndarray,
                backward: Optional[BackwardFn], param_name: Optional[str] = None) -> Tensor:
        node_id = len(self.nodes)
        self.nodes.append(NodeRecord(op, parents, value, backward, param_name))
        return Tensor(value, self, node_id)

    def backward(self, root: Tensor) -> Gradients:
        """root(스칼라)에서 역위상 순서로 기울기 누적"""
        if root.values.size != 1 or root.values.ndim > 1:
            raise ShapeError(f"backward는 스칼라 root만 허용합니다: {root.shape}")
        if root.node_id is None:
            return Gradients({}, self)
        if root.graph is not self:
            raise GraphError("다른 그래프의 텐서입니다")

        grads: Dict[int, np.ndarray] = {root.node_id: np.ones_like(root.values)}
        for node_id in range(root.node_id, -1, -1):
            grad = grads.get(node_id)
            record = self.nodes[node_id]
            if grad is None or record.backward is None:
                continue
            parent_grads = record.backward(grad)
            for parent_id, parent_grad in zip(record.parents, parent_grads):
                if parent_id is None or parent_grad is None:
                    continue
                if parent_id in grads:
                    grads[parent_id] = grads[parent_id] + parent_grad
                else:
                    grads[parent_id] = np.array(parent_grad, dtype=np.float64)
        return Gradients(grads, self)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor.constant(value)


def _graph_of(*tensors: Tensor) -> Optional[ComputationGraph]:
    graph = None
    for t in tensors:
        if t.graph is None:
            continue
        if graph is None:
            graph = t.graph
        elif t.graph is not graph:
            raise GraphError("서로 다른 계산 그래프의 텐서를 섞을 수 없습니다")
    return graph


def _emit(op: str, parents: Sequence[Tensor], value: np.ndarray, backward: BackwardFn) -> Tensor:
    graph = _graph_of(*parents)
    if graph is None:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"'{op}' 연산 결과에 NaN/Inf가 있습니다")
        return Tensor(value)
    return graph.record(op, parents, value, backward)


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and not (a.values.ndim == 0 or b.values.ndim == 0):
        raise ShapeError(f"{op}: 형태 불일치 {a.shape} vs {b.shape}")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# 기본 연산
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: 내부 차원 불일치 {a.shape} · {b.shape}")
    av, bv = a.values, b.values

    def backward(g):
        return g @ bv.T, av.T @ g

    return _emit("matmul", (a, b), av @ bv, backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise EmptyInputError("concat: 빈 입력")
    ndim = parts[0].values.ndim
    for p in parts:
        if p.values.ndim != ndim:
            raise ShapeError("concat: 차원 수가 다릅니다")
        other = [d for k, d in enumerate(p.shape) if k != axis]
        first = [d for k, d in enumerate(parts[0].shape) if k != axis]
        if other != first:
            raise ShapeError(f"concat: 형태 불일치 {p.shape} vs {parts[0].shape} (axis={axis})")
    if len(parts) == 1:
        return parts[0]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    value = np.concatenate([p.values for p in parts], axis=axis)

    def backward(g):
        return np.split(g, splits, axis=axis)

    return _emit("concat", parts, value, backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.values > 0

    def backward(g):
        return (g * mask,)

    return _emit("relu", (x,), np.where(mask, x.values, 0.0), backward)


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.values)

    def backward(g):
        return (g * out,)

    return _emit("exp", (x,), out, backward)


def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _reduce_to(g, sa), _reduce_to(g, sb)

    return _emit("add", (a, b), a.values + b.values, backward)


def sub(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _reduce_to(g, sa), _reduce_to(-g, sb)

    return _emit("sub", (a, b), a.values - b.values, backward)


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    av, bv = a.values, b.values

    def backward(g):
        return _reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape)

    return _emit("mul", (a, b), av * bv, backward)


def scalar_mul(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _emit("scalar_mul", (x,), x.values * c, backward)


def reduce_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is None:
            return (np.full(shape, float(np.asarray(g).reshape(-1)[0])),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    value = np.asarray(x.values.sum() if axis is None else x.values.sum(axis=axis))
    return _emit("reduce_sum", (x,), value, backward)


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise EmptyInputError("mean: 빈 텐서")
    return scalar_mul(reduce_sum(x), 1.0 / x.size)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        value = x.values.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {original} -> {shape} 불가") from e

    def backward(g):
        return (g.reshape(original),)

    return _emit("reshape", (x,), value, backward)


def add_row(x: Tensor, b: Tensor) -> Tensor:
    """(n×k) 행렬의 모든 행에 (k,) 벡터를 더함 (바이어스)"""
    x, b = as_tensor(x), as_tensor(b)
    if x.values.ndim != 2 or b.values.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_row: 형태 불일치 {x.shape} + {b.shape}")

    def backward(g):
        return g, g.sum(axis=0)

    return _emit("add_row", (x, b), x.values + b.values, backward)


def scale_rows(x: Tensor, w: Tensor) -> Tensor:
    """(n×k) 행렬의 i번째 행에 스칼라 w[i]를 곱함"""
    x, w = as_tensor(x), as_tensor(w)
    if x.values.ndim != 2 or w.values.ndim != 1 or x.shape[0] != w.shape[0]:
        raise ShapeError(f"scale_rows: 형태 불일치 {x.shape} × {w.shape}")
    xv, wv = x.values, w.values

    def backward(g):
        return g * wv[:, None], (g * xv).sum(axis=1)

    return _emit("scale_rows", (x, w), xv * wv[:, None], backward)


def gather_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: 인덱스 범위 초과 (rows={x.shape[0]})")
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", (x,), x.values[idx], backward)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if x.values.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_cols: 잘못된 범위 [{start}:{stop}] for {x.shape}")
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _emit("slice_cols", (x,), x.values[:, start:stop].copy(), backward)


def segment_sum(x: Tensor, segment_ids: Sequence[int], n_segments: int) -> Tensor:
    """segment_ids가 같은 행끼리 합산 (빈 세그먼트는 0 벡터)"""
    x = as_tensor(x)
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if seg.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_sum: 세그먼트 길이 {seg.shape[0]} != 행 수 {x.shape[0]}")
    out = np.zeros((n_segments,) + x.shape[1:])
    np.add.at(out, seg, x.values)

    def backward(g):
        return (g[seg],)

    return _emit("segment_sum", (x,), out, backward)


def _segment_softmax_values(scores: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, seg, scores)
    shifted = np.exp(scores - seg_max[seg])
    seg_total = np.zeros(n_segments)
    np.add.at(seg_total, seg, shifted)
    return shifted / seg_total[seg]


def segment_softmax(scores: Tensor, segment_ids: Sequence[int], n_segments: int) -> Tensor:
    """세그먼트별 softmax (최댓값 차감으로 안정화)"""
    scores = as_tensor(scores)
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if scores.values.ndim != 1 or seg.shape[0] != scores.shape[0]:
        raise ShapeError(f"segment_softmax: 형태 불일치 {scores.shape} / {seg.shape}")
    out = _segment_softmax_values(scores.values, seg, n_segments)

    def backward(g):
        weighted = np.zeros(n_segments)
        np.add.at(weighted, seg, g * out)
        return (out * (g - weighted[seg]),)

    return _emit("segment_softmax", (scores,), out, backward)


def softmax_weights(scores: Tensor) -> Tensor:
    scores = as_tensor(scores)
    if scores.values.ndim != 1:
        raise ShapeError(f"softmax_weights: 1차원 점수가 필요합니다 {scores.shape}")
    if scores.shape[0] < 1:
        raise EmptyInputError("softmax_weights: 빈 점수 벡터")
    return segment_softmax(scores, np.zeros(scores.shape[0], dtype=np.int64), 1)


# ---------------------------------------------------------------------------
# 손실
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """행별 -log softmax(logits)[target] 의 평균"""
    logits = as_tensor(logits)
    target = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.values.ndim != 2 or logits.shape[0] != target.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: 형태 불일치 {logits.shape} / {target.shape}")
    n, n_classes = logits.shape
    if n == 0:
        raise EmptyInputError("softmax_cross_entropy: 빈 배치")
    if target.min() < 0 or target.max() >= n_classes:
        raise LabelRangeError(f"타깃이 [0,{n_classes}) 범위를 벗어났습니다")

    x = logits.values
    shifted = x - x.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    losses = log_norm - shifted[rows, target]
    probs = np.exp(shifted - log_norm[:, None])

    def backward(g):
        d = probs.copy()
        d[rows, target] -= 1.0
        return (d * (float(np.asarray(g).reshape(-1)[0]) / n),)

    return _emit("softmax_cross_entropy", (logits,), np.asarray(losses.mean()), backward)


def smooth_l1(pred: Tensor, target: Union[Tensor, ArrayLike]) -> Tensor:
    """평균 smooth-L1 (beta=1)"""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"smooth_l1: 형태 불일치 {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise EmptyInputError("smooth_l1: 빈 입력")
    d = pred.values - target.values
    small = np.abs(d) < 1.0
    losses = np.where(small, 0.5 * d * d, np.abs(d) - 0.5)
    slope = np.where(small, d, np.sign(d))
    n = d.size

    def backward(g):
        scaled = slope * (float(np.asarray(g).reshape(-1)[0]) / n)
        return scaled, -scaled

    return _emit("smooth_l1", (pred, target), np.asarray(losses.mean()), backward)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """그래프 밖에서 쓰는 행별 softmax (디코딩/평가용)"""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
