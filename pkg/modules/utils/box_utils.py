"""
박스 유틸리티
저장 형식은 정규화된 코너 형식 (x_min, y_min, w, h) 입니다.
"""

from typing import Sequence, Union

import numpy as np

from modules.utils.errors import DegenerateBoxError

BoxLike = Union[Sequence[float], np.ndarray]


def as_boxes(boxes) -> np.ndarray:
    """(n, 4) float64 배열로 변환 (빈 입력은 (0, 4))"""
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 4))
    return arr.reshape(-1, 4)


def iou(a: BoxLike, b: BoxLike) -> float:
    """교집합 면적 / 합집합 면적 (면적 0인 박스는 IOU 0)"""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a, b) -> np.ndarray:
    """(n, m) IOU 행렬. 원소마다 iou() 와 같은 연산 순서라 값이 비트 단위로 같습니다."""
    a, b = as_boxes(a), as_boxes(b)
    ax, ay, aw, ah = (a[:, k:k + 1] for k in range(4))
    bx, by, bw, bh = (b[:, k] for k in range(4))
    ix = np.maximum(0.0, np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx))
    iy = np.maximum(0.0, np.minimum(ay + ah, by + bh) - np.maximum(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    valid = (aw > 0) & (ah > 0) & (bw > 0) & (bh > 0) & (union > 0)
    return np.where(valid, inter / np.where(valid, union, 1.0), 0.0)


def union_box(a: BoxLike, b: BoxLike) -> np.ndarray:
    """두 박스를 모두 포함하는 최소 박스"""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    x1, y1 = min(ax, bx), min(ay, by)
    x2, y2 = max(ax + aw, bx + bw), max(ay + ah, by + bh)
    return np.array([x1, y1, x2 - x1, y2 - y1])


def pair_union_boxes(boxes, pair_index: np.ndarray) -> np.ndarray:
    boxes = as_boxes(boxes)
    if len(pair_index) == 0:
        return np.zeros((0, 4))
    return np.stack([union_box(boxes[i], boxes[j]) for i, j in pair_index])


def clip_box(box: BoxLike) -> np.ndarray:
    """캔버스 [0,1]² 안으로 자르기. 넘치지 않은 좌표는 그대로 둡니다."""
    x, y, w, h = (float(v) for v in box)
    if x < 0.0:
        w, x = w + x, 0.0
    if x + w > 1.0:
        w = 1.0 - x
        while x + w > 1.0:
            w = float(np.nextafter(w, 0.0))
    if y < 0.0:
        h, y = h + y, 0.0
    if y + h > 1.0:
        h = 1.0 - y
        while y + h > 1.0:
            h = float(np.nextafter(h, 0.0))
    return np.array([x, y, w, h])


def check_box(box: BoxLike) -> np.ndarray:
    """캔버스와 겹치는 양의 면적 박스인지 확인"""
    arr = np.asarray(box, dtype=np.float64).reshape(-1)
    if arr.shape[0] != 4 or not np.all(np.isfinite(arr)):
        raise DegenerateBoxError(f"잘못된 박스: {box}")
    x, y, w, h = arr
    if w <= 0 or h <= 0:
        raise DegenerateBoxError(f"면적이 0인 박스: {arr.tolist()}")
    if x >= 1.0 or y >= 1.0 or x + w <= 0.0 or y + h <= 0.0:
        raise DegenerateBoxError(f"캔버스 밖의 박스: {arr.tolist()}")
    return arr
