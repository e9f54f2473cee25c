"""
검출기 단계 시뮬레이터
GT 박스를 흔든(jitter) 제안 박스 + 배경 박스를 만들고, 박스/순서쌍별 30차원 디스크립터를 계산합니다.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from modules.data.scene_generator import BACKGROUND_RGB, Scene
from modules.utils.box_utils import check_box, clip_box, iou, pair_union_boxes
from modules.utils.config_manager import ProposalConfig
from modules.utils.errors import ConfigError

logger = logging.getLogger(__name__)

HIST_BINS = 8
DESCRIPTOR_WIDTH = 3 * HIST_BINS + 4 + 1 + 1
BACKGROUND_SOURCE = -1
_BG_RETRIES = 100
_LUMA = np.array([0.299, 0.587, 0.114])

SeedLike = Union[int, Sequence[int]]


@dataclass
class BoxSet:
    boxes: np.ndarray             # (B, 4) 코너 형식
    descriptors: np.ndarray       # (B, 30)
    pair_index: np.ndarray        # (P, 2) 순서쌍 (i, j), i != j, 행 우선 순서
    union_boxes: np.ndarray       # (P, 4)
    pair_descriptors: np.ndarray  # (P, 30)
    source_entity: np.ndarray     # (B,) 원본 엔티티 id, 배경은 -1

    @property
    def n_boxes(self) -> int:
        return int(self.boxes.shape[0])

    @property
    def n_pairs(self) -> int:
        return int(self.pair_index.shape[0])

    def permuted(self, order: Sequence[int]) -> "BoxSet":
        """박스 순서를 바꾼 BoxSet (순서쌍도 같은 규칙으로 재구성)"""
        order = np.asarray(order, dtype=np.int64)
        lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(self.pair_index)}
        pairs = ordered_pairs(len(order))
        rows = [lookup[(int(order[i]), int(order[j]))] for i, j in pairs]
        return BoxSet(self.boxes[order], self.descriptors[order], pairs,
                      self.union_boxes[rows], self.pair_descriptors[rows], self.source_entity[order])


def ordered_pairs(n: int) -> np.ndarray:
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _crop(image: np.ndarray, box: np.ndarray) -> np.ndarray:
    height, width = image.shape[:2]
    x, y, w, h = box
    c0, c1 = max(int(np.floor(x * width)), 0), min(int(np.ceil((x + w) * width)), width)
    r0, r1 = max(int(np.floor(y * height)), 0), min(int(np.ceil((y + h) * height)), height)
    return image[r0:r1, c0:c1].reshape(-1, 3)


def _depth_proxy(pixels: np.ndarray) -> float:
    """배경이 아닌 픽셀의 평균 휘도 (없으면 전체 평균)"""
    if pixels.shape[0] == 0:
        return 0.0
    foreground = pixels[np.any(pixels != np.array(BACKGROUND_RGB, dtype=np.uint8), axis=1)]
    chosen = foreground if foreground.shape[0] else pixels
    return float((chosen.astype(np.float64) @ _LUMA).mean() / 255.0)


def _histogram(pixels: np.ndarray) -> np.ndarray:
    if pixels.shape[0] == 0:
        return np.full(3 * HIST_BINS, 1.0 / HIST_BINS)
    bins = pixels.astype(np.int64) * HIST_BINS // 256
    parts = [np.bincount(bins[:, c], minlength=HIST_BINS) / pixels.shape[0] for c in range(3)]
    return np.concatenate(parts).astype(np.float64)


def describe(image: np.ndarray, box) -> np.ndarray:
    """
    박스 디스크립터 (30 floats)
    [채널별 8구간 색 히스토그램 24 | x, y, w, h | 면적 비율 | 깊이 대용 휘도]
    """
    box = check_box(box)
    pixels = _crop(image, box)
    area = float(box[2] * box[3])
    return np.concatenate([_histogram(pixels), box, [area, _depth_proxy(pixels)]])


def describe_pair(image: np.ndarray, bi: np.ndarray, bj: np.ndarray, union,
                  proxy_i: float, proxy_j: float) -> np.ndarray:
    """
    순서쌍 디스크립터. 합집합 박스 크롭의 히스토그램과 면적은 순서와 무관하므로
    기하/휘도 자리에는 (i − j) 부호 있는 차이를 둡니다.
    proxy_i, proxy_j 는 각 박스 디스크립터의 마지막 값(깊이 대용 휘도)입니다.
    """
    union = check_box(union)
    pixels = _crop(image, union)
    offset = np.array([
        (bi[0] + 0.5 * bi[2]) - (bj[0] + 0.5 * bj[2]),
        (bi[1] + 0.5 * bi[3]) - (bj[1] + 0.5 * bj[3]),
        bi[2] - bj[2],
        bi[3] - bj[3],
    ])
    return np.concatenate([_histogram(pixels), offset, [float(union[2] * union[3]), proxy_i - proxy_j]])


def _jitter_box(rng: np.random.Generator, box: Sequence[float], jitter: float) -> np.ndarray:
    x, y, w, h = (float(v) for v in box)
    dx, dy, dw, dh = rng.uniform(-jitter, jitter, size=4)
    return clip_box((x + dx * w, y + dy * h, w + dw * w, h + dh * h))


def _background_box(rng: np.random.Generator, config: ProposalConfig) -> np.ndarray:
    area = rng.uniform(config.bg_min_area, config.bg_max_area)
    aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
    w = min(float(np.sqrt(area * aspect)), 1.0)
    h = min(float(area / w), 1.0)
    x = rng.uniform(0.0, 1.0 - w)
    y = rng.uniform(0.0, 1.0 - h)
    return np.array([x, y, w, h])


class ProposalSimulator:
    """RPN 대신 쓰는 제안 박스 생성기"""

    def __init__(self, config: ProposalConfig):
        self.config = config
        self.logger = logging.getLogger('ProposalSimulator')

    def propose(self, scene: Scene, image: np.ndarray, rng_seed: SeedLike) -> BoxSet:
        config = self.config
        rng = np.random.default_rng(rng_seed)
        gt_boxes = [np.asarray(e.box, dtype=np.float64) for e in scene.entities]
        boxes = [_jitter_box(rng, box, config.jitter) for box in gt_boxes]
        sources = [e.id for e in scene.entities]
        if len(boxes) > config.max_proposals:
            raise ConfigError(f"scene {scene.scene_id}: 엔티티 수 {len(boxes)} > max_proposals {config.max_proposals}")

        n_bg = min(config.n_bg, config.max_proposals - len(boxes))
        for _ in range(n_bg):
            for _ in range(_BG_RETRIES):
                candidate = _background_box(rng, config)
                if all(iou(candidate, gt) <= config.bg_max_iou for gt in gt_boxes):
                    boxes.append(candidate)
                    sources.append(BACKGROUND_SOURCE)
                    break
            else:
                self.logger.debug(f"scene {scene.scene_id}: 배경 박스 배치 실패 (건너뜀)")

        return build_box_set(image, np.array(boxes).reshape(-1, 4), np.array(sources, dtype=np.int64))


def build_box_set(image: np.ndarray, boxes: np.ndarray, sources: Optional[np.ndarray] = None) -> BoxSet:
    """임의 박스 목록에 대해 디스크립터와 합집합 박스를 모두 계산"""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if sources is None:
        sources = np.full(boxes.shape[0], BACKGROUND_SOURCE, dtype=np.int64)
    descriptors = np.array([describe(image, b) for b in boxes]).reshape(-1, DESCRIPTOR_WIDTH)
    pairs = ordered_pairs(boxes.shape[0])
    unions = pair_union_boxes(boxes, pairs)
    proxies = descriptors[:, -1] if boxes.shape[0] else np.zeros(0)
    pair_descriptors = np.array([
        describe_pair(image, boxes[i], boxes[j], union, proxies[i], proxies[j])
        for (i, j), union in zip(pairs, unions)
    ]).reshape(-1, DESCRIPTOR_WIDTH)
    return BoxSet(boxes, descriptors, pairs, unions, pair_descriptors, np.asarray(sources, dtype=np.int64))


def propose(scene: Scene, image: np.ndarray, rng_seed: SeedLike, config: ProposalConfig) -> BoxSet:
    return ProposalSimulator(config).propose(scene, image, rng_seed)
