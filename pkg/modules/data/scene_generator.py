"""
CLEVR 유사 합성 장면 생성기
엔티티(모양/색/크기/박스/깊이), 공간 관계, referring-relationship 질의를 만듭니다.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.utils.config_manager import SceneConfig
from modules.utils.errors import SceneGenerationError

logger = logging.getLogger(__name__)

SHAPES = ("square", "circle", "triangle")
COLORS = ("gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow")
SIZES = ("small", "large")
RELATIONS = ("left", "right", "front", "behind")

N_CATEGORIES = len(SHAPES) * len(COLORS) * len(SIZES)
N_RELATIONS = len(RELATIONS)

# 채도가 높은 팔레트 - 주 채널이 히스토그램 최상위 구간에 들어감
PALETTE: Dict[str, Tuple[int, int, int]] = {
    "gray": (90, 90, 90),
    "red": (230, 30, 30),
    "blue": (40, 70, 230),
    "green": (40, 200, 60),
    "brown": (140, 90, 40),
    "purple": (140, 50, 200),
    "cyan": (40, 210, 220),
    "yellow": (240, 230, 40),
}
BACKGROUND_RGB = (128, 128, 128)


def category_id(shape: str, color: str, size: str) -> int:
    """모양 × 색 × 크기 인덱스 (0..47)"""
    return (SHAPES.index(shape) * len(COLORS) + COLORS.index(color)) * len(SIZES) + SIZES.index(size)


def category_parts(cat: int) -> Tuple[str, str, str]:
    if not 0 <= cat < N_CATEGORIES:
        raise ValueError(f"카테고리 범위 밖: {cat}")
    rest, size_idx = divmod(int(cat), len(SIZES))
    shape_idx, color_idx = divmod(rest, len(COLORS))
    return SHAPES[shape_idx], COLORS[color_idx], SIZES[size_idx]


def category_name(cat: int) -> str:
    shape, color, size = category_parts(cat)
    return f"{size} {color} {shape}"


@dataclass(frozen=True)
class Entity:
    id: int
    shape: str
    color: str
    size: str
    box: Tuple[float, float, float, float]
    depth: float

    @property
    def category_id(self) -> int:
        return category_id(self.shape, self.color, self.size)

    @property
    def center(self) -> Tuple[float, float]:
        x, y, w, h = self.box
        return x + 0.5 * w, y + 0.5 * h


@dataclass(frozen=True)
class Query:
    subject_category: int
    relation: str
    object_category: int
    gt_subject_ids: Tuple[int, ...]
    gt_object_ids: Tuple[int, ...]

    @property
    def relation_index(self) -> int:
        return RELATIONS.index(self.relation)

    def describe(self) -> str:
        return (f"<{category_name(self.subject_category)}, {self.relation}, "
                f"{category_name(self.object_category)}>")


@dataclass(frozen=True)
class Scene:
    scene_id: int
    canvas_px: int
    entities: Tuple[Entity, ...]
    queries: Tuple[Query, ...] = field(default_factory=tuple)

    def entity(self, entity_id: int) -> Entity:
        for e in self.entities:
            if e.id == entity_id:
                return e
        raise KeyError(f"scene {self.scene_id}: 엔티티 {entity_id} 없음")

    @property
    def is_ambiguous(self) -> bool:
        cats = [e.category_id for e in self.entities]
        return len(set(cats)) < len(cats)

    def boxes(self) -> np.ndarray:
        return np.array([e.box for e in self.entities], dtype=np.float64).reshape(-1, 4)


def relation_holds(a: Entity, b: Entity, relation: str) -> bool:
    """⟨a, relation, b⟩ 성립 여부. 중심/깊이가 같으면 어느 관계도 성립하지 않습니다."""
    if relation == "left":
        return a.center[0] < b.center[0]
    if relation == "right":
        return a.center[0] > b.center[0]
    if relation == "behind":
        return a.depth < b.depth
    if relation == "front":
        return a.depth > b.depth
    raise ValueError(f"알 수 없는 관계: {relation}")


def _satisfiers(entities: Sequence[Entity], s_cat: int, relation: str,
                o_cat: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    subjects = [e for e in entities if e.category_id == s_cat]
    objects = [e for e in entities if e.category_id == o_cat]
    gt_s = sorted({s.id for s in subjects for o in objects if s.id != o.id and relation_holds(s, o, relation)})
    gt_o = sorted({o.id for s in subjects for o in objects if s.id != o.id and relation_holds(s, o, relation)})
    return tuple(gt_s), tuple(gt_o)


def generate_queries(scene: Scene, max_queries: int,
                     rng: Optional[np.random.Generator] = None) -> List[Query]:
    """
    장면에서 성립하는 질의를 모두 열거한 뒤 최대 max_queries개를 고릅니다.
    GT id 목록은 해당 관계를 만족하는 모든 엔티티를 포함합니다.
    같은 카테고리 질의(모호 장면)도 포함하며 자기 자신과의 쌍은 세지 않습니다.
    """
    if len(scene.entities) < 2:
        return []
    categories = sorted({e.category_id for e in scene.entities})
    candidates: List[Query] = []
    for s_cat, o_cat in itertools.product(categories, repeat=2):
        for relation in RELATIONS:
            gt_s, gt_o = _satisfiers(scene.entities, s_cat, relation, o_cat)
            if gt_s and gt_o:
                candidates.append(Query(s_cat, relation, o_cat, gt_s, gt_o))

    if len(candidates) <= max_queries:
        return candidates
    if rng is None:
        rng = np.random.default_rng(scene.scene_id)
    chosen = np.sort(rng.choice(len(candidates), size=max_queries, replace=False))
    return [candidates[i] for i in chosen]


def _sample_categories(rng: np.random.Generator, n: int, ambiguous: bool) -> List[int]:
    if not ambiguous:
        return [int(c) for c in rng.choice(N_CATEGORIES, size=n, replace=False)]
    distinct = [int(c) for c in rng.choice(N_CATEGORIES, size=n - 1, replace=False)]
    duplicate = distinct[int(rng.integers(n - 1))]
    cats = distinct + [duplicate]
    return [cats[i] for i in rng.permutation(n)]


def _fit(start: float, side: float) -> float:
    """start + side <= 1 이 부동소수점에서도 성립하도록"""
    while start + side > 1.0:
        start = float(np.nextafter(start, 0.0))
    return start


def generate_scene(seed: int, config: SceneConfig, scene_id: Optional[int] = None) -> Scene:
    """
    시드에 대해 결정적인 장면 생성

    Args:
        seed: 난수 시드 (데이터셋에서는 기본 시드 + scene_id)
        config: 장면 설정
        scene_id: 장면 번호 (기본값: seed)
    """
    if config.min_entities < 2 or config.min_entities > config.max_entities:
        raise SceneGenerationError(
            f"엔티티 수 범위가 잘못되었습니다: [{config.min_entities}, {config.max_entities}]")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(config.min_entities, config.max_entities + 1))
    ambiguous = bool(rng.random() < config.ambiguity_rate)
    cats = _sample_categories(rng, n, ambiguous)

    entities: List[Entity] = []
    centers: List[Tuple[float, float]] = []
    for entity_id, cat in enumerate(cats):
        shape, color, size = category_parts(cat)
        side = config.small_size if size == "small" else config.large_size
        for _ in range(config.placement_retries):
            x = _fit(float(rng.uniform(0.0, 1.0 - side)), side)
            y = _fit(float(rng.uniform(0.0, 1.0 - side)), side)
            cx, cy = x + 0.5 * side, y + 0.5 * side
            if all(np.hypot(cx - px, cy - py) >= config.min_separation for px, py in centers):
                break
        else:
            raise SceneGenerationError(
                f"seed {seed}: 엔티티 {entity_id}를 {config.placement_retries}회 안에 배치하지 못했습니다 "
                f"(min_separation={config.min_separation})")
        centers.append((cx, cy))
        entities.append(Entity(entity_id, shape, color, size, (x, y, side, side), float(rng.uniform(0.0, 1.0))))

    scene = Scene(seed if scene_id is None else scene_id, config.canvas_px, tuple(entities))
    queries = generate_queries(scene, config.max_queries, rng)
    return Scene(scene.scene_id, scene.canvas_px, scene.entities, tuple(queries))
