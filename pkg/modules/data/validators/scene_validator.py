"""
JSON-lines 장면 레코드 검증기
스키마를 벗어난 줄은 줄 번호와 함께 DatasetFormatError로 거부합니다.
"""

import logging
import math
from typing import Any, Dict, List, Optional

from modules.data.scene_generator import (
    COLORS,
    N_CATEGORIES,
    RELATIONS,
    SHAPES,
    SIZES,
    Entity,
    Query,
    Scene,
)
from modules.utils.errors import DatasetFormatError

BOX_TOLERANCE = 1e-9


class SceneValidator:
    """장면 레코드 검증 클래스"""

    def __init__(self):
        self.logger = logging.getLogger('SceneValidator')

    def _fail(self, message: str, line_number: Optional[int]) -> None:
        raise DatasetFormatError(message, line_number)

    def _require(self, record: Dict[str, Any], key: str, kind, line_number: Optional[int]) -> Any:
        if key not in record:
            self._fail(f"필수 필드 '{key}' 없음", line_number)
        value = record[key]
        if isinstance(value, bool) or not isinstance(value, kind):
            self._fail(f"'{key}' 타입 오류: {type(value).__name__}", line_number)
        return value

    def _number(self, value: Any, what: str, line_number: Optional[int]) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self._fail(f"{what}: 유한한 숫자가 아닙니다 ({value!r})", line_number)
        return float(value)

    def validate_entity(self, raw: Any, line_number: Optional[int] = None) -> Entity:
        if not isinstance(raw, dict):
            self._fail("엔티티가 객체가 아닙니다", line_number)
        entity_id = self._require(raw, "id", int, line_number)
        shape = self._require(raw, "shape", str, line_number)
        color = self._require(raw, "color", str, line_number)
        size = self._require(raw, "size", str, line_number)
        if shape not in SHAPES:
            self._fail(f"엔티티 {entity_id}: 알 수 없는 모양 '{shape}'", line_number)
        if color not in COLORS:
            self._fail(f"엔티티 {entity_id}: 알 수 없는 색 '{color}'", line_number)
        if size not in SIZES:
            self._fail(f"엔티티 {entity_id}: 알 수 없는 크기 '{size}'", line_number)

        box_raw = self._require(raw, "box", list, line_number)
        if len(box_raw) != 4:
            self._fail(f"엔티티 {entity_id}: box는 [x,y,w,h] 4개 값이어야 합니다", line_number)
        x, y, w, h = (self._number(v, f"엔티티 {entity_id} box", line_number) for v in box_raw)
        if w <= 0 or h <= 0:
            self._fail(f"엔티티 {entity_id}: box 폭/높이는 양수여야 합니다 (w={w}, h={h})", line_number)
        if x < 0 or y < 0 or x + w > 1 + BOX_TOLERANCE or y + h > 1 + BOX_TOLERANCE:
            self._fail(f"엔티티 {entity_id}: box가 캔버스를 벗어났습니다 {box_raw}", line_number)

        depth = self._number(raw.get("depth"), f"엔티티 {entity_id} depth", line_number)
        if not 0.0 <= depth <= 1.0:
            self._fail(f"엔티티 {entity_id}: depth {depth} 가 [0,1] 밖입니다", line_number)
        return Entity(entity_id, shape, color, size, (x, y, w, h), depth)

    def validate_query(self, raw: Any, entity_ids: set, line_number: Optional[int] = None) -> Query:
        if not isinstance(raw, dict):
            self._fail("질의가 객체가 아닙니다", line_number)
        s_cat = self._require(raw, "s", int, line_number)
        o_cat = self._require(raw, "o", int, line_number)
        relation = self._require(raw, "r", str, line_number)
        for cat in (s_cat, o_cat):
            if not 0 <= cat < N_CATEGORIES:
                self._fail(f"카테고리 {cat} 가 [0,{N_CATEGORIES}) 밖입니다", line_number)
        if relation not in RELATIONS:
            self._fail(f"알 수 없는 관계 '{relation}'", line_number)
        gt_ids: List[tuple] = []
        for key in ("gt_s", "gt_o"):
            ids = self._require(raw, key, list, line_number)
            if not ids:
                self._fail(f"'{key}' 가 비어 있습니다", line_number)
            for entity_id in ids:
                if isinstance(entity_id, bool) or not isinstance(entity_id, int) or entity_id not in entity_ids:
                    self._fail(f"'{key}' 에 없는 엔티티 id {entity_id!r}", line_number)
            gt_ids.append(tuple(ids))
        return Query(s_cat, relation, o_cat, gt_ids[0], gt_ids[1])

    def validate_record(self, record: Any, line_number: Optional[int] = None) -> Scene:
        """파싱된 JSON 객체 하나를 Scene으로 변환"""
        if not isinstance(record, dict):
            self._fail("장면 레코드가 JSON 객체가 아닙니다", line_number)
        scene_id = self._require(record, "scene_id", int, line_number)
        canvas_px = self._require(record, "canvas_px", int, line_number)
        if canvas_px < 1:
            self._fail(f"canvas_px 는 양수여야 합니다: {canvas_px}", line_number)
        entities = tuple(self.validate_entity(e, line_number)
                         for e in self._require(record, "entities", list, line_number))
        entity_ids = {e.id for e in entities}
        if len(entity_ids) != len(entities):
            self._fail(f"scene {scene_id}: 엔티티 id 중복", line_number)
        queries = tuple(self.validate_query(q, entity_ids, line_number)
                        for q in self._require(record, "queries", list, line_number))
        return Scene(scene_id, canvas_px, entities, queries)
