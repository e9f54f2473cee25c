"""
JSON-lines 데이터셋 저장/로드 (한 줄에 장면 하나)
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

from modules.data.scene_generator import Scene
from modules.data.validators.scene_validator import SceneValidator
from modules.utils.errors import DatasetFormatError

logger = logging.getLogger(__name__)


def scene_to_record(scene: Scene) -> Dict[str, Any]:
    return {
        "scene_id": scene.scene_id,
        "canvas_px": scene.canvas_px,
        "entities": [
            {"id": e.id, "shape": e.shape, "color": e.color, "size": e.size,
             "box": list(e.box), "depth": e.depth}
            for e in scene.entities
        ],
        "queries": [
            {"s": q.subject_category, "r": q.relation, "o": q.object_category,
             "gt_s": list(q.gt_subject_ids), "gt_o": list(q.gt_object_ids)}
            for q in scene.queries
        ],
    }


def save_dataset(path: Union[str, Path], scenes: Iterable[Scene]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for scene in scenes:
            f.write(json.dumps(scene_to_record(scene), ensure_ascii=False, separators=(",", ":")))
            f.write("\n")
            count += 1
    logger.info(f"💾 데이터셋 저장: {path} ({count}개 장면)")
    return path


def load_dataset(path: Union[str, Path]) -> List[Scene]:
    """
    데이터셋 로드. 잘못된 줄은 줄 번호를 포함한 DatasetFormatError로 거부합니다.
    """
    path = Path(path)
    validator = SceneValidator()
    scenes: List[Scene] = []
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetFormatError(f"UTF-8 디코딩 실패 (바이트 {e.start})", line_number) from e
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"JSON 파싱 실패 ({e.msg})", line_number) from e
            scenes.append(validator.validate_record(record, line_number))
    logger.info(f"📂 데이터셋 로드: {path} ({len(scenes)}개 장면)")
    return scenes
