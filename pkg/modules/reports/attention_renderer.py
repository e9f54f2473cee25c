"""
평가 시각화: GT vs 예측 주의 맵, 보정 박스 오버레이, 주의 가중치 상위 박스 목록
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from modules.core.dsg_model import ImagePrediction
from modules.data.collectors.sample_collector import Sample
from modules.data.rasterizer import write_ppm
from modules.reports.evaluator import boxes_to_map, gt_role_boxes, write_json

CELL_PX = 8
OVERLAY_SCALE = 4
GAP_PX = 2
GAP_RGB = (128, 128, 128)
SUBJECT_RGB = (255, 255, 255)
OBJECT_RGB = (0, 0, 0)


def map_to_image(grid: np.ndarray, cell_px: int = CELL_PX) -> np.ndarray:
    """bool 맵 → 흑백 RGB (켜진 셀 흰색)"""
    pixels = np.kron(np.asarray(grid, dtype=np.uint8), np.ones((cell_px, cell_px), dtype=np.uint8)) * 255
    return np.repeat(pixels[:, :, None], 3, axis=2)


def _hstack(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    gap = np.empty((left.shape[0], GAP_PX, 3), dtype=np.uint8)
    gap[:] = GAP_RGB
    return np.concatenate([left, gap, right], axis=1)


def _vstack(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    gap = np.empty((GAP_PX, top.shape[1], 3), dtype=np.uint8)
    gap[:] = GAP_RGB
    return np.concatenate([top, gap, bottom], axis=0)


def side_by_side(gt_subject, pred_subject, gt_object, pred_object) -> np.ndarray:
    """윗줄 subject (GT | 예측), 아랫줄 object (GT | 예측)"""
    top = _hstack(map_to_image(gt_subject), map_to_image(pred_subject))
    bottom = _hstack(map_to_image(gt_object), map_to_image(pred_object))
    return _vstack(top, bottom)


def draw_box_outline(image: np.ndarray, box: Sequence[float], color) -> None:
    """정규화 박스 테두리를 그립니다 (제자리)"""
    height, width = image.shape[:2]
    x, y, w, h = box
    x0 = int(np.clip(np.floor(x * width), 0, width - 1))
    y0 = int(np.clip(np.floor(y * height), 0, height - 1))
    x1 = int(np.clip(np.ceil((x + w) * width) - 1, x0, width - 1))
    y1 = int(np.clip(np.ceil((y + h) * height) - 1, y0, height - 1))
    image[y0, x0:x1 + 1] = color
    image[y1, x0:x1 + 1] = color
    image[y0:y1 + 1, x0] = color
    image[y0:y1 + 1, x1] = color


def overlay_boxes(image: np.ndarray, subject_boxes, object_boxes, scale: int = OVERLAY_SCALE) -> np.ndarray:
    canvas = np.kron(image, np.ones((scale, scale, 1), dtype=np.uint8))
    for box in np.asarray(object_boxes).reshape(-1, 4):
        draw_box_outline(canvas, box, OBJECT_RGB)
    for box in np.asarray(subject_boxes).reshape(-1, 4):
        draw_box_outline(canvas, box, SUBJECT_RGB)
    return canvas


def top_attention(prediction: ImagePrediction, count: int = 3) -> List[Dict[str, float]]:
    """바깥 주의 가중치가 큰 제안 박스 (attention 모드에서만)"""
    if prediction.outer_weights is None:
        return []
    weights = np.asarray(prediction.outer_weights).reshape(-1)
    order = np.argsort(-weights, kind="stable")[:count]
    return [{"box": int(i), "weight": float(weights[i]),
             "coords": prediction.refined_boxes[i].tolist()} for i in order]


class AttentionRenderer:
    """평가 결과 렌더러"""

    def __init__(self, output_dir: Union[str, Path], attention_l: int = 14, render_limit: int = 20):
        self.output_dir = Path(output_dir)
        self.attention_l = attention_l
        self.render_limit = render_limit
        self.logger = logging.getLogger('AttentionRenderer')

    def render(self, samples: Sequence[Sample], predictions: Sequence[ImagePrediction]) -> Optional[Path]:
        """
        질의별 주의 맵 비교 PPM과 오버레이 PPM을 render_limit 개까지 저장

        Returns:
            주의 가중치 요약 JSON 경로 (attention 모드가 아니면 None)
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        L = self.attention_l
        rendered = 0
        attention_summary = []
        for sample, prediction in zip(samples, predictions):
            scene = sample.scene
            top = top_attention(prediction)
            if top:
                attention_summary.append({"scene_id": scene.scene_id, "top": top})
            for k, (query, qp) in enumerate(zip(scene.queries, prediction.queries)):
                if rendered >= self.render_limit:
                    break
                stem = f"scene{scene.scene_id:05d}_q{k}"
                maps = side_by_side(boxes_to_map(gt_role_boxes(scene, query.gt_subject_ids), L),
                                    boxes_to_map(qp.subject_boxes, L),
                                    boxes_to_map(gt_role_boxes(scene, query.gt_object_ids), L),
                                    boxes_to_map(qp.object_boxes, L))
                write_ppm(self.output_dir / f"{stem}_maps.ppm", maps)
                write_ppm(self.output_dir / f"{stem}_boxes.ppm",
                          overlay_boxes(sample.image, qp.subject_boxes, qp.object_boxes))
                rendered += 1
        self.logger.info(f"🖼️ 렌더링 저장: {self.output_dir} ({rendered}개 질의)")
        if attention_summary:
            return write_json(self.output_dir / "attention_top.json", attention_summary)
        return None
