"""
장면 래스터화 (painter's order) 및 바이너리 PPM(P6) 입출력
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from modules.data.scene_generator import BACKGROUND_RGB, PALETTE, Entity, Scene

logger = logging.getLogger(__name__)


def _shape_mask(entity: Entity, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """픽셀 중심 좌표(px, py)가 도형 안에 있는지"""
    x, y, w, h = entity.box
    inside = (px >= x) & (px < x + w) & (py >= y) & (py < y + h)
    if entity.shape == "square":
        return inside
    cx, cy = x + 0.5 * w, y + 0.5 * h
    if entity.shape == "circle":
        return ((px - cx) / (0.5 * w)) ** 2 + ((py - cy) / (0.5 * h)) ** 2 <= 1.0
    # 삼각형: 윗변 중앙 꼭짓점, 아랫변이 박스 바닥
    return inside & (np.abs(px - cx) <= 0.5 * w * (py - y) / h)


SHADE_FLOOR = 0.55


def shade_color(color: str, depth: float) -> Tuple[int, int, int]:
    """깊이 음영: depth 1(가장 가까움)이면 팔레트 색 그대로, 멀수록 어두워짐"""
    factor = SHADE_FLOOR + (1.0 - SHADE_FLOOR) * float(depth)
    return tuple(int(round(c * factor)) for c in PALETTE[color])


def rasterize(scene: Scene) -> np.ndarray:
    """(canvas_px, canvas_px, 3) uint8 이미지. 깊이가 작은(먼) 엔티티부터 그립니다."""
    size = scene.canvas_px
    image = np.empty((size, size, 3), dtype=np.uint8)
    image[:, :] = BACKGROUND_RGB
    centers = (np.arange(size) + 0.5) / size
    px, py = np.meshgrid(centers, centers)
    for entity in sorted(scene.entities, key=lambda e: (e.depth, e.id)):
        image[_shape_mask(entity, px, py)] = shade_color(entity.color, entity.depth)
    return image


def write_ppm(path: Union[str, Path], image: np.ndarray) -> Path:
    path = Path(path)
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"RGB 이미지가 아닙니다: {image.shape}")
    height, width = image.shape[:2]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + image.tobytes())
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    offset = 0
    while len(tokens) < 4:
        while offset < len(data) and data[offset:offset + 1].isspace():
            offset += 1
        if data[offset:offset + 1] == b"#":
            while offset < len(data) and data[offset:offset + 1] != b"\n":
                offset += 1
            continue
        start = offset
        while offset < len(data) and not data[offset:offset + 1].isspace():
            offset += 1
        tokens.append(data[start:offset])
    offset += 1
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError(f"지원하지 않는 PPM 헤더: {tokens}")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[offset:offset + width * height * 3], dtype=np.uint8)
    if pixels.size != width * height * 3:
        raise ValueError(f"PPM 픽셀 데이터가 잘렸습니다: {path}")
    return pixels.reshape(height, width, 3).copy()
