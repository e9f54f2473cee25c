"""
학습/평가용 샘플 수집기
장면 → 래스터 이미지 → 제안 박스 + 디스크립터 → 질의별 역할 할당을 미리 계산합니다.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from modules.core.role_assignment import RoleAssignment, assign_roles, match_boxes
from modules.data.processors.proposal_simulator import BoxSet, ProposalSimulator
from modules.data.rasterizer import rasterize
from modules.data.scene_generator import Scene, generate_scene
from modules.utils.config_manager import ProposalConfig, SceneConfig

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, float], None]


@dataclass
class Sample:
    """이미지 하나 = 학습 배치 하나"""
    scene: Scene
    image: np.ndarray
    box_set: BoxSet
    assignments: List[RoleAssignment]
    matches: RoleAssignment

    @property
    def scene_id(self) -> int:
        return self.scene.scene_id


def build_sample(scene: Scene, image: np.ndarray, box_set: BoxSet) -> Sample:
    """주어진 제안 박스로 샘플 구성 (역할 할당 포함)"""
    assignments = [assign_roles(box_set.boxes, q, scene) for q in scene.queries]
    return Sample(scene, image, box_set, assignments, match_boxes(box_set.boxes, scene))


def collect_scenes(scene_ids: Sequence[int], seed: int, config: SceneConfig,
                   workers: int = 1) -> List[Scene]:
    """scene_id 마다 seed + scene_id 로 장면 생성 (결과는 scene_id 순서)"""
    def _generate(scene_id: int) -> Scene:
        return generate_scene(seed + scene_id, config, scene_id=scene_id)

    if workers <= 1:
        return [_generate(i) for i in scene_ids]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_generate, scene_ids))


class SampleCollector:
    """장면 목록을 샘플로 변환하는 수집기 (병렬 처리, 순서 보존)"""

    def __init__(self, proposal_config: ProposalConfig, seed: int = 0, workers: int = 1):
        self.simulator = ProposalSimulator(proposal_config)
        self.seed = seed
        self.workers = max(1, workers)
        self.logger = logging.getLogger('SampleCollector')

    def build(self, scene: Scene) -> Sample:
        image = rasterize(scene)
        box_set = self.simulator.propose(scene, image, [self.seed, scene.scene_id])
        return build_sample(scene, image, box_set)

    def collect(self, scenes: Sequence[Scene],
                progress_callback: Optional[ProgressCallback] = None) -> List[Sample]:
        """
        샘플 수집

        Args:
            scenes: 대상 장면 (출력 순서는 입력 순서와 같음)
            progress_callback: (메시지, 진행률%) 콜백

        Returns:
            List[Sample]
        """
        total = len(scenes)
        self.logger.info(f"🚀 샘플 수집 시작: {total}개 장면 (workers={self.workers})")
        if self.workers == 1:
            samples = self._drain(map(self.build, scenes), total, progress_callback)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                samples = self._drain(pool.map(self.build, scenes), total, progress_callback)
        n_queries = sum(len(s.scene.queries) for s in samples)
        self.logger.info(f"✅ 샘플 수집 완료: {len(samples)}개 이미지, {n_queries}개 질의")
        return samples

    @staticmethod
    def _drain(results, total: int, progress_callback: Optional[ProgressCallback]) -> List[Sample]:
        samples = []
        for done, sample in enumerate(results, start=1):
            samples.append(sample)
            if progress_callback:
                progress_callback(f"scene {sample.scene_id} 처리", done / total * 100)
        return samples
