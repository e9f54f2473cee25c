"""
공용 테스트 픽스처
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 프로젝트 루트 디렉토리를 Python 경로에 추가
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from modules.core.autodiff import ComputationGraph  # noqa: E402
from modules.data.collectors.sample_collector import SampleCollector, collect_scenes  # noqa: E402
from modules.data.scene_generator import Entity, Query, Scene  # noqa: E402
from modules.utils.config_manager import ConfigManager, ModelConfig, ProposalConfig, SceneConfig  # noqa: E402

SMALL_CONFIG_TEXT = """
seed=0
n_train=6
n_val=2
n_test=3
max_entities=4
max_queries=4
embed_hidden=8
feature_width=6
gpi_hidden=8
gpi_value=5
gpi_summary=5
dsg_width=6
head_hidden=8
query_dim=3
epochs=2
render_limit=3
"""


@pytest.fixture
def small_config() -> ConfigManager:
    return ConfigManager.from_text(SMALL_CONFIG_TEXT)


@pytest.fixture
def small_model_config() -> ModelConfig:
    return ModelConfig(embed_hidden=8, feature_width=6, gpi_hidden=8, gpi_value=5, gpi_summary=5,
                       dsg_width=6, head_hidden=8, query_dim=3)


@pytest.fixture
def scene_config() -> SceneConfig:
    return SceneConfig(max_entities=4, max_queries=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def two_entity_scene() -> Scene:
    """빨간 정사각형(왼쪽, 가까움) + 파란 원(오른쪽, 멂)"""
    a = Entity(0, "square", "red", "large", (0.1, 0.3, 0.2, 0.2), 0.8)
    b = Entity(1, "circle", "blue", "small", (0.6, 0.3, 0.1, 0.1), 0.2)
    queries = (
        Query(a.category_id, "left", b.category_id, (0,), (1,)),
        Query(b.category_id, "behind", a.category_id, (1,), (0,)),
    )
    return Scene(0, 64, (a, b), queries)


@pytest.fixture
def tiny_samples(scene_config):
    scenes = collect_scenes(range(6), 0, scene_config)
    return SampleCollector(ProposalConfig(), seed=0).collect(scenes)


@pytest.fixture
def zero_jitter_samples(scene_config):
    scenes = collect_scenes(range(4), 100, scene_config)
    return SampleCollector(ProposalConfig(jitter=0.0, n_bg=2), seed=0).collect(scenes)


def numeric_gradient(f, array: np.ndarray, index, eps: float = 1e-6) -> float:
    """중앙 차분 (array[index] 를 제자리에서 흔든 뒤 복원)"""
    original = array[index]
    array[index] = original + eps
    plus = f()
    array[index] = original - eps
    minus = f()
    array[index] = original
    return (plus - minus) / (2 * eps)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)


def param_gradient_errors(params, loss_fn, rng, per_tensor: int = 3, names=None, eps: float = 1e-6):
    """
    loss_fn(graph) -> 스칼라 Tensor. 파라미터마다 임의 원소 몇 개의 해석적/수치 기울기 상대오차 목록.
    """
    graph = ComputationGraph(params)
    grads = graph.backward(loss_fn(graph)).for_parameters(params)

    def value() -> float:
        return loss_fn(ComputationGraph(params, track=False)).item()

    errors = []
    for name in names or list(params):
        array = params[name]
        for _ in range(per_tensor):
            index = tuple(int(rng.integers(d)) for d in array.shape)
            numeric = numeric_gradient(value, array, index, eps)
            errors.append(relative_error(float(grads[name][index]), numeric))
    return errors


def check_param_gradients(params, loss_fn, rng, per_tensor: int = 3, names=None, eps: float = 1e-6) -> float:
    """최대 상대오차"""
    return max(param_gradient_errors(params, loss_fn, rng, per_tensor, names, eps))

