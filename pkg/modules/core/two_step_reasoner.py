"""
2단계 추론: 디코딩된 장면 그래프에서 질의 ⟨s, r, o⟩ 에 해당하는 노드를 찾습니다.
"""

from typing import List, Tuple

import numpy as np

from modules.core.heads import DecodedSceneGraph
from modules.data.scene_generator import Query
from modules.utils.errors import EmptyInputError


def exact_matches(decoded: DecodedSceneGraph, query: Query) -> Tuple[List[int], List[int]]:
    """argmax 라벨 기준으로 ⟨s, r, o⟩ 와 정확히 일치하는 삼중항의 노드들"""
    labels = decoded.node_labels
    relation = np.argmax(decoded.relation_probs, axis=1) if decoded.relation_probs.shape[0] else []
    subjects, objects = set(), set()
    for k, (i, j) in enumerate(decoded.pair_index):
        if (labels[i] == query.subject_category and labels[j] == query.object_category
                and relation[k] == query.relation_index):
            subjects.add(int(i))
            objects.add(int(j))
    return sorted(subjects), sorted(objects)


def triplet_scores(decoded: DecodedSceneGraph, query: Query) -> np.ndarray:
    """순서쌍별 P(s|i) · P(r|i,j) · P(o|j)"""
    first, second = decoded.pair_index[:, 0], decoded.pair_index[:, 1]
    return (decoded.node_probs[first, query.subject_category]
            * decoded.relation_probs[:, query.relation_index]
            * decoded.node_probs[second, query.object_category])


def two_step_reason(decoded: DecodedSceneGraph, query: Query) -> Tuple[List[int], List[int]]:
    if decoded.n_nodes < 2:
        raise EmptyInputError(f"2단계 추론에는 노드가 2개 이상 필요합니다 (B={decoded.n_nodes})")
    subjects, objects = exact_matches(decoded, query)
    if subjects:
        return subjects, objects
    # pair_index 는 (i, j) 사전식 순서이므로 첫 번째 최댓값이 동률 규칙과 같음
    best = int(np.argmax(triplet_scores(decoded, query)))
    i, j = decoded.pair_index[best]
    return [int(i)], [int(j)]
