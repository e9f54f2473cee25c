import itertools
from dataclasses import replace

import numpy as np
import pytest

from modules.data.scene_generator import (
    N_CATEGORIES,
    RELATIONS,
    Entity,
    Scene,
    category_id,
    category_parts,
    generate_queries,
    generate_scene,
    relation_holds,
)
from modules.utils.config_manager import SceneConfig
from modules.utils.errors import SceneGenerationError


def _entity(entity_id, x, depth=0.5, shape="square", color="red", size="small"):
    return Entity(entity_id, shape, color, size, (x, 0.4, 0.1, 0.1), depth)


def test_category_vocabulary_has_48_entries():
    ids = {category_id(*category_parts(c)) for c in range(N_CATEGORIES)}
    assert ids == set(range(48))


def test_left_of_by_center():
    a, b = _entity(0, 0.15), _entity(1, 0.65)
    assert relation_holds(a, b, "left")
    assert not relation_holds(a, b, "right")
    assert relation_holds(b, a, "right")


def test_equal_centers_hold_no_horizontal_relation():
    a, b = _entity(0, 0.3), _entity(1, 0.3)
    assert not relation_holds(a, b, "left")
    assert not relation_holds(a, b, "right")


def test_depth_relations():
    near, far = _entity(0, 0.1, depth=0.9), _entity(1, 0.6, depth=0.1)
    assert relation_holds(far, near, "behind")
    assert relation_holds(near, far, "front")
    assert not relation_holds(near, far, "behind")


def test_relations_are_antisymmetric_on_random_scenes():
    config = SceneConfig()
    converse = {"left": "right", "right": "left", "front": "behind", "behind": "front"}
    for seed in range(50):
        scene = generate_scene(seed, config)
        for a, b in itertools.permutations(scene.entities, 2):
            for r in RELATIONS:
                assert relation_holds(a, b, r) == relation_holds(b, a, converse[r])


def test_generate_scene_is_deterministic():
    config = SceneConfig()
    assert generate_scene(7, config) == generate_scene(7, config)
    assert generate_scene(7, config) != generate_scene(8, config)


def test_generated_scenes_respect_invariants():
    config = SceneConfig()
    for seed in range(100):
        scene = generate_scene(seed, config)
        assert config.min_entities <= len(scene.entities) <= config.max_entities
        for e in scene.entities:
            x, y, w, h = e.box
            assert w > 0 and h > 0 and x >= 0 and y >= 0 and x + w <= 1 and y + h <= 1
            assert 0.0 <= e.depth <= 1.0
        for a, b in itertools.combinations(scene.entities, 2):
            assert np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= config.min_separation


def test_zero_ambiguity_gives_distinct_categories():
    config = SceneConfig(ambiguity_rate=0.0)
    for seed in range(100):
        assert not generate_scene(seed, config).is_ambiguous


def test_ambiguous_fraction_matches_rate():
    config = SceneConfig()
    n = 10_000
    ambiguous = sum(generate_scene(seed, config).is_ambiguous for seed in range(n))
    assert abs(ambiguous / n - 0.33) < 0.02


def test_infeasible_placement_raises():
    config = SceneConfig(min_entities=8, max_entities=8, min_separation=0.9, placement_retries=20)
    with pytest.raises(SceneGenerationError):
        generate_scene(0, config)


def test_two_entity_query_present():
    a = Entity(0, "square", "red", "large", (0.1, 0.3, 0.2, 0.2), 0.5)
    b = Entity(1, "circle", "blue", "small", (0.6, 0.3, 0.1, 0.1), 0.5)
    queries = generate_queries(Scene(0, 64, (a, b)), max_queries=100)
    found = [q for q in queries if q.subject_category == a.category_id and q.relation == "left"
             and q.object_category == b.category_id]
    assert len(found) == 1
    assert found[0].gt_subject_ids == (0,) and found[0].gt_object_ids == (1,)


def test_identical_subjects_are_all_listed():
    left_1 = Entity(0, "circle", "red", "small", (0.05, 0.2, 0.1, 0.1), 0.5)
    left_2 = Entity(1, "circle", "red", "small", (0.10, 0.6, 0.1, 0.1), 0.5)
    cube = Entity(2, "square", "gray", "large", (0.7, 0.4, 0.16, 0.16), 0.5)
    queries = generate_queries(Scene(0, 64, (left_1, left_2, cube)), max_queries=100)
    query = next(q for q in queries if q.subject_category == left_1.category_id and q.relation == "left"
                 and q.object_category == cube.category_id)
    assert query.gt_subject_ids == (0, 1)
    assert query.gt_object_ids == (2,)


def test_same_category_query_excludes_self_pairs():
    left = Entity(0, "circle", "red", "small", (0.05, 0.2, 0.1, 0.1), 0.3)
    right = Entity(1, "circle", "red", "small", (0.60, 0.6, 0.1, 0.1), 0.7)
    queries = generate_queries(Scene(0, 64, (left, right)), max_queries=100)
    same = {q.relation: q for q in queries if q.subject_category == q.object_category == left.category_id}
    assert set(same) == {"left", "right", "front", "behind"}
    assert (same["left"].gt_subject_ids, same["left"].gt_object_ids) == ((0,), (1,))
    assert (same["front"].gt_subject_ids, same["front"].gt_object_ids) == ((1,), (0,))


def test_ambiguous_scenes_get_same_category_queries():
    config = SceneConfig(ambiguity_rate=1.0, max_queries=1000)
    scenes = [generate_scene(seed, config) for seed in range(20)]
    same = [(s, q) for s in scenes for q in s.queries if q.subject_category == q.object_category]
    assert same
    for scene, query in same:
        assert (query.gt_subject_ids, query.gt_object_ids) == _oracle_gt(scene, query)


def _oracle_gt(scene, query):
    subjects, objects = set(), set()
    for s in scene.entities:
        for o in scene.entities:
            if (s.id != o.id and s.category_id == query.subject_category
                    and o.category_id == query.object_category and relation_holds(s, o, query.relation)):
                subjects.add(s.id)
                objects.add(o.id)
    return tuple(sorted(subjects)), tuple(sorted(objects))


def test_query_gt_matches_brute_force_satisfiers():
    config = SceneConfig(max_queries=1000)
    for seed in range(100):
        scene = generate_scene(seed, config)
        for query in scene.queries:
            assert (query.gt_subject_ids, query.gt_object_ids) == _oracle_gt(scene, query)


def test_query_count_is_capped():
    config = SceneConfig(max_queries=3)
    for seed in range(30):
        assert len(generate_scene(seed, config).queries) <= 3


def test_single_entity_scene_has_no_queries():
    scene = Scene(0, 64, (_entity(0, 0.2),))
    assert generate_queries(scene, 8) == []


def test_scene_id_override():
    scene = generate_scene(105, SceneConfig(), scene_id=5)
    assert scene.scene_id == 5
    assert replace(scene, scene_id=105) == generate_scene(105, SceneConfig())
