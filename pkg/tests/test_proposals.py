import numpy as np
import pytest

from modules.data.collectors.sample_collector import SampleCollector, collect_scenes
from modules.data.processors.proposal_simulator import (
    BACKGROUND_SOURCE,
    DESCRIPTOR_WIDTH,
    HIST_BINS,
    ProposalSimulator,
    describe,
    ordered_pairs,
    propose,
)
from modules.data.rasterizer import rasterize
from modules.data.scene_generator import Entity, Scene, generate_scene
from modules.utils.box_utils import clip_box, iou, iou_matrix, union_box
from modules.utils.config_manager import ProposalConfig, SceneConfig
from modules.utils.errors import ConfigError, DegenerateBoxError, DsgError


# ----------------------------------------------------------------------
# 박스 유틸
# ----------------------------------------------------------------------
def test_iou_worked_examples():
    assert iou((0, 0, 1, 1), (0, 0, 1, 1)) == 1.0
    assert iou((0, 0, 1, 1), (2, 2, 1, 1)) == 0.0
    assert iou((0, 0, 2, 2), (1, 1, 2, 2)) == pytest.approx(1 / 7)


def test_degenerate_box_has_zero_iou():
    assert iou((0.1, 0.1, 0.0, 0.2), (0.1, 0.1, 0.0, 0.2)) == 0.0


def test_union_example():
    np.testing.assert_allclose(union_box((0, 0, 0.1, 0.1), (0.2, 0.2, 0.1, 0.1)), (0, 0, 0.3, 0.3))


def test_box_properties_on_random_boxes():
    rng = np.random.default_rng(0)
    for _ in range(500):
        a = np.concatenate([rng.uniform(0, 0.7, 2), rng.uniform(0.01, 0.3, 2)])
        b = np.concatenate([rng.uniform(0, 0.7, 2), rng.uniform(0.01, 0.3, 2)])
        u = union_box(a, b)
        np.testing.assert_array_equal(u, union_box(b, a))
        np.testing.assert_array_equal(union_box(a, a), a)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == pytest.approx(1.0)
        assert iou(a, u) >= iou(a, b) - 1e-12


def test_clip_box_keeps_inside_canvas():
    x, y, w, h = clip_box((0.9, -0.1, 0.3, 0.4))
    assert x == 0.9 and y == 0.0
    assert x + w <= 1.0 and h == pytest.approx(0.3)


def test_iou_matrix_equals_elementwise_iou():
    rng = np.random.default_rng(1)
    a = np.concatenate([rng.uniform(0, 0.8, (30, 2)), rng.uniform(0.0, 0.4, (30, 2))], axis=1)
    b = np.concatenate([rng.uniform(0, 0.8, (20, 2)), rng.uniform(0.0, 0.4, (20, 2))], axis=1)
    a[:3, 2] = 0.0
    b[:2, 3] = 0.0
    b[5] = a[7]
    b[6] = (a[8, 0] + a[8, 2], a[8, 1], 0.1, 0.1)
    matrix = iou_matrix(a, b)
    assert matrix.shape == (30, 20)
    for i in range(30):
        for j in range(20):
            assert matrix[i, j] == iou(a[i], b[j])
    assert iou_matrix(a, np.zeros((0, 4))).shape == (30, 0)



# ----------------------------------------------------------------------
# 제안 박스
# ----------------------------------------------------------------------
def test_zero_jitter_reproduces_gt_boxes_exactly():
    config = ProposalConfig(jitter=0.0)
    for seed in range(20):
        scene = generate_scene(seed, SceneConfig())
        box_set = propose(scene, rasterize(scene), [0, seed], config)
        n = len(scene.entities)
        np.testing.assert_array_equal(box_set.boxes[:n], scene.boxes())
        assert list(box_set.source_entity[:n]) == [e.id for e in scene.entities]


def test_propose_is_deterministic():
    scene = generate_scene(5, SceneConfig())
    image = rasterize(scene)
    a = propose(scene, image, [0, 5], ProposalConfig())
    b = propose(scene, image, [0, 5], ProposalConfig())
    for field in ("boxes", "descriptors", "pair_index", "union_boxes", "pair_descriptors"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_background_boxes_are_true_negatives():
    config = ProposalConfig()
    for seed in range(50):
        scene = generate_scene(seed, SceneConfig())
        box_set = propose(scene, rasterize(scene), [0, seed], config)
        assert box_set.n_boxes <= config.max_proposals
        for box, source in zip(box_set.boxes, box_set.source_entity):
            if source == BACKGROUND_SOURCE:
                assert all(iou(box, gt) <= config.bg_max_iou for gt in scene.boxes())


def test_pairs_and_unions_are_complete():
    scene = generate_scene(9, SceneConfig())
    box_set = propose(scene, rasterize(scene), [0, 9], ProposalConfig())
    n = box_set.n_boxes
    assert box_set.n_pairs == n * (n - 1)
    np.testing.assert_array_equal(box_set.pair_index, ordered_pairs(n))
    for (i, j), u in zip(box_set.pair_index, box_set.union_boxes):
        np.testing.assert_array_equal(u, union_box(box_set.boxes[i], box_set.boxes[j]))
    assert box_set.descriptors.shape == (n, DESCRIPTOR_WIDTH)
    assert box_set.pair_descriptors.shape == (n * (n - 1), DESCRIPTOR_WIDTH)


def test_too_many_entities_is_config_error():
    scene = generate_scene(0, SceneConfig(min_entities=4, max_entities=4))
    simulator = ProposalSimulator(ProposalConfig(max_proposals=3))
    with pytest.raises(ConfigError) as info:
        simulator.propose(scene, rasterize(scene), [0, 0])
    assert isinstance(info.value, DsgError)


def test_pair_descriptor_offsets_are_signed_differences():
    scene = generate_scene(9, SceneConfig())
    box_set = propose(scene, rasterize(scene), [0, 9], ProposalConfig())
    for k, (i, j) in enumerate(box_set.pair_index):
        bi, bj = box_set.boxes[i], box_set.boxes[j]
        offset = box_set.pair_descriptors[k, 24:28]
        assert offset[0] == pytest.approx((bi[0] + bi[2] / 2) - (bj[0] + bj[2] / 2))
        assert offset[2] == pytest.approx(bi[2] - bj[2])
        assert box_set.pair_descriptors[k, 29] == pytest.approx(
            box_set.descriptors[i, 29] - box_set.descriptors[j, 29])



@pytest.mark.slow
def test_every_gt_box_has_a_good_proposal_at_default_jitter():
    simulator = ProposalSimulator(ProposalConfig())
    worst = 1.0
    for seed in range(10_000):
        scene = generate_scene(seed, SceneConfig())
        image = np.zeros((scene.canvas_px, scene.canvas_px, 3), dtype=np.uint8)
        box_set = simulator.propose(scene, image, [0, seed])
        for entity in scene.entities:
            worst = min(worst, max(iou(entity.box, b) for b in box_set.boxes))
    assert worst >= 0.5


def test_solid_red_crop_fills_top_red_bin():
    scene = Scene(0, 16, (Entity(0, "square", "red", "large", (0.0, 0.0, 1.0, 1.0), 1.0),))
    descriptor = describe(rasterize(scene), (0.25, 0.25, 0.5, 0.5))
    red = descriptor[:HIST_BINS]
    assert red[HIST_BINS - 1] == 1.0
    for channel in range(3):
        assert descriptor[channel * HIST_BINS:(channel + 1) * HIST_BINS].sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(descriptor[24:28], [0.25, 0.25, 0.5, 0.5])
    assert descriptor[28] == 0.25


def test_describe_is_pure():
    scene = generate_scene(2, SceneConfig())
    image = rasterize(scene)
    box = scene.entities[0].box
    np.testing.assert_array_equal(describe(image, box), describe(image, box))


def test_describe_rejects_box_outside_canvas():
    image = np.zeros((8, 8, 3), dtype=np.uint8)
    with pytest.raises(DegenerateBoxError):
        describe(image, (1.2, 0.2, 0.1, 0.1))
    with pytest.raises(DegenerateBoxError):
        describe(image, (0.2, 0.2, 0.0, 0.1))


def test_permuted_box_set_reorders_pairs():
    scene = generate_scene(11, SceneConfig())
    box_set = propose(scene, rasterize(scene), [0, 11], ProposalConfig())
    order = np.random.default_rng(0).permutation(box_set.n_boxes)
    permuted = box_set.permuted(order)
    np.testing.assert_array_equal(permuted.boxes, box_set.boxes[order])
    for (i, j), u in zip(permuted.pair_index, permuted.union_boxes):
        np.testing.assert_array_equal(u, union_box(permuted.boxes[i], permuted.boxes[j]))


# ----------------------------------------------------------------------
# 샘플 수집
# ----------------------------------------------------------------------
def test_parallel_collection_matches_serial(scene_config):
    scenes = collect_scenes(range(8), 3, scene_config, workers=3)
    assert scenes == collect_scenes(range(8), 3, scene_config)
    progress = []
    parallel = SampleCollector(ProposalConfig(), seed=3, workers=3).collect(
        scenes, progress_callback=lambda msg, pct: progress.append(pct))
    serial = SampleCollector(ProposalConfig(), seed=3).collect(scenes)
    assert [s.scene_id for s in parallel] == list(range(8))
    for a, b in zip(parallel, serial):
        np.testing.assert_array_equal(a.box_set.boxes, b.box_set.boxes)
        assert [list(x.labels) for x in a.assignments] == [list(x.labels) for x in b.assignments]
    assert progress[-1] == 100.0


def test_samples_carry_assignments_per_query(scene_config):
    scenes = collect_scenes([0, 1], 0, scene_config)
    samples = SampleCollector(ProposalConfig(), seed=0).collect(scenes)
    assert len(samples[0].assignments) == len(scenes[0].queries)
    assert samples[0].matches.max_iou.shape == (samples[0].box_set.n_boxes,)
