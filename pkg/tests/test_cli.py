import json

import pytest

from applications.main import main
from conftest import SMALL_CONFIG_TEXT
from modules.core.dsg_model import QueryPrediction
from modules.data.collectors.sample_collector import SampleCollector
from modules.data.dataset_io import load_dataset
from modules.reports.evaluator import evaluate_rr, gt_role_boxes
from modules.utils.checkpoint_manager import load_checkpoint
from modules.utils.config_manager import ProposalConfig


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CONFIG_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def dataset_dir(tmp_path, small_config_file):
    out = tmp_path / "data"
    assert main(["gen", "--config", str(small_config_file), "--out", str(out), "--quiet"])
    return out


@pytest.fixture
def run_dir(tmp_path, small_config_file, dataset_dir):
    out = tmp_path / "run"
    assert main(["train", "--config", str(small_config_file), "--data", str(dataset_dir),
                 "--out", str(out), "--quiet"])
    return out


def test_gen_writes_disjoint_splits(dataset_dir):
    splits = {name: load_dataset(dataset_dir / f"{name}.jsonl") for name in ("train", "val", "test")}
    assert [len(splits[n]) for n in ("train", "val", "test")] == [6, 2, 3]
    ids = [{s.scene_id for s in scenes} for scenes in splits.values()]
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    assert (dataset_dir / "images" / "train" / "scene_00000.ppm").exists()
    assert (dataset_dir / "config.cfg").exists()


def test_gen_is_byte_identical_for_same_seed(tmp_path, small_config_file, dataset_dir):
    again = tmp_path / "again"
    assert main(["gen", "--config", str(small_config_file), "--out", str(again), "--quiet"])
    for name in ("train", "val", "test"):
        assert (again / f"{name}.jsonl").read_bytes() == (dataset_dir / f"{name}.jsonl").read_bytes()
    image = "images/test/scene_00010.ppm"
    assert (again / image).read_bytes() == (dataset_dir / image).read_bytes()


def test_seed_flag_changes_dataset(tmp_path, small_config_file, dataset_dir):
    other = tmp_path / "other"
    assert main(["gen", "--config", str(small_config_file), "--seed", "9", "--out", str(other), "--quiet"])
    assert (other / "train.jsonl").read_bytes() != (dataset_dir / "train.jsonl").read_bytes()


def test_train_writes_run_artifacts(run_dir):
    assert load_checkpoint(run_dir / "checkpoint.dsg")
    lines = (run_dir / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert set(json.loads(lines[0])) >= {"epoch", "loss_rr", "loss_box", "loss_sgl", "val_subj_iou",
                                          "val_obj_iou", "lr"}
    assert "epochs=2" in (run_dir / "config.cfg").read_text(encoding="utf-8")


def test_eval_writes_report_and_renders(tmp_path, run_dir, dataset_dir):
    render_dir = tmp_path / "renders"
    assert main(["eval", "--model", str(run_dir), "--data", str(dataset_dir),
                 "--render-dir", str(render_dir), "--quiet"])
    report = json.loads((run_dir / "eval_report.json").read_text(encoding="utf-8"))
    assert 0.0 <= report["subject_iou"] <= 1.0
    assert 0.0 <= report["object_iou"] <= 1.0
    assert (run_dir / "scene_graphs.json").exists()
    assert 0 < len(list(render_dir.glob("*_maps.ppm"))) <= 3


def test_eval_rejects_mismatched_checkpoint(run_dir, dataset_dir):
    config_path = run_dir / "config.cfg"
    config_path.write_text(config_path.read_text(encoding="utf-8").replace("head_hidden=8", "head_hidden=9"),
                           encoding="utf-8")
    assert not main(["eval", "--model", str(run_dir), "--data", str(dataset_dir), "--quiet"])


def test_unknown_config_key_fails(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("learning_rate=0.1\n", encoding="utf-8")
    assert not main(["gen", "--config", str(bad), "--out", str(tmp_path / "x"), "--quiet"])


def test_missing_dataset_fails(tmp_path, small_config_file):
    assert not main(["train", "--config", str(small_config_file), "--data", str(tmp_path / "none"),
                     "--out", str(tmp_path / "run"), "--quiet"])


def test_ablate_writes_comparison_table(tmp_path, small_config_file, dataset_dir):
    out = tmp_path / "ablation"
    assert main(["ablate", "--config", str(small_config_file), "--data", str(dataset_dir),
                 "--out", str(out), "--quiet"])
    rows = json.loads((out / "ablation.json").read_text(encoding="utf-8"))
    assert [r["variant"] for r in rows] == ["DSG", "Two-step", "DSG -SGL", "DSG -BR", "no-DSG"]
    assert (out / "ablation.xlsx").read_bytes()[:2] == b"PK"
    for variant in ("dsg", "two-step", "no-sgl", "no-br", "no-dsg"):
        assert (out / variant / "checkpoint.dsg").exists()


def _config_file(tmp_path, name, **overrides):
    lines = [line for line in SMALL_CONFIG_TEXT.strip().splitlines() if line.split("=")[0] not in overrides]
    lines += [f"{key}={value}" for key, value in overrides.items()]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_resumed_run_matches_uninterrupted_run(tmp_path, run_dir, dataset_dir):
    four = _config_file(tmp_path, "four.cfg", epochs=4)
    direct = tmp_path / "direct"
    assert main(["train", "--config", str(four), "--data", str(dataset_dir), "--out", str(direct), "--quiet"])
    assert (run_dir / "train_state.dsg").exists()
    assert main(["train", "--config", str(four), "--data", str(dataset_dir), "--out", str(run_dir),
                 "--resume", "--quiet"])
    for name in ("checkpoint.dsg", "train_state.dsg", "metrics.jsonl", "config.cfg"):
        assert (run_dir / name).read_bytes() == (direct / name).read_bytes()


def test_resume_without_new_epochs_reproduces_report(run_dir, small_config_file, dataset_dir):
    assert main(["eval", "--model", str(run_dir), "--data", str(dataset_dir), "--quiet"])
    before = (run_dir / "eval_report.json").read_bytes()
    checkpoint = (run_dir / "checkpoint.dsg").read_bytes()
    assert main(["train", "--config", str(small_config_file), "--data", str(dataset_dir), "--out", str(run_dir),
                 "--resume", "--quiet"])
    assert (run_dir / "checkpoint.dsg").read_bytes() == checkpoint
    assert main(["eval", "--model", str(run_dir), "--data", str(dataset_dir), "--quiet"])
    assert (run_dir / "eval_report.json").read_bytes() == before


def test_resume_with_fewer_epochs_fails(tmp_path, run_dir, dataset_dir):
    one = _config_file(tmp_path, "one.cfg", epochs=1)
    assert not main(["train", "--config", str(one), "--data", str(dataset_dir), "--out", str(run_dir),
                     "--resume", "--quiet"])


def test_resume_without_previous_run_fails(tmp_path, small_config_file, dataset_dir):
    assert not main(["train", "--config", str(small_config_file), "--data", str(dataset_dir),
                     "--out", str(tmp_path / "fresh"), "--resume", "--quiet"])


def test_validation_fields_are_null_without_val_split(tmp_path):
    config = _config_file(tmp_path, "noval.cfg", n_val=0)
    data, run = tmp_path / "noval_data", tmp_path / "noval_run"
    assert main(["gen", "--config", str(config), "--out", str(data), "--quiet"])
    assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run), "--quiet"])
    lines = (run / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    for line in lines:
        assert '"val_subj_iou":null' in line and '"val_obj_iou":null' in line
        record = json.loads(line)
        assert isinstance(record["lr"], float) and isinstance(record["loss_total"], float)


def test_generated_test_split_scores_one_with_gt_boxes(dataset_dir):
    scenes = load_dataset(dataset_dir / "test.jsonl")
    samples = SampleCollector(ProposalConfig(), seed=0).collect(scenes)

    def predict(sample):
        scene = sample.scene
        return [QueryPrediction([], [], gt_role_boxes(scene, q.gt_subject_ids), gt_role_boxes(scene, q.gt_object_ids))
                for q in scene.queries]

    report = evaluate_rr(predict, samples, 14)
    assert report.n_queries > 0
    assert report.subject_iou == 1.0 and report.object_iou == 1.0
