"""
실험 실행기: 데이터셋 생성, 학습, 평가, ablation 을 실행 디렉터리 단위로 묶습니다.

실행 디렉터리 구성:
    config.cfg       유효 설정 (같은 평면 형식)
    checkpoint.dsg   파라미터 체크포인트
    train_state.dsg  모멘텀 속도 + 학습한 에폭 수 (--resume 용)
    metrics.jsonl    에폭별 지표
    eval_report.json 평가 리포트
    scene_graphs.json 디코딩된 장면 그래프 (앞쪽 장면)
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from modules.core.dsg_model import DsgModel
from modules.core.layers import Parameters
from modules.core.trainer import DsgTrainer, EpochMetrics, TrainState, TrainingResult, load_metrics_log, write_metrics_log
from modules.data.collectors.sample_collector import Sample, SampleCollector, collect_scenes
from modules.data.dataset_io import load_dataset, save_dataset
from modules.data.rasterizer import rasterize, write_ppm
from modules.data.scene_generator import Scene
from modules.reports.ablation_report import AblationReporter
from modules.reports.attention_renderer import AttentionRenderer
from modules.reports.evaluator import EvalReport, ModelEvaluator, write_json
from modules.utils.checkpoint_manager import CheckpointManager
from modules.utils.config_manager import ABLATION_VARIANTS, ConfigManager
from modules.utils.errors import CheckpointError, EmptyInputError

SPLITS = ("train", "val", "test")
CONFIG_FILE = "config.cfg"
CHECKPOINT_FILE = "checkpoint.dsg"
STATE_FILE = "train_state.dsg"
METRICS_FILE = "metrics.jsonl"
REPORT_FILE = "eval_report.json"
SCENE_GRAPH_FILE = "scene_graphs.json"


@dataclass
class RunArtifacts:
    run_dir: Path
    result: TrainingResult


class ExperimentRunner:
    """설정 하나로 gen / train / eval / ablate 실행"""

    def __init__(self, config: ConfigManager):
        self.config = config
        self.workers = config.get_thread_count()
        self.checkpoints = CheckpointManager()
        self.logger = logging.getLogger(__name__)

    # ------------------------------------------------------------------
    # 데이터
    # ------------------------------------------------------------------
    def split_ids(self) -> Dict[str, range]:
        """분할별 연속 scene_id 구간 (서로 겹치지 않음)"""
        split = self.config.get_split_config()
        bounds = [0, split.n_train, split.n_train + split.n_val, split.n_train + split.n_val + split.n_test]
        return {name: range(bounds[k], bounds[k + 1]) for k, name in enumerate(SPLITS)}

    def generate_dataset(self, out_dir: Union[str, Path], write_images: bool = True) -> Dict[str, Path]:
        """
        train/val/test JSON-lines 와 PPM 이미지를 생성합니다.

        Args:
            out_dir: 출력 디렉터리
            write_images: images/<split>/ 아래 PPM 저장 여부

        Returns:
            분할 이름 → 데이터셋 경로
        """
        out_dir = Path(out_dir)
        seed = self.config.get_seed()
        scene_config = self.config.get_scene_config()
        paths = {}
        for name, ids in self.split_ids().items():
            scenes = collect_scenes(list(ids), seed, scene_config, self.workers)
            paths[name] = save_dataset(out_dir / f"{name}.jsonl", scenes)
            if write_images:
                for scene in scenes:
                    write_ppm(out_dir / "images" / name / f"scene_{scene.scene_id:05d}.ppm", rasterize(scene))
            if scenes:
                ambiguous = sum(s.is_ambiguous for s in scenes) / len(scenes)
                self.logger.info(f"📁 {name}: {len(scenes)}개 장면, 모호 장면 비율 {ambiguous:.3f}")
        self.config.save(out_dir / CONFIG_FILE)
        return paths

    def load_split(self, data_dir: Union[str, Path], split: str) -> List[Scene]:
        path = Path(data_dir) / f"{split}.jsonl"
        if not path.exists():
            if split == "val":
                return []
            raise FileNotFoundError(f"데이터셋 파일이 없습니다: {path}")
        return load_dataset(path)

    def collect_samples(self, scenes: List[Scene], config: Optional[ConfigManager] = None) -> List[Sample]:
        config = config or self.config
        collector = SampleCollector(config.get_proposal_config(), config.get_seed(), self.workers)
        return collector.collect(scenes)

    # ------------------------------------------------------------------
    # 모델
    # ------------------------------------------------------------------
    @staticmethod
    def build_model(config: ConfigManager) -> DsgModel:
        return DsgModel(config.get_model_config(), config.get_ablation_flags())

    def train(self, data_dir: Union[str, Path], run_dir: Union[str, Path],
              config: Optional[ConfigManager] = None, resume: bool = False) -> RunArtifacts:
        """
        학습 후 실행 디렉터리에 설정, 체크포인트, 학습 상태, 지표 로그를 저장합니다.

        Args:
            resume: run_dir 의 체크포인트와 학습 상태에서 이어서 config.epochs 까지 학습
        """
        config = config or self.config
        run_dir = Path(run_dir)
        train_samples = self.collect_samples(self.load_split(data_dir, "train"), config)
        val_samples = self.collect_samples(self.load_split(data_dir, "val"), config)
        if not train_samples:
            raise EmptyInputError(f"학습 데이터가 비어 있습니다: {data_dir}")

        model = self.build_model(config)
        trainer = DsgTrainer(model, config.get_train_config(), config.get_loss_weights(),
                             config.get_eval_config().attention_l)
        if resume:
            params, state, history = self.load_train_state(run_dir, model)
            result = trainer.train(train_samples, val_samples, params=params, resume=state, history=history)
        else:
            result = trainer.train(train_samples, val_samples)

        config.save(run_dir / CONFIG_FILE)
        self.checkpoints.save(result.params, run_dir / CHECKPOINT_FILE)
        self.checkpoints.save(result.state.to_arrays(), run_dir / STATE_FILE)
        write_metrics_log(run_dir / METRICS_FILE, result.metrics)
        self.logger.info(f"💾 실행 결과 저장: {run_dir}")
        return RunArtifacts(run_dir, result)

    def load_train_state(self, run_dir: Path, model: DsgModel) -> Tuple[Parameters, TrainState, List[EpochMetrics]]:
        """이어서 학습할 파라미터, 옵티마이저 상태, 이전 에폭 지표"""
        params = self.checkpoints.load(run_dir / CHECKPOINT_FILE)
        self.checkpoints.check_compatible(params, model.expected_shapes())
        state = TrainState.from_arrays(self.checkpoints.load(run_dir / STATE_FILE))
        metrics_path = run_dir / METRICS_FILE
        if not metrics_path.exists():
            raise CheckpointError(f"지표 로그가 없어 이어서 학습할 수 없습니다: {metrics_path}")
        return params, state, load_metrics_log(metrics_path)

    def load_run(self, run_dir: Union[str, Path]) -> Tuple[ConfigManager, DsgModel, Parameters]:
        """실행 디렉터리의 설정으로 모델을 다시 만들고 체크포인트 형태를 검사합니다."""
        run_dir = Path(run_dir)
        config = ConfigManager(config_path=run_dir / CONFIG_FILE, config_dir=self.config.config_dir)
        model = self.build_model(config)
        params = self.checkpoints.load(run_dir / CHECKPOINT_FILE)
        self.checkpoints.check_compatible(params, model.expected_shapes())
        return config, model, params

    def evaluate(self, run_dir: Union[str, Path], data_dir: Union[str, Path],
                 render_dir: Optional[Union[str, Path]] = None, split: str = "test") -> EvalReport:
        run_dir = Path(run_dir)
        config, model, params = self.load_run(run_dir)
        eval_config = config.get_eval_config()
        samples = self.collect_samples(self.load_split(data_dir, split), config)
        evaluator = ModelEvaluator(model, params, eval_config.attention_l,
                                   eval_config.sg_iou_floor, eval_config.sg_top_k)
        report = evaluator.evaluate(samples)
        write_json(run_dir / REPORT_FILE, report.to_dict())
        evaluator.export_scene_graphs(samples, run_dir / SCENE_GRAPH_FILE, eval_config.render_limit)

        if render_dir is not None:
            to_render = [s for s in samples if s.scene.queries][:eval_config.render_limit]
            predictions = [model.predict(params, s.box_set, list(s.scene.queries), eval_config.sg_top_k)
                           for s in to_render]
            AttentionRenderer(render_dir, eval_config.attention_l, eval_config.render_limit).render(
                to_render, predictions)
        return report

    # ------------------------------------------------------------------
    # ablation
    # ------------------------------------------------------------------
    def ablate(self, data_dir: Union[str, Path], out_dir: Union[str, Path],
               variants=ABLATION_VARIANTS) -> Dict[str, EvalReport]:
        """다섯 변형을 같은 시드로 학습/평가하고 비교표를 저장합니다."""
        out_dir = Path(out_dir)
        reports: Dict[str, EvalReport] = {}
        for variant in variants:
            self.logger.info(f"🔬 ablation 변형: {variant}")
            config = self.config.copy()
            config.apply_variant(variant)
            run_dir = out_dir / variant
            self.train(data_dir, run_dir, config)
            reports[variant] = self.evaluate(run_dir, data_dir)
        AblationReporter(out_dir).save(reports)
        return reports
