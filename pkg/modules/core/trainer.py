"""
DSG 모델 학습 루프
이미지 하나(그 이미지의 모든 질의)를 배치로 모멘텀 SGD 스텝을 밟고, 에폭마다 손실과 검증 IOU를 기록합니다.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from modules.core.autodiff import ComputationGraph
from modules.core.dsg_model import DsgModel
from modules.core.layers import Parameters
from modules.core.losses import LossBreakdown, total_loss
from modules.core.optimizer import SgdMomentum, lr_at_epoch
from modules.data.collectors.sample_collector import Sample
from modules.reports.evaluator import evaluate_rr, model_predictor
from modules.utils.config_manager import LossWeights, TrainConfig
from modules.utils.errors import CheckpointError, ConfigError, DivergenceError, EmptyInputError, NonFiniteError

ProgressCallback = Callable[[str, float], None]

VELOCITY_PREFIX = "velocity/"


@dataclass
class EpochMetrics:
    epoch: int
    loss_rr: float
    loss_box: float
    loss_sgl: float
    val_subj_iou: Optional[float]
    val_obj_iou: Optional[float]
    lr: float
    loss_total: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    """이어서 학습하기 위한 옵티마이저 상태"""
    epochs_done: int
    initial_loss: float
    velocity: Dict[str, np.ndarray]

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {"epochs_done": np.array(float(self.epochs_done)),
                  "initial_loss": np.array(self.initial_loss)}
        arrays.update({f"{VELOCITY_PREFIX}{name}": v for name, v in self.velocity.items()})
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "TrainState":
        for key in ("epochs_done", "initial_loss"):
            if key not in arrays or np.shape(arrays[key]) != ():
                raise CheckpointError("학습 상태 스칼라가 없습니다", tensor_name=key)
        velocity = {name[len(VELOCITY_PREFIX):]: np.array(v, dtype=np.float64)
                    for name, v in arrays.items() if name.startswith(VELOCITY_PREFIX)}
        return cls(int(arrays["epochs_done"]), float(arrays["initial_loss"]), velocity)


@dataclass
class TrainingResult:
    params: Parameters
    metrics: List[EpochMetrics] = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0
    state: Optional[TrainState] = None

    def metrics_frame(self) -> pd.DataFrame:
        return metrics_frame(self.metrics)


def metrics_frame(metrics: Sequence[EpochMetrics]) -> pd.DataFrame:
    columns = list(EpochMetrics.__dataclass_fields__)
    return pd.DataFrame([m.to_dict() for m in metrics], columns=columns)


def write_metrics_log(path: Union[str, Path], metrics: Sequence[EpochMetrics]) -> Path:
    """에폭당 한 줄 JSON-lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for m in metrics:
            f.write(json.dumps(m.to_dict(), separators=(",", ":")))
            f.write("\n")
    return path


def read_metrics_log(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_json(path, lines=True)


def load_metrics_log(path: Union[str, Path]) -> List[EpochMetrics]:
    """지표 로그 → EpochMetrics 목록 (값은 기록된 float 그대로)"""
    metrics = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                metrics.append(EpochMetrics(**json.loads(line)))
    return metrics


class DsgTrainer:
    """DSG 모델 학습기"""

    def __init__(self, model: DsgModel, config: TrainConfig, weights: LossWeights,
                 attention_l: int = 14):
        self.model = model
        self.config = config
        self.weights = weights
        self.attention_l = attention_l
        self.logger = logging.getLogger(__name__)

    def _loss(self, graph: ComputationGraph, sample: Sample) -> LossBreakdown:
        try:
            breakdown = total_loss(graph, self.model, sample, self.weights)
        except NonFiniteError as e:
            raise DivergenceError(f"scene {sample.scene_id}: 손실 계산 중 발산 ({e})") from e
        if not math.isfinite(breakdown.total_value):
            raise DivergenceError(f"scene {sample.scene_id}: 손실이 유한하지 않습니다 ({breakdown.total_value})")
        return breakdown

    def mean_loss(self, params: Parameters, samples: Sequence[Sample]) -> float:
        """파라미터 갱신 없이 평균 총손실"""
        total = 0.0
        for sample in samples:
            total += self._loss(ComputationGraph(params, track=False), sample).total_value
        return total / len(samples)

    def _validate(self, params: Parameters, val_samples: Sequence[Sample]):
        if not val_samples:
            return None, None
        report = evaluate_rr(model_predictor(self.model, params), val_samples, self.attention_l)
        return report.subject_iou, report.object_iou

    def train(self, samples: Sequence[Sample], val_samples: Sequence[Sample] = (),
              params: Optional[Parameters] = None,
              progress_callback: Optional[ProgressCallback] = None,
              resume: Optional[TrainState] = None,
              history: Sequence[EpochMetrics] = ()) -> TrainingResult:
        """
        학습 실행 (seed 에 대해 결정적)

        Args:
            samples: 학습 샘플 (질의 없는 장면은 제외, scene_id 순서로 처리)
            val_samples: 검증 샘플 (비어 있으면 검증 IOU는 None)
            params: 시작 파라미터 (None 이면 config.seed 로 초기화)
            progress_callback: (메시지, 진행률%) 콜백
            resume: 이전 실행의 학습 상태 (params 와 함께 주면 resume.epochs_done 에폭부터 이어서 학습)
            history: 이전 실행의 에폭 지표 (resume 과 함께, 길이 = epochs_done)

        Returns:
            TrainingResult
        """
        config = self.config
        batches = sorted((s for s in samples if s.scene.queries), key=lambda s: s.scene_id)
        if not batches:
            raise EmptyInputError("질의가 있는 학습 샘플이 없습니다")
        val_batches = [s for s in val_samples if s.scene.queries]

        params = self.model.init_parameters(config.seed) if params is None else params.copy()
        optimizer = SgdMomentum(params, lr=config.lr, momentum=config.momentum)
        result = TrainingResult(params)
        start_epoch = 0
        if resume is None:
            result.initial_loss = self.mean_loss(params, batches)
        else:
            start_epoch = self._restore(optimizer, resume, history)
            result.initial_loss = resume.initial_loss
            result.metrics = list(history)
        self.logger.info(f"🚀 학습 시작: {len(batches)}개 이미지, 에폭 {start_epoch + 1}~{config.epochs}, "
                         f"초기 손실 {result.initial_loss:.4f}")

        for epoch in range(start_epoch, config.epochs):
            optimizer.lr = lr_at_epoch(config.lr, config.lr_decay, config.decay_period, epoch)
            sums = {"rr": 0.0, "box": 0.0, "sgl": 0.0, "total": 0.0}
            for step, sample in enumerate(batches, start=1):
                graph = ComputationGraph(params)
                breakdown = self._loss(graph, sample)
                grads = graph.backward(breakdown.total).for_parameters(params)
                optimizer.step(grads)
                sums["rr"] += breakdown.rr
                sums["box"] += breakdown.box
                sums["sgl"] += breakdown.sgl
                sums["total"] += breakdown.total_value
                self.logger.debug(f"epoch {epoch} step {step}: loss {breakdown.total_value:.5f}")

            n = len(batches)
            val_subj, val_obj = self._validate(params, val_batches)
            metrics = EpochMetrics(epoch, sums["rr"] / n, sums["box"] / n, sums["sgl"] / n,
                                   val_subj, val_obj, optimizer.lr, sums["total"] / n)
            result.metrics.append(metrics)
            val_text = f", val IOU {val_subj:.4f}/{val_obj:.4f}" if val_subj is not None else ""
            self.logger.info(f"📈 epoch {epoch + 1}/{config.epochs}: loss {metrics.loss_total:.4f} "
                             f"(rr {metrics.loss_rr:.4f}, box {metrics.loss_box:.4f}, "
                             f"sgl {metrics.loss_sgl:.4f}), lr {optimizer.lr:g}{val_text}")
            if progress_callback:
                progress_callback(f"epoch {epoch + 1} 완료", (epoch + 1) / config.epochs * 100)

        result.final_loss = self.mean_loss(params, batches)
        result.state = TrainState(max(start_epoch, config.epochs), result.initial_loss,
                                  {name: v.copy() for name, v in optimizer.velocity.items()})
        self.logger.info(f"✅ 학습 완료: 손실 {result.initial_loss:.4f} → {result.final_loss:.4f}")
        return result

    def _restore(self, optimizer: SgdMomentum, resume: TrainState,
                 history: Sequence[EpochMetrics]) -> int:
        """옵티마이저 속도를 복원하고 시작 에폭을 돌려줍니다."""
        if resume.epochs_done > self.config.epochs:
            raise ConfigError(f"epochs={self.config.epochs} 가 이미 학습한 에폭 수 {resume.epochs_done} 보다 작습니다")
        if len(history) != resume.epochs_done:
            raise CheckpointError(f"지표 로그 {len(history)}줄 != 학습 상태 에폭 수 {resume.epochs_done}")
        for name, current in optimizer.velocity.items():
            saved = resume.velocity.get(name)
            if saved is None or saved.shape != current.shape:
                raise CheckpointError("학습 상태의 모멘텀 텐서가 모델과 맞지 않습니다", tensor_name=name)
            optimizer.velocity[name] = saved.copy()
        self.logger.info(f"🔁 {resume.epochs_done} 에폭 이후부터 이어서 학습합니다")
        return resume.epochs_done
