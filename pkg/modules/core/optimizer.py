"""
모멘텀 SGD 및 학습률 스케줄
"""

from __future__ import annotations

import logging
from typing import Dict, Mapping

import numpy as np

from modules.core.layers import Parameters
from modules.utils.errors import ShapeError

logger = logging.getLogger(__name__)


def sgd_step(params: Parameters, grads: Mapping[str, np.ndarray],
             velocity: Dict[str, np.ndarray], lr: float, momentum: float) -> None:
    """v ← momentum·v + g ; p ← p − lr·v (제자리 갱신)"""
    if lr < 0:
        raise ValueError(f"학습률은 음수일 수 없습니다: {lr}")
    for name, grad in grads.items():
        current = params[name]
        if np.shape(grad) != current.shape:
            raise ShapeError(f"{name}: 기울기 형태 {np.shape(grad)} != 파라미터 형태 {current.shape}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(current)
        v = momentum * v + grad
        velocity[name] = v
        params.set(name, current - lr * v)


class SgdMomentum:
    """파라미터 저장소에 묶인 모멘텀 SGD"""

    def __init__(self, params: Parameters, lr: float = 0.01, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {name: np.zeros_like(v) for name, v in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        sgd_step(self.params, grads, self.velocity, self.lr, self.momentum)


def lr_at_epoch(base_lr: float, decay: float, decay_period: int, epoch: int) -> float:
    """epoch(0부터)에서의 학습률: base_lr · decay^(epoch // decay_period)"""
    if decay_period < 1:
        raise ValueError(f"decay_period는 1 이상이어야 합니다: {decay_period}")
    return base_lr * decay ** (epoch // decay_period)
