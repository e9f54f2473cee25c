"""
실험 설정 관리 - 평면 key=value 설정 파일
기본값(config/default_experiment.cfg) 위에 사용자 설정 파일을 덮어쓰고, 알 수 없는 키는 거부합니다.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import psutil
from dotenv import load_dotenv

from modules.utils.errors import ConfigError

logger = logging.getLogger(__name__)

GPI_MODES = ("sum", "attention")
ABLATION_VARIANTS = ("dsg", "two-step", "no-sgl", "no-br", "no-dsg")


@dataclass(frozen=True)
class SceneConfig:
    canvas_px: int = 64
    min_entities: int = 2
    max_entities: int = 8
    ambiguity_rate: float = 0.33
    min_separation: float = 0.15
    small_size: float = 0.10
    large_size: float = 0.16
    max_queries: int = 8
    placement_retries: int = 200


@dataclass(frozen=True)
class SplitConfig:
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 200


@dataclass(frozen=True)
class ProposalConfig:
    jitter: float = 0.10
    n_bg: int = 4
    bg_min_area: float = 0.005
    bg_max_area: float = 0.10
    bg_max_iou: float = 0.3
    max_proposals: int = 32


@dataclass(frozen=True)
class ModelConfig:
    embed_hidden: int = 64
    feature_width: int = 64
    gpi_hidden: int = 64
    gpi_value: int = 64
    gpi_summary: int = 64
    dsg_width: int = 64
    head_hidden: int = 64
    query_dim: int = 16
    gpi_mode: str = "sum"


@dataclass(frozen=True)
class LossWeights:
    # w_det은 검출기 손실 자리 (검출기를 시뮬레이션하므로 사용하지 않음)
    w_det: float = 1.0
    w_rr: float = 0.2
    w_box: float = 1.0
    w_sgl: float = 0.01


@dataclass(frozen=True)
class AblationFlags:
    use_dsg: bool = True
    use_box_refiner: bool = True
    use_sgl_loss: bool = True
    two_step: bool = False

    @classmethod
    def for_variant(cls, variant: str) -> "AblationFlags":
        if variant == "dsg":
            return cls()
        if variant == "two-step":
            return cls(two_step=True)
        if variant == "no-sgl":
            return cls(use_sgl_loss=False)
        if variant == "no-br":
            return cls(use_box_refiner=False)
        if variant == "no-dsg":
            return cls(use_dsg=False)
        raise ConfigError(f"알 수 없는 ablation 변형: {variant} (가능: {', '.join(ABLATION_VARIANTS)})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    decay_period: int = 3
    seed: int = 0
    flags: AblationFlags = field(default_factory=AblationFlags)


@dataclass(frozen=True)
class EvalConfig:
    attention_l: int = 14
    sg_iou_floor: float = 0.8
    sg_top_k: int = 10
    render_limit: int = 20


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"불리언 값이 아닙니다: {raw!r}")


def _positive(v: Union[int, float]) -> bool:
    return v > 0


def _non_negative(v: Union[int, float]) -> bool:
    return v >= 0


def _unit(v: float) -> bool:
    return 0.0 <= v <= 1.0


# key -> (기본값, 타입 변환, 범위 검사, 범위 설명)
_SCHEMA: Dict[str, Tuple[Any, Callable[[str], Any], Callable[[Any], bool], str]] = {
    "seed": (0, int, _non_negative, ">= 0"),
    # 장면 생성
    "canvas_px": (64, int, lambda v: v >= 8, ">= 8"),
    "min_entities": (2, int, lambda v: v >= 2, ">= 2"),
    "max_entities": (8, int, lambda v: v >= 2, ">= 2"),
    "ambiguity_rate": (0.33, float, _unit, "[0, 1]"),
    "min_separation": (0.15, float, lambda v: 0.0 <= v < 1.0, "[0, 1)"),
    "small_size": (0.10, float, lambda v: 0.0 < v < 1.0, "(0, 1)"),
    "large_size": (0.16, float, lambda v: 0.0 < v < 1.0, "(0, 1)"),
    "max_queries": (8, int, _non_negative, ">= 0"),
    "placement_retries": (200, int, _positive, "> 0"),
    # 데이터 분할
    "n_train": (2000, int, _positive, "> 0"),
    "n_val": (200, int, _non_negative, ">= 0"),
    "n_test": (200, int, _positive, "> 0"),
    # 제안 박스
    "jitter": (0.10, float, lambda v: 0.0 <= v < 0.5, "[0, 0.5)"),
    "n_bg": (4, int, _non_negative, ">= 0"),
    "bg_min_area": (0.005, float, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "bg_max_area": (0.10, float, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "bg_max_iou": (0.3, float, _unit, "[0, 1]"),
    "max_proposals": (32, int, lambda v: 2 <= v <= 32, "[2, 32]"),
    # 모델 폭
    "embed_hidden": (64, int, _positive, "> 0"),
    "feature_width": (64, int, _positive, "> 0"),
    "gpi_hidden": (64, int, _positive, "> 0"),
    "gpi_value": (64, int, _positive, "> 0"),
    "gpi_summary": (64, int, _positive, "> 0"),
    "dsg_width": (64, int, _positive, "> 0"),
    "head_hidden": (64, int, _positive, "> 0"),
    "query_dim": (16, int, _positive, "> 0"),
    "gpi_mode": ("sum", str, lambda v: v in GPI_MODES, "sum | attention"),
    # 손실 가중치
    "w_det": (1.0, float, _non_negative, ">= 0"),
    "w_rr": (0.2, float, _non_negative, ">= 0"),
    "w_box": (1.0, float, _non_negative, ">= 0"),
    "w_sgl": (0.01, float, _non_negative, ">= 0"),
    # 학습
    "epochs": (12, int, _non_negative, ">= 0"),
    "lr": (0.01, float, _non_negative, ">= 0"),
    "momentum": (0.9, float, lambda v: 0.0 <= v < 1.0, "[0, 1)"),
    "lr_decay": (0.5, float, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "decay_period": (3, int, lambda v: v >= 1, ">= 1"),
    # ablation 플래그
    "use_dsg": (True, _parse_bool, lambda v: True, "bool"),
    "use_box_refiner": (True, _parse_bool, lambda v: True, "bool"),
    "use_sgl_loss": (True, _parse_bool, lambda v: True, "bool"),
    "two_step": (False, _parse_bool, lambda v: True, "bool"),
    # 평가
    "attention_l": (14, int, _positive, "> 0"),
    "sg_iou_floor": (0.8, float, _unit, "[0, 1]"),
    "sg_top_k": (10, int, _non_negative, ">= 0"),
    "render_limit": (20, int, _non_negative, ">= 0"),
}


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, source: str = "<text>") -> Dict[str, Any]:
    """key=value 텍스트를 검증된 dict로 변환 (알 수 없는 키는 ConfigError)"""
    values: Dict[str, Any] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_number}: 'key=value' 형식이 아닙니다: {raw_line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _convert(key, raw, f"{source}:{line_number}")
    return values


def _convert(key: str, raw: Any, where: str) -> Any:
    if key not in _SCHEMA:
        raise ConfigError(f"{where}: 알 수 없는 설정 키 '{key}'")
    _, cast, check, expected = _SCHEMA[key]
    try:
        value = cast(raw) if isinstance(raw, str) or cast is not _parse_bool else bool(raw)
        if cast is int and isinstance(raw, float):
            raise ValueError("정수가 아닙니다")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: '{key}' 값 {raw!r} 변환 실패 ({e})") from e
    if not check(value):
        raise ConfigError(f"{where}: '{key}' 값 {value!r} 이(가) 허용 범위 {expected} 밖입니다")
    return value


class ConfigManager:
    """실험 설정 관리 클래스"""

    DEFAULT_FILE_NAME = "default_experiment.cfg"

    def __init__(self, config_path: Optional[Union[str, Path]] = None,
                 config_dir: Optional[Union[str, Path]] = None):
        load_dotenv()
        if config_dir is None:
            self.base_dir = Path(__file__).resolve().parent.parent.parent
            # 환경변수 확인 (우선순위 1)
            if os.environ.get("DSG_HOME"):
                self.base_dir = Path(os.environ["DSG_HOME"])
                logger.info(f"🏠 환경변수 DSG_HOME 사용: {self.base_dir}")
            self.config_dir = self.base_dir / "config"
        else:
            self.config_dir = Path(config_dir)
            self.base_dir = self.config_dir.parent

        self.values: Dict[str, Any] = {key: entry[0] for key, entry in _SCHEMA.items()}
        self._load_defaults()
        self.source = "defaults"
        if config_path is not None:
            self._overlay_file(Path(config_path))
            self.source = str(config_path)
        self._check_consistency()

    @classmethod
    def from_text(cls, text: str, config_dir: Optional[Union[str, Path]] = None) -> "ConfigManager":
        manager = cls(config_dir=config_dir)
        manager.values.update(parse_config_text(text))
        manager._check_consistency()
        return manager

    def _load_defaults(self) -> None:
        default_path = self.config_dir / self.DEFAULT_FILE_NAME
        if not default_path.exists():
            logger.warning(f"⚠️ 기본 설정 파일이 없어 내장 기본값을 사용합니다: {default_path}")
            return
        self.values.update(parse_config_text(default_path.read_text(encoding="utf-8"), str(default_path)))

    def _overlay_file(self, path: Path) -> None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"설정 파일을 읽을 수 없습니다: {path} ({e})") from e
        self.values.update(parse_config_text(text, str(path)))
        logger.info(f"📁 설정 파일 적용: {path}")

    def _check_consistency(self) -> None:
        v = self.values
        if v["min_entities"] > v["max_entities"]:
            raise ConfigError(f"min_entities({v['min_entities']}) > max_entities({v['max_entities']})")
        if v["bg_min_area"] > v["bg_max_area"]:
            raise ConfigError(f"bg_min_area({v['bg_min_area']}) > bg_max_area({v['bg_max_area']})")
        if v["small_size"] > v["large_size"]:
            raise ConfigError(f"small_size({v['small_size']}) > large_size({v['large_size']})")
        if v["max_entities"] > v["max_proposals"]:
            raise ConfigError(f"max_entities({v['max_entities']}) > max_proposals({v['max_proposals']})")

    def set(self, key: str, value: Any) -> None:
        """CLI 플래그 등으로 단일 키 덮어쓰기"""
        self.values[key] = _convert(key, value, "override")
        self._check_consistency()

    def apply_variant(self, variant: str) -> None:
        flags = AblationFlags.for_variant(variant)
        for key in ("use_dsg", "use_box_refiner", "use_sgl_loss", "two_step"):
            self.values[key] = getattr(flags, key)

    def copy(self) -> "ConfigManager":
        clone = object.__new__(ConfigManager)
        clone.base_dir = self.base_dir
        clone.config_dir = self.config_dir
        clone.values = dict(self.values)
        clone.source = self.source
        return clone

    def dump(self) -> str:
        """유효 설정을 같은 평면 형식으로 출력"""
        lines = [f"# effective config (source: {self.source})"]
        lines += [f"{key}={_format_value(self.values[key])}" for key in _SCHEMA]
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dump(), encoding="utf-8")
        return path

    def get_scene_config(self) -> SceneConfig:
        return SceneConfig(**{f: self.values[f] for f in SceneConfig.__dataclass_fields__})

    def get_split_config(self) -> SplitConfig:
        return SplitConfig(**{f: self.values[f] for f in SplitConfig.__dataclass_fields__})

    def get_proposal_config(self) -> ProposalConfig:
        return ProposalConfig(**{f: self.values[f] for f in ProposalConfig.__dataclass_fields__})

    def get_model_config(self) -> ModelConfig:
        return ModelConfig(**{f: self.values[f] for f in ModelConfig.__dataclass_fields__})

    def get_loss_weights(self) -> LossWeights:
        return LossWeights(**{f: self.values[f] for f in LossWeights.__dataclass_fields__})

    def get_ablation_flags(self) -> AblationFlags:
        return AblationFlags(**{f: self.values[f] for f in AblationFlags.__dataclass_fields__})

    def get_train_config(self) -> TrainConfig:
        fields = {f: self.values[f] for f in TrainConfig.__dataclass_fields__ if f != "flags"}
        return TrainConfig(flags=self.get_ablation_flags(), **fields)

    def get_eval_config(self) -> EvalConfig:
        return EvalConfig(**{f: self.values[f] for f in EvalConfig.__dataclass_fields__})

    def get_seed(self) -> int:
        return int(self.values["seed"])

    def get_thread_count(self) -> int:
        """DSG_THREADS 환경변수 (기본 1), 물리 코어 수로 상한"""
        raw = os.environ.get("DSG_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError as e:
            raise ConfigError(f"DSG_THREADS 값이 정수가 아닙니다: {raw!r}") from e
        if threads < 1:
            raise ConfigError(f"DSG_THREADS는 1 이상이어야 합니다: {threads}")
        cores = psutil.cpu_count(logical=False) or 1
        if threads > cores:
            logger.warning(f"⚠️ DSG_THREADS={threads} 가 물리 코어 수 {cores} 보다 커서 {cores}로 제한합니다")
            threads = cores
        return threads

