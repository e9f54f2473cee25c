"""
DSG 엔진 공통 예외 정의
라이브러리 코드는 예외를 발생시키고, CLI(applications/main.py)가 최상위에서 로깅 후 종료 코드를 결정합니다.
"""

from typing import Optional


class DsgError(Exception):
    """모든 DSG 예외의 기본 클래스"""


class ShapeError(DsgError, ValueError):
    """텐서/맵 형태 불일치"""


class GraphError(DsgError, ValueError):
    """계산 그래프 사용 오류 (서로 다른 그래프 혼용 등)"""


class NonFiniteError(DsgError, FloatingPointError):
    """순전파 결과에 NaN/Inf 발생"""


class LabelRangeError(DsgError, ValueError):
    """분류 타깃이 클래스 범위를 벗어남"""


class EmptyInputError(DsgError, ValueError):
    """빈 입력 (빈 배치, 빈 데이터셋, 후보 부족 등)"""


class ConfigError(DsgError, ValueError):
    """설정 키/값 오류"""


class SceneGenerationError(DsgError, RuntimeError):
    """제한된 재시도 안에 장면 배치 실패"""


class DatasetFormatError(DsgError, ValueError):
    """JSON-lines 데이터셋 스키마 위반"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"{line_number}번째 줄: {message}"
        super().__init__(message)


class DegenerateBoxError(DsgError, ValueError):
    """면적이 0이거나 캔버스 밖에 있는 박스"""


class ModeError(DsgError, ValueError):
    """집계 모드(sum/attention)에 맞지 않는 호출"""


class DivergenceError(DsgError, RuntimeError):
    """학습 중 손실이 NaN/Inf로 발산"""


class CheckpointError(DsgError, ValueError):
    """체크포인트 형식 오류 또는 모델 설정과 형태 불일치"""

    def __init__(self, message: str, tensor_name: Optional[str] = None):
        self.tensor_name = tensor_name
        if tensor_name is not None:
            message = f"[{tensor_name}] {message}"
        super().__init__(message)
