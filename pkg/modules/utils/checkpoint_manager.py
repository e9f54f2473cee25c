"""
파라미터 체크포인트 저장/복원
고정 바이너리 형식 (float64 비트 그대로 보존):

    b"DSG1" | uint32 텐서 수 | 텐서마다:
        uint16 이름 길이 | utf-8 이름 | uint8 차원 수 | uint32 차원 크기들 | float64 little-endian 값
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np

from modules.core.layers import Parameters
from modules.utils.errors import CheckpointError

MAGIC = b"DSG1"


class CheckpointManager:
    """체크포인트 파일 관리 클래스"""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def save(self, params: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
        """
        파라미터를 체크포인트 파일로 저장

        Args:
            params: 이름 → 배열 (저장 순서 = 삽입 순서)
            path: 저장할 파일 경로

        Returns:
            저장된 파일 경로
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        chunks = [MAGIC, struct.pack("<I", len(params))]
        for name, value in params.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(value, dtype="<f8")
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<B", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
        path.write_bytes(b"".join(chunks))
        self.logger.info(f"💾 체크포인트 저장: {path} ({len(params)}개 텐서)")
        return path

    def load(self, path: Union[str, Path]) -> Parameters:
        """
        체크포인트 파일 읽기

        Returns:
            Parameters (파일에 적힌 순서)
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f"체크포인트를 읽을 수 없습니다: {path} ({e})") from e
        if data[:4] != MAGIC:
            raise CheckpointError(f"체크포인트 매직 바이트가 다릅니다: {data[:4]!r}")

        offset = 4
        params = Parameters()
        try:
            (count,) = struct.unpack_from("<I", data, offset)
            offset += 4
            for _ in range(count):
                (name_len,) = struct.unpack_from("<H", data, offset)
                offset += 2
                name = data[offset:offset + name_len].decode("utf-8")
                offset += name_len
                (ndim,) = struct.unpack_from("<B", data, offset)
                offset += 1
                shape = struct.unpack_from(f"<{ndim}I", data, offset)
                offset += 4 * ndim
                n_values = int(np.prod(shape)) if ndim else 1
                payload = data[offset:offset + 8 * n_values]
                if len(payload) != 8 * n_values:
                    raise CheckpointError("값이 잘렸습니다", tensor_name=name)
                offset += 8 * n_values
                params.add(name, np.frombuffer(payload, dtype="<f8").reshape(shape))
        except struct.error as e:
            raise CheckpointError(f"체크포인트 헤더가 잘렸습니다 ({e})") from e
        if offset != len(data):
            raise CheckpointError(f"체크포인트 끝에 {len(data) - offset}바이트가 남았습니다")
        self.logger.info(f"📂 체크포인트 로드: {path} ({len(params)}개 텐서)")
        return params

    def check_compatible(self, loaded: Mapping[str, np.ndarray],
                         expected: Mapping[str, Tuple[int, ...]]) -> None:
        """모델 설정이 기대하는 이름/형태와 체크포인트가 일치하는지 확인 (불일치 텐서 이름을 보고)"""
        for name, shape in expected.items():
            if name not in loaded:
                raise CheckpointError("체크포인트에 텐서가 없습니다", tensor_name=name)
            if tuple(np.shape(loaded[name])) != tuple(shape):
                raise CheckpointError(
                    f"형태 불일치: 체크포인트 {tuple(np.shape(loaded[name]))} vs 모델 {tuple(shape)}",
                    tensor_name=name,
                )
        extra = [name for name in loaded if name not in expected]
        if extra:
            raise CheckpointError("모델에 없는 텐서입니다", tensor_name=extra[0])


def save_checkpoint(params: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
    return CheckpointManager().save(params, path)


def load_checkpoint(path: Union[str, Path]) -> Parameters:
    return CheckpointManager().load(path)


def shapes_of(params: Mapping[str, np.ndarray]) -> Dict[str, Tuple[int, ...]]:
    return {name: tuple(np.shape(v)) for name, v in params.items()}
