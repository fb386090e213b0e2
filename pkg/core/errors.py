"""
예외 클래스 모음
================

시스템에서 발생하는 모든 오류는 NavError를 상속합니다.
CLI(run.py)는 NavError를 잡아서 한 줄 메시지로 보여주고 종류별 종료 코드를 반환합니다.
(설정 2, 데이터/파일/지도 3, 학습 발산 4, 그 밖 1. StageError는 원인 예외 기준)

    NavError
    ├── ConfigError             설정 파일/값 오류
    ├── ShapeError              텐서 모양 불일치 (연산 이름과 모양 포함)
    ├── NonFiniteError          NaN/Inf 발생 (기울기, 손실, 보상)
    │   └── TrainingDivergedError   학습 발산 (문제 배치 번호 포함)
    ├── LabelModeMismatchError  수집 시 충돌 감지 방식과 라벨링 방식 불일치
    ├── MapGenerationError      경로가 있는 지도를 만들지 못함
    ├── MapFormatError          지도 파일 형식 오류
    ├── DatasetError            데이터셋/체크포인트 저장·읽기 오류
    └── StageError              파이프라인 단계 실패 (단계 이름 포함)
"""

from typing import Optional


class NavError(Exception):
    """모든 시스템 예외의 부모 클래스"""


class ConfigError(NavError):
    pass


class ShapeError(NavError):
    """텐서 모양이 연산과 맞지 않을 때"""

    def __init__(self, primitive: str, *shapes):
        self.primitive = primitive
        self.shapes = shapes
        shape_text = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{primitive}: 모양이 맞지 않습니다 ({shape_text})")


class NonFiniteError(NavError):
    pass


class TrainingDivergedError(NonFiniteError):
    """학습 중 손실이 NaN/Inf가 되었을 때"""

    def __init__(self, batch_id: int, epoch: Optional[int] = None):
        self.batch_id = batch_id
        self.epoch = epoch
        super().__init__(f"학습 발산: epoch={epoch}, batch={batch_id}에서 손실이 유한하지 않습니다")


class LabelModeMismatchError(NavError):
    pass


class MapGenerationError(NavError):
    pass


class MapFormatError(NavError):
    pass


class DatasetError(NavError):
    pass


class StageError(NavError):
    """파이프라인 단계 실패 - 어느 단계에서 실패했는지 함께 전달"""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] 단계 실패: {cause}")
