"""
설정 파일 로더
==============

config/settings.py의 기본값을 모듈별 pydantic 모델로 묶고,
YAML 설정 파일로 일부 값을 덮어쓸 수 있게 합니다.

[설정 파일 예시] (config.yaml)

    simulator:
      dt: 0.25
      v_max: 2.0
    planner:
      samples: 128
    reward:
      alpha_bum: 0.0

- 적지 않은 항목은 settings.py 기본값을 그대로 사용합니다.
- 모르는 키가 있으면 ConfigError (오타 방지)
"""

import os
from typing import Any, Dict, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import settings
from core.archive import json_fingerprint
from core.errors import ConfigError


class _Section(BaseModel):
    """모든 설정 구역의 공통 규칙: 모르는 키 거부, 생성 후 변경 불가"""

    model_config = ConfigDict(extra="forbid", frozen=True)


class SimulatorConfig(_Section):
    dt: float = Field(settings.SIM_DT, gt=0)
    v_max: float = Field(settings.V_MAX, gt=0)
    w_max: float = Field(settings.W_MAX, gt=0)
    bump_gain: float = Field(settings.BUMP_GAIN, ge=0)
    accel_noise_ratio: float = Field(settings.ACCEL_NOISE_RATIO, ge=0)
    odom_noise_pos: float = Field(settings.ODOM_NOISE_POS, ge=0)
    odom_noise_heading: float = Field(settings.ODOM_NOISE_HEADING, ge=0)
    camera_fov_deg: float = Field(settings.CAMERA_FOV_DEG, gt=0, le=360)
    camera_rays: int = Field(settings.CAMERA_RAYS, ge=1)
    ground_lookaheads: Tuple[float, ...] = settings.GROUND_LOOKAHEADS
    range_rays: int = Field(settings.RANGE_RAYS, ge=1)
    max_range: float = Field(settings.MAX_RANGE, gt=0)
    range_noise_std: float = Field(settings.RANGE_NOISE_STD, ge=0)
    ray_step_fraction: float = Field(settings.RAY_STEP_FRACTION, gt=0, le=1)

    @field_validator("ground_lookaheads")
    @classmethod
    def _positive_lookaheads(cls, value):
        if not value or any(d <= 0 for d in value):
            raise ValueError("ground_lookaheads는 양수 거리 목록이어야 합니다")
        return tuple(float(d) for d in value)


class CollectorConfig(_Section):
    steps: int = Field(settings.COLLECT_STEPS, ge=1)
    correlation: float = Field(settings.COLLECT_CORRELATION, ge=0, lt=1)
    v_range: Tuple[float, float] = settings.COLLECT_V_RANGE
    w_range: Tuple[float, float] = settings.COLLECT_W_RANGE
    d_near: float = Field(settings.COLLISION_NEAR_DISTANCE, gt=0)
    v_cmd_min: float = Field(settings.STUCK_CMD_MIN_SPEED, ge=0)
    v_stuck: float = Field(settings.STUCK_SPEED, ge=0)
    backup_steps: int = Field(settings.RESET_BACKUP_STEPS, ge=0)
    backup_speed: float = Field(settings.RESET_BACKUP_SPEED, ge=0)
    rotate_min_deg: float = Field(settings.RESET_ROTATE_MIN_DEG, ge=0)
    rotate_max_deg: float = Field(settings.RESET_ROTATE_MAX_DEG, ge=0)
    max_attempts: int = Field(settings.RESET_MAX_ATTEMPTS, ge=1)

    @model_validator(mode="after")
    def _ordered_ranges(self):
        for name in ("v_range", "w_range"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name}: 하한({low})이 상한({high})보다 큽니다")
        if self.rotate_min_deg > self.rotate_max_deg:
            raise ValueError("rotate_min_deg가 rotate_max_deg보다 큽니다")
        return self


class LabelerConfig(_Section):
    bump_threshold: float = Field(settings.BUMP_THRESHOLD, ge=0)
    horizon: int = Field(settings.HORIZON, ge=1)
    calibration_speed: float = Field(settings.BUMP_CALIBRATION_SPEED, gt=0)


class ModelConfig(_Section):
    encoder_sizes: Tuple[int, ...] = settings.ENCODER_SIZES
    rnn_hidden: int = Field(settings.RNN_HIDDEN, ge=1)
    action_embed: int = Field(settings.ACTION_EMBED, ge=1)
    output_hidden: int = Field(settings.OUTPUT_HIDDEN, ge=1)
    horizon: int = Field(settings.HORIZON, ge=1)

    @model_validator(mode="after")
    def _encoder_matches_hidden(self):
        # 인코더 마지막 층 = 순환 셀 초기 은닉 상태
        if not self.encoder_sizes or self.encoder_sizes[-1] != self.rnn_hidden:
            raise ValueError(
                f"encoder_sizes의 마지막 값({self.encoder_sizes})은 rnn_hidden({self.rnn_hidden})과 같아야 합니다"
            )
        return self


class TrainingConfig(_Section):
    learning_rate: float = Field(settings.LEARNING_RATE, gt=0)
    beta1: float = Field(settings.ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(settings.ADAM_BETA2, ge=0, lt=1)
    eps: float = Field(settings.ADAM_EPS, gt=0)
    batch_size: int = Field(settings.BATCH_SIZE, ge=1)
    max_epochs: int = Field(settings.MAX_EPOCHS, ge=1)
    patience: int = Field(settings.EARLY_STOP_PATIENCE, ge=1)
    validation_fraction: float = Field(settings.VALIDATION_FRACTION, gt=0, lt=1)
    position_weight: float = Field(settings.POSITION_LOSS_WEIGHT, ge=0)
    collision_positive_ratio: float = Field(settings.COLLISION_POSITIVE_RATIO, gt=0)


class PlannerConfig(_Section):
    samples: int = Field(settings.PLANNER_SAMPLES, ge=1)
    horizon: int = Field(settings.HORIZON, ge=1)
    sigma: Tuple[float, float] = settings.PLANNER_SIGMA
    beta: float = Field(settings.PLANNER_BETA, ge=0, le=1)
    gamma: float = Field(settings.PLANNER_GAMMA, gt=0)
    trap_window: int = Field(settings.TRAP_WINDOW_STEPS, ge=1)
    trap_min_displacement: float = Field(settings.TRAP_MIN_DISPLACEMENT, ge=0)

    @field_validator("sigma")
    @classmethod
    def _nonnegative_sigma(cls, value):
        if any(s < 0 for s in value):
            raise ValueError("sigma는 0 이상이어야 합니다")
        return value


class RewardConfig(_Section):
    alpha_pos: float = Field(settings.ALPHA_POS, ge=0)
    alpha_bum: float = Field(settings.ALPHA_BUM_URBAN, ge=0)
    # 세계 좌표계 목표 지점 (GPS 좌표 대응). None이면 지도 목표 영역 중심 사용
    goal: Optional[Tuple[float, float]] = None


class BaselineConfig(_Section):
    clearance: float = Field(settings.LIDAR_CLEARANCE, gt=0)
    naive_speed: float = Field(settings.NAIVE_SPEED, ge=0)
    naive_gain: float = Field(settings.NAIVE_GAIN, ge=0)


class HarnessConfig(_Section):
    starts: int = Field(settings.EVAL_STARTS, ge=1)
    trials_per_start: int = Field(settings.EVAL_TRIALS_PER_START, ge=1)
    max_steps: int = Field(settings.EVAL_MAX_STEPS, ge=1)
    self_improve_target_steps: int = Field(settings.SELF_IMPROVE_TARGET_STEPS, ge=1)
    output_dir: Optional[str] = None


class AppConfig(_Section):
    """전체 설정 - 모듈별 구역의 묶음"""

    simulator: SimulatorConfig = SimulatorConfig()
    collector: CollectorConfig = CollectorConfig()
    labeler: LabelerConfig = LabelerConfig()
    model: ModelConfig = ModelConfig()
    training: TrainingConfig = TrainingConfig()
    planner: PlannerConfig = PlannerConfig()
    reward: RewardConfig = RewardConfig()
    baselines: BaselineConfig = BaselineConfig()
    harness: HarnessConfig = HarnessConfig()

    @model_validator(mode="after")
    def _horizons_agree(self):
        horizons = {self.labeler.horizon, self.model.horizon, self.planner.horizon}
        if len(horizons) != 1:
            raise ValueError(
                f"labeler/model/planner의 horizon이 서로 다릅니다: "
                f"{self.labeler.horizon}, {self.model.horizon}, {self.planner.horizon}"
            )
        return self

    def fingerprint(self, section: str) -> str:
        """설정 구역 하나의 해시 (파이프라인 캐시 키)"""
        if section not in type(self).model_fields:
            raise ConfigError(f"알 수 없는 설정 구역입니다: {section}")
        return json_fingerprint(getattr(self, section).model_dump(mode="json"))

    def with_overrides(self, **sections: Dict[str, Any]) -> "AppConfig":
        """일부 구역 값만 바꾼 새 설정을 반환합니다."""
        data = self.model_dump(mode="json")
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        return build_config(data)


def build_config(data: Optional[Dict[str, Any]]) -> AppConfig:
    """딕셔너리 → AppConfig. 검증 실패는 ConfigError로 변환합니다."""
    try:
        return AppConfig.model_validate(data or {})
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"설정 오류 [{key}]: {first['msg']}") from exc


def load_config(path: Optional[str] = None) -> AppConfig:
    """
    YAML 설정 파일을 읽습니다. path가 None이면 기본값만 사용합니다.
    """
    if path is None:
        return AppConfig()
    if not os.path.exists(path):
        raise ConfigError(f"설정 파일이 없습니다: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fid:
            data = yaml.safe_load(fid)
    except yaml.YAMLError as exc:
        raise ConfigError(f"설정 파일을 해석할 수 없습니다: {path} ({exc})") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"설정 파일 최상위는 구역 이름 → 값 형태여야 합니다: {path}")
    return build_config(data)


def resolve_output_dir(cli_value: Optional[str], config: Optional[AppConfig] = None) -> str:
    """
    출력 폴더 결정 순서: CLI --out-dir → 설정 파일 → 환경 변수 → ./outputs
    """
    if cli_value:
        return cli_value
    if config is not None and config.harness.output_dir:
        return config.harness.output_dir
    return os.environ.get(settings.OUTPUT_DIR_ENV, settings.DEFAULT_OUTPUT_DIR)
