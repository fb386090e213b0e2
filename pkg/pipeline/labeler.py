"""
자기 지도 라벨러 (self-supervised labeler)
==========================================

사람이 라벨을 달지 않습니다. 로봇이 기록한 센서 값만 보고
"그때 무슨 일이 있었는지"를 나중에 계산합니다.

[사건(event) 3가지]
    ┌──────────┬────────────────────────────────────────────────┐
    │ 충돌     │ 수집 중 충돌 감지기가 울렸는가? (그대로 사용)  │
    │ 울퉁불퉁 │ IMU 각속도 − |명령 각속도| > 기준값?           │
    │ 위치     │ 창(window) 시작 자세 기준 오도메트리 위치      │
    └──────────┴────────────────────────────────────────────────┘

[기록과 라벨의 짝]
기록 t = (관측 o_t, 행동 a_t). 행동 a_t의 결과는 기록 t+1에 나타납니다.

    기록:   t      t+1     t+2    ...   t+H
    행동:   a_t    a_t+1   a_t+2
    결과:          e_0     e_1    ...   e_H-1

[학습 샘플]
시작 스텝 t에서 H 스텝짜리 창을 만듭니다:
    관측 o_t, 행동 a_t..a_t+H-1, 사건 e_0..e_H-1

창은 에피소드 경계를 넘지 않습니다. 에피소드 끝에 걸리면:
    - 충돌로 끝난 경우: 충돌 이후 모든 스텝 = 충돌 시점 값으로 고정 (유효)
    - 그냥 끝난 경우(수집 종료): 남은 스텝은 무효(mask = 0)
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import halfnorm

from config.loader import LabelerConfig, SimulatorConfig
from core.collision import DetectorMode
from core.errors import DatasetError, LabelModeMismatchError
from core.geometry import relative_poses
from pipeline.dataset import EpisodeDataset, RawRecord
from simulator.engine import SensorFrame
from simulator.terrain import TerrainCell, default_legend

logger = logging.getLogger(__name__)

Records = Union[EpisodeDataset, Sequence[RawRecord]]


def _as_dataset(records: Records) -> EpisodeDataset:
    if isinstance(records, EpisodeDataset):
        return records
    return EpisodeDataset.from_records(list(records))


@dataclass
class EventLabel:
    collision: int
    bumpy: int
    position: tuple


@dataclass
class TrainingSample:
    """학습 샘플 하나 (SampleSet에서 꺼낸 보기용 형태)"""

    observation: SensorFrame
    actions: np.ndarray          # (H, 2)
    labels: List[EventLabel]     # 길이 H
    mask: np.ndarray             # (H,)


# ============================================================
# 사건별 라벨
# ============================================================
def label_collision(records: Records, mode: DetectorMode) -> np.ndarray:
    """
    충돌 라벨 = 수집 중 기록된 충돌 감지 비트

    수집할 때 쓴 감지 방식과 다른 방식으로 라벨링하려 하면
    LabelModeMismatchError (라벨이 수집과 어긋나면 안 됨)
    """
    dataset = _as_dataset(records)
    mode = DetectorMode.parse(mode)
    recorded = dataset.detector_modes()
    if any(m != mode for m in recorded):
        raise LabelModeMismatchError(
            f"수집 감지 방식 {[m.value for m in recorded]}과 라벨링 방식 {mode.value}이 다릅니다"
        )
    return dataset.arrays["collision_detector_fired"].astype(np.int8).copy()


def label_bumpiness(records: Records, threshold_w: float) -> np.ndarray:
    """
    울퉁불퉁 라벨

        bumpy[t] = 1  ⟺  imu_w_mag[t] − |commanded_w[t]| > threshold_w

    일부러 회전한 만큼(명령 각속도)은 빼고 판단합니다.
    """
    dataset = _as_dataset(records)
    excess = dataset.arrays["imu_w_mag"] - np.abs(dataset.arrays["commanded_w"])
    return (excess > threshold_w).astype(np.int8)


def label_position(records: Records) -> np.ndarray:
    """
    위치 라벨: 첫 기록의 오도메트리 자세를 원점(방향 0)으로 하는 (x, y)

    Returns:
        (L, 2) 배열, 첫 줄은 (0, 0)
    """
    dataset = _as_dataset(records)
    a = dataset.arrays
    poses = np.stack([a["odom_x"], a["odom_y"], a["odom_heading"]], axis=-1)
    origin = tuple(float(v) for v in poses[0])
    return relative_poses(origin, poses)[:, :2]


# ============================================================
# 데이터셋 전체 라벨링
# ============================================================
def label_dataset(
    dataset: EpisodeDataset,
    cfg: Optional[LabelerConfig] = None,
    mode: Optional[DetectorMode] = None,
) -> EpisodeDataset:
    """
    충돌/울퉁불퉁 라벨 배열을 추가한 데이터셋을 반환합니다.

    mode가 None이면 각 기록에 적힌 감지 방식을 그대로 사용하고,
    지정하면 모든 기록이 그 방식으로 수집되었는지 확인합니다.
    """
    cfg = cfg or LabelerConfig()
    if mode is not None:
        collision = label_collision(dataset, mode)
    else:
        collision = dataset.arrays["collision_detector_fired"].astype(np.int8).copy()
    bumpy = label_bumpiness(dataset, cfg.bump_threshold)

    manifest = {
        "kind": "labeled",
        "horizon": cfg.horizon,
        "bump_threshold": cfg.bump_threshold,
        "records": len(dataset),
        "episodes": len(dataset.episode_bounds()),
        "collision_rate": float(collision.mean()) if len(collision) else 0.0,
        "bumpy_rate": float(bumpy.mean()) if len(bumpy) else 0.0,
        "detector_modes": [m.value for m in dataset.detector_modes()],
    }
    logger.info(
        "라벨링 완료: 기록 %d, 충돌 비율 %.4f, 울퉁불퉁 비율 %.4f",
        manifest["records"], manifest["collision_rate"], manifest["bumpy_rate"],
    )
    return dataset.with_arrays({"label_collision": collision, "label_bumpy": bumpy}, {"labels": manifest})


# ============================================================
# 학습 샘플 만들기
# ============================================================
class SampleSet:
    """
    모든 학습 샘플을 배열로 묶은 것

    관측은 복사하지 않고 데이터셋 기록 번호(obs_index)로 가리킵니다.

    배열 모양 (M = 샘플 수, H = 예측 구간):
        obs_index   (M,)
        actions     (M, H, 2)
        collision   (M, H)
        bumpy       (M, H)
        position    (M, H, 2)
        mask        (M, H)
        episode     (M,)
    """

    def __init__(self, dataset: EpisodeDataset, horizon: int, arrays: Dict[str, np.ndarray]):
        self.dataset = dataset
        self.horizon = horizon
        self.obs_index = arrays["obs_index"]
        self.actions = arrays["actions"]
        self.collision = arrays["collision"]
        self.bumpy = arrays["bumpy"]
        self.position = arrays["position"]
        self.mask = arrays["mask"]
        self.episode = arrays["episode"]

    def __len__(self) -> int:
        return int(len(self.obs_index))

    def __getitem__(self, k: int) -> TrainingSample:
        labels = [
            EventLabel(
                collision=int(self.collision[k, h]),
                bumpy=int(self.bumpy[k, h]),
                position=(float(self.position[k, h, 0]), float(self.position[k, h, 1])),
            )
            for h in range(self.horizon)
        ]
        return TrainingSample(
            observation=self.dataset.frame(int(self.obs_index[k])),
            actions=self.actions[k],
            labels=labels,
            mask=self.mask[k],
        )


def build_samples(dataset: EpisodeDataset, horizon: int) -> SampleSet:
    """
    라벨링된 데이터셋에서 학습 샘플을 만듭니다.

    [규칙]
    1. 에피소드마다 t = start .. stop-2 (다음 기록이 있는 모든 t) → 샘플 1개
       → 에피소드 길이 L이면 샘플 L-1개
    2. 스텝 h의 사건 = 기록 t+h+1의 라벨
    3. 에피소드 끝을 넘는 스텝은 마지막 기록 값으로 채움
       - 마지막 기록이 충돌이면 유효 (충돌은 끝난 뒤에도 계속 충돌)
       - 아니면 무효 (mask = 0)
    4. 창 안에서 충돌이 처음 나온 스텝 h_c 이후는
       충돌 = 1, 울퉁불퉁/위치 = h_c 시점 값으로 고정
    """
    if horizon < 1:
        raise DatasetError(f"horizon은 1 이상이어야 합니다: {horizon}")
    if not dataset.has_labels:
        raise DatasetError("라벨이 없는 데이터셋입니다. 먼저 label_dataset을 실행하세요")

    a = dataset.arrays
    coll_all = a["label_collision"].astype(np.int8)
    bump_all = a["label_bumpy"].astype(np.int8)
    act_all = a["action"]
    poses_all = np.stack([a["odom_x"], a["odom_y"], a["odom_heading"]], axis=-1)
    offsets = np.arange(horizon)

    parts: Dict[str, List[np.ndarray]] = {k: [] for k in
                                          ("obs_index", "actions", "collision", "bumpy", "position", "mask", "episode")}
    for episode_no, (start, stop) in enumerate(dataset.episode_bounds()):
        last = stop - 1
        if last <= start:
            continue
        t = np.arange(start, last)                       # (n,)
        target = t[:, None] + 1 + offsets[None, :]       # 사건을 읽을 기록 번호 (n, H)
        real = target <= last
        target_c = np.minimum(target, last)

        # 실행된 행동: a_t+h (t+h ≤ last-1), 넘어가면 마지막 실행 행동 반복
        act_idx = np.minimum(t[:, None] + offsets[None, :], last - 1)
        actions = act_all[act_idx]

        coll = coll_all[target_c]
        # 충돌은 흡수 상태: 한 번 1이면 이후 계속 1
        absorbed = np.maximum.accumulate(coll, axis=1)
        first_hit = np.where(absorbed.any(axis=1), absorbed.argmax(axis=1), horizon)
        freeze = np.minimum(offsets[None, :], first_hit[:, None])
        frozen_target = np.take_along_axis(target_c, freeze, axis=1)

        bumpy = bump_all[frozen_target]
        # 창 시작 자세 기준 위치
        origin = poses_all[t]
        rel = poses_all[frozen_target] - origin[:, None, :]
        c, s = np.cos(origin[:, 2])[:, None], np.sin(origin[:, 2])[:, None]
        position = np.stack([c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]], axis=-1)

        mask = (real | (absorbed == 1)).astype(np.float64)

        parts["obs_index"].append(t)
        parts["actions"].append(actions)
        parts["collision"].append(absorbed.astype(np.int8))
        parts["bumpy"].append(bumpy.astype(np.int8))
        parts["position"].append(position)
        parts["mask"].append(mask)
        parts["episode"].append(np.full(len(t), episode_no, dtype=np.int64))

    if not parts["obs_index"]:
        raise DatasetError("학습 샘플을 만들 수 있는 에피소드가 없습니다 (모든 에피소드 길이 ≤ 1)")
    arrays = {k: np.concatenate(v) for k, v in parts.items()}
    return SampleSet(dataset, horizon, arrays)


# ============================================================
# 울퉁불퉁 기준값 보정
# ============================================================
def calibrate_bump_threshold(
    threshold_w: float,
    speed: float,
    sim: Optional[SimulatorConfig] = None,
    legend: Optional[Dict[str, TerrainCell]] = None,
) -> Dict[str, float]:
    """
    지형 종류별 "울퉁불퉁" 판정 비율의 기댓값

    [원리 설명]
    잡음 η ~ HalfNormal(scale), scale = bump_gain × 울퉁불퉁함 × 속도
    P(η > 기준값) = halfnorm.sf(기준값, scale)

    기본값(기준 0.5, 속도 1m/s)에서
        잔디 약 40%, 콘크리트 약 1~2%

    Returns:
        {지형 이름: 비율}
    """
    sim = sim or SimulatorConfig()
    legend = legend or default_legend()
    rates: Dict[str, float] = {}
    for cell in legend.values():
        scale = sim.bump_gain * cell.bumpiness_coeff * abs(speed)
        rate = float(halfnorm.sf(threshold_w, scale=scale)) if scale > 0 else 0.0
        rates[cell.visual_class.label] = rate
    return dict(sorted(rates.items()))
