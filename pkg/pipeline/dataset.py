"""
데이터셋 모듈
==============

수집한 기록(RawRecord)을 배열 묶음으로 저장하고 읽습니다.

[저장 구조]
기록 하나 = (관측 o_t, 행동 a_t, 에피소드 번호, 충돌 감지 여부, 감지 방식)

    기록 번호:     0    1    2    3  │  4    5    6 ...
    episode_id:    0    0    0    0  │  1    1    1
    충돌 감지:     0    0    0    1  │  0    0    0
                                  ↑
                       충돌 → 복구 동작 → 새 에피소드

배열 이름은 SensorFrame 필드 이름과 같습니다 (cam_obstacle_class 등).
라벨링 후에는 label_collision, label_bumpy 배열이 추가됩니다.

정답(gt_*) 값은 이 데이터셋에 절대 들어가지 않습니다.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.archive import read_archive, write_archive
from core.collision import DetectorMode
from core.errors import DatasetError
from simulator.engine import SensorFrame

logger = logging.getLogger(__name__)

# SensorFrame 배열 필드 → dtype
FRAME_ARRAY_FIELDS = {
    "cam_obstacle_class": np.int8,
    "cam_obstacle_dist": np.float64,
    "cam_ground_class": np.int8,
    "range_scan": np.float64,
}

# SensorFrame 스칼라 필드
FRAME_SCALAR_FIELDS = (
    "imu_w_mag",
    "imu_a_mag",
    "odom_x",
    "odom_y",
    "odom_heading",
    "wheel_v",
    "wheel_w",
    "commanded_v",
    "commanded_w",
)

# 기록 단위 필드 → dtype
RECORD_FIELDS = {
    "timestamp": np.int64,
    "action": np.float64,
    "episode_id": np.int64,
    "collision_detector_fired": np.int8,
    "detector_mode": np.int8,
}

LABEL_FIELDS = ("label_collision", "label_bumpy")

_MODE_CODES = {DetectorMode.RANGE: 0, DetectorMode.INERTIAL: 1}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


@dataclass
class RawRecord:
    """수집 기록 한 줄 (로봇이 볼 수 있는 값만)"""

    timestamp: int
    frame: SensorFrame
    action: Tuple[float, float]
    episode_id: int
    collision_detector_fired: bool
    detector_mode: DetectorMode


class EpisodeDataset:
    """
    기록 배열 묶음

    [사용 예시]
    dataset = EpisodeDataset.from_records(records)
    dataset.save("outputs/collect/urban.shard")
    for start, stop in dataset.episode_bounds():
        ...
    """

    def __init__(self, arrays: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None):
        self.arrays = arrays
        self.meta = dict(meta or {})
        required = list(FRAME_ARRAY_FIELDS) + list(FRAME_SCALAR_FIELDS) + list(RECORD_FIELDS)
        missing = [name for name in required if name not in arrays]
        if missing:
            raise DatasetError(f"데이터셋에 필요한 배열이 없습니다: {missing}")
        lengths = {name: len(arr) for name, arr in arrays.items()}
        if len(set(lengths.values())) > 1:
            raise DatasetError(f"배열 길이가 서로 다릅니다: {lengths}")
        self._check_contiguous()

    def _check_contiguous(self):
        """에피소드 번호는 연속 구간이어야 합니다 (같은 에피소드가 흩어지면 안 됨)"""
        ids = self.arrays["episode_id"]
        if len(ids) == 0:
            return
        starts = np.concatenate([[True], ids[1:] != ids[:-1]])
        if len(np.unique(ids)) != int(starts.sum()):
            raise DatasetError("같은 episode_id가 연속되지 않은 구간에 나타납니다")

    # --------------------------------------------------------
    # 생성
    # --------------------------------------------------------
    @classmethod
    def from_records(cls, records: Sequence[RawRecord], meta: Optional[Dict[str, Any]] = None) -> "EpisodeDataset":
        if not records:
            raise DatasetError("기록이 비어 있습니다")
        arrays: Dict[str, np.ndarray] = {}
        for name, dtype in FRAME_ARRAY_FIELDS.items():
            arrays[name] = np.stack([getattr(r.frame, name) for r in records]).astype(dtype)
        for name in FRAME_SCALAR_FIELDS:
            arrays[name] = np.array([getattr(r.frame, name) for r in records], dtype=np.float64)
        arrays["timestamp"] = np.array([r.timestamp for r in records], dtype=np.int64)
        arrays["action"] = np.array([r.action for r in records], dtype=np.float64).reshape(-1, 2)
        arrays["episode_id"] = np.array([r.episode_id for r in records], dtype=np.int64)
        arrays["collision_detector_fired"] = np.array(
            [r.collision_detector_fired for r in records], dtype=np.int8
        )
        arrays["detector_mode"] = np.array(
            [_MODE_CODES[DetectorMode.parse(r.detector_mode)] for r in records], dtype=np.int8
        )
        return cls(arrays, meta)

    # --------------------------------------------------------
    # 조회
    # --------------------------------------------------------
    def __len__(self) -> int:
        return int(len(self.arrays["timestamp"]))

    def __iter__(self) -> Iterator[RawRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def frame(self, i: int) -> SensorFrame:
        a = self.arrays
        return SensorFrame(
            cam_obstacle_class=a["cam_obstacle_class"][i],
            cam_obstacle_dist=a["cam_obstacle_dist"][i],
            cam_ground_class=a["cam_ground_class"][i],
            range_scan=a["range_scan"][i],
            **{name: float(a[name][i]) for name in FRAME_SCALAR_FIELDS},
        )

    def record(self, i: int) -> RawRecord:
        a = self.arrays
        return RawRecord(
            timestamp=int(a["timestamp"][i]),
            frame=self.frame(i),
            action=(float(a["action"][i, 0]), float(a["action"][i, 1])),
            episode_id=int(a["episode_id"][i]),
            collision_detector_fired=bool(a["collision_detector_fired"][i]),
            detector_mode=_CODE_MODES[int(a["detector_mode"][i])],
        )

    def episode_bounds(self) -> List[Tuple[int, int]]:
        """에피소드별 [start, stop) 구간"""
        ids = self.arrays["episode_id"]
        if len(ids) == 0:
            return []
        cuts = np.flatnonzero(ids[1:] != ids[:-1]) + 1
        edges = np.concatenate([[0], cuts, [len(ids)]])
        return [(int(edges[k]), int(edges[k + 1])) for k in range(len(edges) - 1)]

    def detector_modes(self) -> List[DetectorMode]:
        codes = np.unique(self.arrays["detector_mode"])
        return [_CODE_MODES[int(c)] for c in codes]

    @property
    def has_labels(self) -> bool:
        return all(name in self.arrays for name in LABEL_FIELDS)

    def subset(self, start: int, stop: int) -> "EpisodeDataset":
        return EpisodeDataset({k: v[start:stop] for k, v in self.arrays.items()}, self.meta)

    def with_arrays(self, extra: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> "EpisodeDataset":
        arrays = dict(self.arrays)
        arrays.update(extra)
        merged_meta = dict(self.meta)
        merged_meta.update(meta or {})
        return EpisodeDataset(arrays, merged_meta)

    # --------------------------------------------------------
    # 병합 / 저장
    # --------------------------------------------------------
    @staticmethod
    def concat(datasets: Sequence["EpisodeDataset"]) -> "EpisodeDataset":
        """
        여러 데이터셋을 이어 붙입니다.
        서로 다른 데이터셋의 에피소드가 합쳐지지 않도록 episode_id를 새로 매깁니다.
        """
        if not datasets:
            raise DatasetError("합칠 데이터셋이 없습니다")
        keys = set(datasets[0].arrays)
        if any(set(d.arrays) != keys for d in datasets):
            raise DatasetError("합칠 데이터셋의 배열 구성이 다릅니다")

        parts: Dict[str, List[np.ndarray]] = {k: [] for k in keys}
        offset = 0
        for dataset in datasets:
            for k in keys:
                arr = dataset.arrays[k]
                if k == "episode_id" and len(arr):
                    # 등장 순서대로 0, 1, 2, ... 후 앞 데이터셋 뒤로 밀기
                    arr = np.concatenate([[0], np.cumsum(arr[1:] != arr[:-1])]).astype(np.int64) + offset
                parts[k].append(arr)
            if len(dataset):
                offset = int(parts["episode_id"][-1][-1]) + 1
        arrays = {k: np.concatenate(v) for k, v in parts.items()}
        meta = {"sources": [d.meta for d in datasets]}
        return EpisodeDataset(arrays, meta)

    def save(self, path: str) -> str:
        """저장 후 파일 해시를 반환합니다."""
        digest = write_archive(path, self.arrays, self.meta)
        logger.info("데이터셋 저장: %s (%d개 기록, sha256=%s)", path, len(self), digest[:12])
        return digest

    @classmethod
    def load(cls, path: str) -> "EpisodeDataset":
        arrays, meta = read_archive(path)
        meta.pop("format_version", None)
        return cls(arrays, meta)
