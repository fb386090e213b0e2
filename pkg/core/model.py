"""
행동 조건부 예측 모델
=====================

"지금 보이는 장면(o_t)에서 앞으로 H 스텝 동안 이런 행동들(a_t..a_t+H-1)을
하면, 각 스텝에서 무슨 일이 생길까?"를 예측합니다.

[구조]

    카메라 관측 o_t
        │  (종류 one-hot + 거리 + 바닥 종류 one-hot, 길이 1152)
        ▼
    인코더 (128 → 64, 마지막 층 tanh)
        │
        ▼  초기 은닉 상태 h_0
    ┌───────┐   ┌───────┐         ┌───────┐
    │  GRU  │──▶│  GRU  │── ... ─▶│  GRU  │
    └───┬───┘   └───┬───┘         └───┬───┘
        ▲ 행동 a_t  ▲ a_t+1           ▲ a_t+H-1   (정규화 후 16차원 임베딩)
        │           │                 │
        ▼           ▼                 ▼
      출력층       출력층            출력층  (64 → 32 → 4)
    [충돌 로짓, 울퉁불퉁 로짓, Δx, Δy]

    위치 = Δ의 누적합 (창 시작 자세 기준, 미터)

[입력 제한]
거리 센서(range_scan)는 절대 입력으로 쓰지 않습니다.
학습 모델은 카메라만 보고 판단합니다.

[손실 함수]
    L = 평균_샘플 [ BCE(충돌) + BCE(울퉁불퉁) + λ·‖위치 오차‖² ]
각 항은 샘플마다 유효 스텝(mask=1)에 대해서만 평균합니다.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from config.loader import ModelConfig, SimulatorConfig
from core import diffnet as dn
from core.errors import DatasetError, NonFiniteError, ShapeError
from simulator.engine import SensorFrame
from simulator.terrain import NUM_VISUAL_CLASSES

logger = logging.getLogger(__name__)

NUM_EVENT_OUTPUTS = 4   # 충돌 로짓, 울퉁불퉁 로짓, Δx, Δy


# ============================================================
# 관측 → 특징 벡터
# ============================================================
def _one_hot(classes: np.ndarray) -> np.ndarray:
    """지형 종류 → one-hot. NO_HIT(−1)은 전부 0"""
    classes = np.asarray(classes, dtype=np.int64)
    eye = np.eye(NUM_VISUAL_CLASSES)
    out = eye[np.clip(classes, 0, NUM_VISUAL_CLASSES - 1)]
    out[classes < 0] = 0.0
    return out


def observation_features(
    cam_obstacle_class: np.ndarray,
    cam_obstacle_dist: np.ndarray,
    cam_ground_class: np.ndarray,
) -> np.ndarray:
    """
    카메라 필드 묶음 (B, W), (B, W), (B, W, D) → (B, F)

    F = W·7 + W + W·D·7
    """
    cls = np.asarray(cam_obstacle_class)
    dist = np.asarray(cam_obstacle_dist, dtype=np.float64)
    ground = np.asarray(cam_ground_class)
    batch = cls.shape[0]
    return np.concatenate(
        [
            _one_hot(cls).reshape(batch, -1),
            dist.reshape(batch, -1),
            _one_hot(ground).reshape(batch, -1),
        ],
        axis=1,
    )


def frame_features(frame: SensorFrame) -> np.ndarray:
    """SensorFrame 하나 → (F,)"""
    return observation_features(
        frame.cam_obstacle_class[None],
        frame.cam_obstacle_dist[None],
        frame.cam_ground_class[None],
    )[0]


def feature_size(camera_rays: int, ground_depth: int) -> int:
    return camera_rays * NUM_VISUAL_CLASSES + camera_rays + camera_rays * ground_depth * NUM_VISUAL_CLASSES


# ============================================================
# 예측 결과
# ============================================================
@dataclass
class EventPrediction:
    """행동 시퀀스 하나에 대한 H 스텝 예측"""

    p_coll: np.ndarray   # (H,) [0, 1]
    p_bump: np.ndarray   # (H,) [0, 1]
    pos: np.ndarray      # (H, 2) 로컬 좌표 (m)

    @property
    def horizon(self) -> int:
        return int(len(self.p_coll))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_coll": [round(float(p), 6) for p in self.p_coll],
            "p_bump": [round(float(p), 6) for p in self.p_bump],
            "pos": [[round(float(x), 6), round(float(y), 6)] for x, y in self.pos],
        }


@dataclass
class EventPredictionBatch:
    """N개 행동 시퀀스에 대한 예측 묶음"""

    p_coll: np.ndarray   # (N, H)
    p_bump: np.ndarray   # (N, H)
    pos: np.ndarray      # (N, H, 2)

    def __len__(self) -> int:
        return int(self.p_coll.shape[0])

    def __getitem__(self, n: int) -> EventPrediction:
        return EventPrediction(self.p_coll[n], self.p_bump[n], self.pos[n])


@dataclass
class ForwardOutput:
    """학습용 순방향 결과 (텐서, 기울기 추적 가능)"""

    coll_logits: dn.Tensor   # (B, H)
    bump_logits: dn.Tensor   # (B, H)
    pos_x: dn.Tensor         # (B, H)
    pos_y: dn.Tensor         # (B, H)


# ============================================================
# 모델
# ============================================================
def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class PredictiveModel:
    """
    예측 모델 f_θ(o_t, a_t:t+H) → 사건 예측

    [사용 예시]
    model = PredictiveModel.from_configs(ModelConfig(), SimulatorConfig())
    model.initialize(seed=0)
    pred = model.predict(frame, actions)      # actions: (H, 2)
    batch = model.predict_batch(frame, many)  # many: (N, H, 2)
    """

    def __init__(
        self,
        cfg: ModelConfig,
        camera_rays: int,
        ground_depth: int,
        action_scale: Tuple[float, float],
    ):
        self.cfg = cfg
        self.camera_rays = int(camera_rays)
        self.ground_depth = int(ground_depth)
        self.action_scale = (float(action_scale[0]), float(action_scale[1]))
        self.obs_size = feature_size(self.camera_rays, self.ground_depth)
        self.store = dn.ParamStore()
        self._build(np.random.default_rng(0))

    @classmethod
    def from_configs(cls, cfg: ModelConfig, sim: SimulatorConfig) -> "PredictiveModel":
        return cls(cfg, sim.camera_rays, len(sim.ground_lookaheads), (sim.v_max, sim.w_max))

    @property
    def horizon(self) -> int:
        return self.cfg.horizon

    # --------------------------------------------------------
    # 파라미터
    # --------------------------------------------------------
    def _layer_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        sizes = (self.obs_size,) + tuple(self.cfg.encoder_sizes)
        for k in range(len(sizes) - 1):
            shapes[f"enc{k}/W"] = (sizes[k], sizes[k + 1])
            shapes[f"enc{k}/b"] = (sizes[k + 1],)
        hidden, embed = self.cfg.rnn_hidden, self.cfg.action_embed
        shapes["act/W"] = (2, embed)
        shapes["act/b"] = (embed,)
        for gate in ("z", "r", "h"):
            shapes[f"gru/W_{gate}"] = (embed, hidden)
            shapes[f"gru/U_{gate}"] = (hidden, hidden)
            shapes[f"gru/b_{gate}"] = (hidden,)
        shapes["out0/W"] = (hidden, self.cfg.output_hidden)
        shapes["out0/b"] = (self.cfg.output_hidden,)
        shapes["out1/W"] = (self.cfg.output_hidden, NUM_EVENT_OUTPUTS)
        shapes["out1/b"] = (NUM_EVENT_OUTPUTS,)
        return shapes

    def _build(self, rng: np.random.Generator) -> None:
        for name, shape in self._layer_shapes().items():
            if len(shape) == 2:
                self.store.add(name, glorot(rng, shape[0], shape[1]))
            else:
                self.store.add(name, np.zeros(shape))

    def initialize(self, seed: int) -> "PredictiveModel":
        """가중치는 Glorot 균등분포, 편향은 0. Adam 누적값도 초기화합니다."""
        rng = np.random.default_rng(seed)
        self.store = dn.ParamStore()
        self._build(rng)
        return self

    def parameter_count(self) -> int:
        return self.store.count()

    def _gru_params(self) -> Dict[str, dn.Tensor]:
        return {name: self.store[f"gru/{name}"] for name in dn.GRU_PARAM_NAMES}

    # --------------------------------------------------------
    # 순방향
    # --------------------------------------------------------
    def _encode(self, features: dn.Tensor) -> dn.Tensor:
        h = features
        n_layers = len(self.cfg.encoder_sizes)
        for k in range(n_layers):
            h = dn.add(dn.matmul(h, self.store[f"enc{k}/W"]), self.store[f"enc{k}/b"])
            h = dn.tanh(h) if k == n_layers - 1 else dn.relu(h)
        return h

    def _check_features(self, features: np.ndarray) -> None:
        if features.ndim != 2 or features.shape[1] != self.obs_size:
            raise ShapeError("encode_observation", features.shape, (None, self.obs_size))

    def _check_actions(self, actions: np.ndarray, batch: Optional[int] = None) -> None:
        if actions.ndim != 3 or actions.shape[1] != self.horizon or actions.shape[2] != 2:
            raise ShapeError("predict", actions.shape, (batch, self.horizon, 2))
        if batch is not None and actions.shape[0] != batch:
            raise ShapeError("predict", actions.shape, (batch, self.horizon, 2))

    def _unroll(self, h: dn.Tensor, actions: np.ndarray) -> ForwardOutput:
        scale = np.array(self.action_scale)
        gru = self._gru_params()
        coll, bump, dxs, dys = [], [], [], []
        for step in range(self.horizon):
            a = dn.Tensor(actions[:, step, :] / scale)
            e = dn.relu(dn.add(dn.matmul(a, self.store["act/W"]), self.store["act/b"]))
            h = dn.gru_cell(h, e, gru)
            z = dn.relu(dn.add(dn.matmul(h, self.store["out0/W"]), self.store["out0/b"]))
            out = dn.add(dn.matmul(z, self.store["out1/W"]), self.store["out1/b"])
            coll.append(dn.slice(out, 0, 1))
            bump.append(dn.slice(out, 1, 2))
            dxs.append(dn.slice(out, 2, 3))
            dys.append(dn.slice(out, 3, 4))

        # 누적합: pos_h = Δ_0 + ... + Δ_h
        pos_x, pos_y = [dxs[0]], [dys[0]]
        for step in range(1, self.horizon):
            pos_x.append(dn.add(pos_x[-1], dxs[step]))
            pos_y.append(dn.add(pos_y[-1], dys[step]))
        return ForwardOutput(
            coll_logits=dn.concat(coll),
            bump_logits=dn.concat(bump),
            pos_x=dn.concat(pos_x),
            pos_y=dn.concat(pos_y),
        )

    def forward(self, features: np.ndarray, actions: np.ndarray) -> ForwardOutput:
        """
        학습용 순방향 (Tape 안에서 호출하면 기울기 계산 가능)

        Args:
            features: (B, F) observation_features 결과
            actions: (B, H, 2) 실제 단위 (m/s, rad/s)
        """
        features = np.asarray(features, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        self._check_features(features)
        self._check_actions(actions, features.shape[0])
        h0 = self._encode(dn.Tensor(features))
        return self._unroll(h0, actions)

    def encode_observation(self, frame: SensorFrame) -> np.ndarray:
        """관측 → 은닉 상태 크기의 특징 벡터 (rnn_hidden,)"""
        features = frame_features(frame)[None]
        self._check_features(features)
        return self._encode(dn.Tensor(features)).data[0].copy()

    def predict_batch(self, frame: SensorFrame, actions: np.ndarray) -> EventPredictionBatch:
        """관측 하나 + 행동 시퀀스 N개 → 예측 N개 (관측 인코딩은 한 번만)"""
        actions = np.asarray(actions, dtype=np.float64)
        self._check_actions(actions)
        h0 = self.encode_observation(frame)
        h = dn.Tensor(np.repeat(h0[None], actions.shape[0], axis=0))
        out = self._unroll(h, actions)
        pos = np.stack([out.pos_x.data, out.pos_y.data], axis=-1)
        return EventPredictionBatch(
            p_coll=dn.logistic(out.coll_logits.data),
            p_bump=dn.logistic(out.bump_logits.data),
            pos=pos,
        )

    def predict(self, frame: SensorFrame, actions: np.ndarray) -> EventPrediction:
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.horizon, 2):
            raise ShapeError("predict", actions.shape, (self.horizon, 2))
        return self.predict_batch(frame, actions[None])[0]

    # --------------------------------------------------------
    # 저장 / 불러오기
    # --------------------------------------------------------
    def describe(self) -> Dict[str, Any]:
        return {
            "model_config": self.cfg.model_dump(mode="json"),
            "camera_rays": self.camera_rays,
            "ground_depth": self.ground_depth,
            "action_scale": list(self.action_scale),
            "obs_size": self.obs_size,
        }

    def copy(self) -> "PredictiveModel":
        clone = PredictiveModel(self.cfg, self.camera_rays, self.ground_depth, self.action_scale)
        clone.store.load_values(self.store.values())
        return clone


def save_checkpoint(model: PredictiveModel, path: str, training: Optional[Mapping[str, Any]] = None) -> str:
    """체크포인트 저장 → 파일 sha256"""
    meta = {"kind": "checkpoint", **model.describe(), "training": dict(training or {})}
    digest = dn.save_params(model.store, path, meta)
    logger.info("체크포인트 저장: %s (파라미터 %d개, sha256=%s)", path, model.parameter_count(), digest[:12])
    return digest


def load_checkpoint(path: str) -> Tuple[PredictiveModel, Dict[str, Any]]:
    values, meta = dn.load_params(path)
    if meta.get("kind") != "checkpoint":
        raise DatasetError(f"체크포인트 파일이 아닙니다: {path}")
    model = PredictiveModel(
        ModelConfig.model_validate(meta["model_config"]),
        meta["camera_rays"],
        meta["ground_depth"],
        tuple(meta["action_scale"]),
    )
    missing = set(model.store.names()) - set(values)
    if missing:
        raise DatasetError(f"체크포인트에 없는 파라미터: {sorted(missing)}")
    model.store.load_values(values)
    return model, meta


# ============================================================
# 손실 함수
# ============================================================
@dataclass
class LossTerms:
    total: dn.Tensor
    collision: float
    bumpy: float
    position: float


def step_weights(mask: np.ndarray) -> np.ndarray:
    """
    (B, H) 마스크 → 손실 가중치

        w_nh = mask_nh / (Σ_h mask_nh · B)

    유효 스텝이 하나도 없는 샘플은 가중치 0
    """
    mask = np.asarray(mask, dtype=np.float64)
    valid = mask.sum(axis=1, keepdims=True)
    batch = mask.shape[0]
    return np.where(valid > 0, mask / np.maximum(valid, 1.0) / batch, 0.0)


def model_loss(
    out: ForwardOutput,
    collision: np.ndarray,
    bumpy: np.ndarray,
    position: np.ndarray,
    mask: np.ndarray,
    position_weight: float = 0.1,
    collision_pos_weight: float = 1.0,
) -> LossTerms:
    """
    배치 손실

    Args:
        collision, bumpy: (B, H) 0/1 라벨
        position: (B, H, 2) 라벨 (m)
        mask: (B, H) 유효 스텝
        collision_pos_weight: 충돌 양성 스텝 가중치 (클래스 불균형 보정)

    Raises:
        NonFiniteError: 손실이 NaN/Inf
    """
    collision = np.asarray(collision, dtype=np.float64)
    bumpy = np.asarray(bumpy, dtype=np.float64)
    position = np.asarray(position, dtype=np.float64)
    if position.shape != collision.shape + (2,):
        raise ShapeError("model_loss", collision.shape, position.shape)
    weights = step_weights(mask)
    coll_weights = weights * (1.0 + (collision_pos_weight - 1.0) * collision)

    coll_term = dn.reduce_sum(dn.mul(dn.sigmoid_cross_entropy(out.coll_logits, collision), dn.Tensor(coll_weights)))
    bump_term = dn.reduce_sum(dn.mul(dn.sigmoid_cross_entropy(out.bump_logits, bumpy), dn.Tensor(weights)))
    pos_err = dn.add(dn.squared_error(out.pos_x, position[..., 0]), dn.squared_error(out.pos_y, position[..., 1]))
    pos_term = dn.reduce_sum(dn.mul(pos_err, dn.Tensor(weights)))

    total = dn.add(dn.add(coll_term, bump_term), dn.scale(pos_term, position_weight))
    if not np.isfinite(total.data):
        raise NonFiniteError(f"손실이 유한하지 않습니다: {total.item()}")
    return LossTerms(total=total, collision=coll_term.item(), bumpy=bump_term.item(), position=pos_term.item())
