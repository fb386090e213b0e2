"""
모델 학습 루프
==============

라벨링된 데이터셋으로 예측 모델을 학습합니다.

[학습 흐름]

    데이터셋 ─▶ 학습 샘플(창) 만들기
                   │
                   ▼
         에피소드 단위로 90% / 10% 분할   ← 같은 에피소드가 양쪽에 들어가면 안 됨
                   │
                   ▼
    ┌──▶ epoch: 학습 샘플 섞기 → 배치마다 순방향 → 역방향 → Adam
    │              │
    │              ▼
    │        검증 손실 계산 ── 최고 기록 갱신? ── 예 ──▶ 파라미터 저장
    │              │ 아니오
    │              ▼
    └── patience 번 연속 개선 없음? ── 예 ──▶ 조기 종료 (최고 파라미터 사용)

[클래스 불균형]
랜덤 워크 데이터에서 충돌은 드뭅니다. 충돌 양성 스텝의 손실 가중치를

    pos_weight = max(1, ratio × 음성 수 / 양성 수)

로 올려서 실질 비율이 약 1:4가 되게 합니다 (ratio = 0.25).

[학습 곡선]
epoch, train_loss, val_loss, 충돌 정확도, 충돌/울퉁불퉁 ROC-AUC, 위치 MSE를
CSV로 기록합니다. epoch 0은 학습 전 상태입니다.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import roc_auc_score

from config.loader import AppConfig, ModelConfig, SimulatorConfig, TrainingConfig
from core import diffnet as dn
from core.errors import DatasetError, NonFiniteError, TrainingDivergedError
from core.model import PredictiveModel, model_loss, observation_features
from pipeline.dataset import EpisodeDataset
from pipeline.labeler import SampleSet, build_samples

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "coll_acc", "coll_auc", "bump_auc", "pos_mse")


@dataclass
class TrainingResult:
    """학습 결과 (최고 검증 손실 시점의 모델)"""

    model: PredictiveModel
    curve: List[Dict[str, float]]
    best_epoch: int
    best_val_loss: float
    train_episodes: List[int]
    val_episodes: List[int]
    collision_pos_weight: float
    stopped_early: bool
    extra: Dict[str, Any] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "epochs_run": len(self.curve) - 1,
            "stopped_early": self.stopped_early,
            "collision_pos_weight": self.collision_pos_weight,
            "train_episodes": len(self.train_episodes),
            "val_episodes": len(self.val_episodes),
            **self.extra,
        }


# ============================================================
# 분할 / 배치
# ============================================================
def split_by_episode(
    samples: SampleSet, validation_fraction: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    샘플 번호를 에피소드 단위로 학습/검증으로 나눕니다.

    에피소드가 하나뿐이면 나눌 수 없으므로 같은 샘플을 양쪽에 사용합니다 (경고 로그).

    Returns:
        (학습 샘플 번호, 검증 샘플 번호)
    """
    episodes = np.unique(samples.episode)
    if len(episodes) < 2:
        logger.warning("에피소드가 %d개뿐이라 검증 세트를 따로 만들 수 없습니다", len(episodes))
        everything = np.arange(len(samples))
        return everything, everything
    order = rng.permutation(episodes)
    n_val = min(len(episodes) - 1, max(1, int(round(validation_fraction * len(episodes)))))
    val_eps = np.sort(order[:n_val])
    is_val = np.isin(samples.episode, val_eps)
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)


def collision_pos_weight(samples: SampleSet, indices: np.ndarray, ratio: float) -> float:
    """충돌 양성 스텝 가중치 = max(1, ratio × 음성/양성), 유효 스텝만 셈"""
    mask = samples.mask[indices] > 0
    labels = samples.collision[indices][mask]
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0:
        return 1.0
    return max(1.0, ratio * n_neg / n_pos)


def iterate_batches(indices: np.ndarray, batch_size: int, rng: Optional[np.random.Generator]) -> Iterator[np.ndarray]:
    """rng가 있으면 섞어서, 없으면 순서대로 batch_size씩"""
    order = rng.permutation(indices) if rng is not None else np.asarray(indices)
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def batch_inputs(samples: SampleSet, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """배치 샘플 번호 → (특징 (B, F), 행동 (B, H, 2))"""
    a = samples.dataset.arrays
    obs = samples.obs_index[idx]
    features = observation_features(
        a["cam_obstacle_class"][obs], a["cam_obstacle_dist"][obs], a["cam_ground_class"][obs]
    )
    return features, samples.actions[idx]


# ============================================================
# 평가
# ============================================================
def _safe_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    if labels.size == 0 or labels.min() == labels.max():
        return float("nan")
    return float(roc_auc_score(labels, scores))


def evaluate(
    model: PredictiveModel,
    samples: SampleSet,
    indices: np.ndarray,
    cfg: Optional[TrainingConfig] = None,
    pos_weight: float = 1.0,
    epoch: Optional[int] = None,
) -> Dict[str, float]:
    """
    샘플 묶음에 대한 손실과 예측 성능 (기울기 계산 없음)

    Returns:
        loss, coll_acc, coll_auc, bump_auc, pos_mse

    Raises:
        TrainingDivergedError: 평가 배치의 손실이 NaN/Inf (평가 배치 번호 포함)
    """
    cfg = cfg or TrainingConfig()
    if len(indices) == 0:
        raise DatasetError("평가할 샘플이 없습니다")
    total = 0.0
    coll_p, coll_y, bump_p, bump_y, sq_err = [], [], [], [], []
    for batch_id, idx in enumerate(iterate_batches(indices, cfg.batch_size, None)):
        features, actions = batch_inputs(samples, idx)
        try:
            out = model.forward(features, actions)
            terms = model_loss(
                out, samples.collision[idx], samples.bumpy[idx], samples.position[idx], samples.mask[idx],
                cfg.position_weight, pos_weight,
            )
        except NonFiniteError as exc:
            raise TrainingDivergedError(batch_id, epoch) from exc
        total += terms.total.item() * len(idx)

        valid = samples.mask[idx] > 0
        coll_p.append(dn.logistic(out.coll_logits.data)[valid])
        coll_y.append(samples.collision[idx][valid])
        bump_p.append(dn.logistic(out.bump_logits.data)[valid])
        bump_y.append(samples.bumpy[idx][valid])
        pos = np.stack([out.pos_x.data, out.pos_y.data], axis=-1)
        sq_err.append(((pos - samples.position[idx]) ** 2).sum(axis=-1)[valid])

    coll_p_all, coll_y_all = np.concatenate(coll_p), np.concatenate(coll_y)
    bump_p_all, bump_y_all = np.concatenate(bump_p), np.concatenate(bump_y)
    sq = np.concatenate(sq_err)
    return {
        "loss": total / len(indices),
        "coll_acc": float(((coll_p_all > 0.5) == (coll_y_all > 0)).mean()) if coll_y_all.size else float("nan"),
        "coll_auc": _safe_auc(coll_y_all, coll_p_all),
        "bump_auc": _safe_auc(bump_y_all, bump_p_all),
        "pos_mse": float(sq.mean()) if sq.size else float("nan"),
    }


# ============================================================
# 학습
# ============================================================
def fit(
    samples: SampleSet,
    model: PredictiveModel,
    cfg: TrainingConfig,
    seed: int,
) -> TrainingResult:
    """
    이미 만든 모델을 샘플로 학습합니다 (모델 파라미터를 제자리에서 바꿈).

    Raises:
        TrainingDivergedError: 손실 또는 기울기가 NaN/Inf (배치 번호 포함)
    """
    split_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    train_idx, val_idx = split_by_episode(samples, cfg.validation_fraction, np.random.default_rng(split_seq))
    shuffle_rng = np.random.default_rng(shuffle_seq)
    pos_weight = collision_pos_weight(samples, train_idx, cfg.collision_positive_ratio)
    logger.info(
        "학습 시작: 샘플 %d (학습 %d / 검증 %d), 파라미터 %d개, pos_weight=%.2f",
        len(samples), len(train_idx), len(val_idx), model.parameter_count(), pos_weight,
    )

    initial_train = evaluate(model, samples, train_idx, cfg, pos_weight, epoch=0)
    initial_val = evaluate(model, samples, val_idx, cfg, pos_weight, epoch=0)
    curve = [_curve_row(0, initial_train["loss"], initial_val)]
    best_val = initial_val["loss"]
    best_values = model.store.values()
    best_epoch = 0
    since_best = 0
    stopped_early = False

    for epoch in range(1, cfg.max_epochs + 1):
        batch_losses = []
        for batch_id, idx in enumerate(iterate_batches(train_idx, cfg.batch_size, shuffle_rng)):
            features, actions = batch_inputs(samples, idx)
            model.store.zero_grad()
            try:
                with dn.Tape() as tape:
                    out = model.forward(features, actions)
                    terms = model_loss(
                        out, samples.collision[idx], samples.bumpy[idx], samples.position[idx],
                        samples.mask[idx], cfg.position_weight, pos_weight,
                    )
                tape.backward(terms.total)
                dn.adam_update(model.store, model.store.grads(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
            except NonFiniteError as exc:
                raise TrainingDivergedError(batch_id, epoch) from exc
            batch_losses.append(terms.total.item())
            logger.debug("epoch %d batch %d: loss=%.5f", epoch, batch_id, batch_losses[-1])

        val = evaluate(model, samples, val_idx, cfg, pos_weight, epoch=epoch)
        train_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        curve.append(_curve_row(epoch, train_loss, val))
        logger.info(
            "epoch %d: train=%.5f val=%.5f coll_auc=%.3f bump_auc=%.3f",
            epoch, train_loss, val["loss"], val["coll_auc"], val["bump_auc"],
        )

        if val["loss"] < best_val:
            best_val = val["loss"]
            best_values = model.store.values()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                logger.info("조기 종료: %d epoch 동안 검증 손실 개선 없음 (최고 epoch %d)", cfg.patience, best_epoch)
                stopped_early = True
                break

    model.store.load_values(best_values)
    return TrainingResult(
        model=model,
        curve=curve,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        train_episodes=sorted(int(e) for e in np.unique(samples.episode[train_idx])),
        val_episodes=sorted(int(e) for e in np.unique(samples.episode[val_idx])),
        collision_pos_weight=pos_weight,
        stopped_early=stopped_early,
    )


def _curve_row(epoch: int, train_loss: float, val: Dict[str, float]) -> Dict[str, float]:
    return {
        "epoch": epoch,
        "train_loss": train_loss,
        "val_loss": val["loss"],
        "coll_acc": val["coll_acc"],
        "coll_auc": val["coll_auc"],
        "bump_auc": val["bump_auc"],
        "pos_mse": val["pos_mse"],
    }


def train(
    dataset: EpisodeDataset,
    config: Optional[AppConfig] = None,
    seed: int = 0,
    init_model: Optional[PredictiveModel] = None,
) -> TrainingResult:
    """
    라벨링된 데이터셋 → 학습된 모델

    Args:
        init_model: 주어지면 그 파라미터에서 이어서 학습 (미세조정)
    """
    config = config or AppConfig()
    labels = dataset.meta.get("labels", {})
    if labels and labels.get("horizon") not in (None, config.model.horizon):
        raise DatasetError(
            f"라벨링 horizon({labels.get('horizon')})과 모델 horizon({config.model.horizon})이 다릅니다"
        )
    samples = build_samples(dataset, config.model.horizon)
    model = _prepare_model(config.model, config.simulator, seed, init_model)
    result = fit(samples, model, config.training, seed)
    result.extra["finetuned"] = init_model is not None
    result.extra["samples"] = len(samples)
    return result


def _prepare_model(
    cfg: ModelConfig, sim: SimulatorConfig, seed: int, init_model: Optional[PredictiveModel]
) -> PredictiveModel:
    if init_model is None:
        return PredictiveModel.from_configs(cfg, sim).initialize(seed)
    if init_model.cfg != cfg:
        raise DatasetError("미세조정할 체크포인트의 모델 설정이 현재 설정과 다릅니다")
    return init_model.copy()


def write_curve(curve: List[Dict[str, float]], path: str) -> None:
    """학습 곡선 CSV 저장"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame = pd.DataFrame(curve, columns=list(CURVE_COLUMNS))
    frame.to_csv(path, index=False, float_format="%.6f", na_rep="nan")
