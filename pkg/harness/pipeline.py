"""
학습 파이프라인과 자기 개선 실험
================================

[학습 파이프라인]

    지도 A ─ collect ─▶ shards/Urban_11_60000.npz ─┐
    지도 B ─ collect ─▶ shards/OffRoad_31_60000.npz ┼─ label ─▶ datasets/<이름>.npz ─ train ─▶ checkpoints/<이름>.npz
                                                      │                                        curves/<이름>.csv

각 단계의 결과는 manifest.json에 기록됩니다.

    {
      "stages": {
        "collect:Urban:11:60000": {"key": "...", "output": "shards/...", "sha256": "...", "config": {...}},
        "label:urban": {...},
        "train:urban": {...}
      }
    }

[캐시 규칙]
- key = (설정 구역 해시 + 입력 파일 해시 + 시드)의 해시
- 같은 key이고 출력 파일 해시도 기록과 같으면 그 단계는 건너뜁니다.
- 라벨 결과 파일만 지우면 → 라벨링부터 다시 (수집은 캐시 사용)

[자기 개선 실험] (지도 A → 목표 지도 B)

    zeroshot    : A 데이터만으로 학습
    target_only : B 데이터(적은 예산)만으로 처음부터 학습
    finetuned   : A + B 데이터로, zeroshot 체크포인트에서 이어서 학습

세 모델 모두 B에서 같은 (출발, 시행, 시드) 조합으로 평가합니다.
"""

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.loader import AppConfig
from core.archive import file_sha256, json_fingerprint
from core.errors import DatasetError, StageError
from core.model import PredictiveModel, load_checkpoint, save_checkpoint
from core.trainer import train, write_curve
from harness.experiments import EvalResult, ExperimentSpec, detector_for, get_suite, run_eval
from pipeline.collector import collect_to_shard
from pipeline.dataset import EpisodeDataset
from pipeline.labeler import calibrate_bump_threshold, label_dataset
from simulator.maps import MapKind, make_map

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

MapRef = Tuple[str, int]


# ============================================================
# 단계 관리
# ============================================================
@contextmanager
def stage(name: str) -> Iterator[None]:
    """단계 안에서 난 예외를 단계 이름이 붙은 StageError로 바꿉니다."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        logger.error("[%s] 단계 실패: %s", name, exc)
        raise StageError(name, exc) from exc


class StageManifest:
    """출력 폴더의 manifest.json (단계별 key / 출력 경로 / 해시)"""

    def __init__(self, root: str):
        self.root = root
        self.path = os.path.join(root, MANIFEST_NAME)
        self.stages: Dict[str, Dict[str, Any]] = {}
        if os.path.exists(self.path):
            try:
                with open(self.path, "r", encoding="utf-8") as fid:
                    self.stages = json.load(fid).get("stages", {})
            except json.JSONDecodeError as exc:
                raise DatasetError(f"manifest 파일을 해석할 수 없습니다: {self.path} ({exc})") from exc

    def abspath(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def cached(self, stage_id: str, key: str) -> bool:
        entry = self.stages.get(stage_id)
        if not entry or entry.get("key") != key:
            return False
        path = self.abspath(entry["output"])
        return os.path.exists(path) and file_sha256(path) == entry.get("sha256")

    def record(self, stage_id: str, key: str, output: str, sha256: str, config: Dict[str, Any]) -> None:
        self.stages[stage_id] = {"key": key, "output": output, "sha256": sha256, "config": config}
        self.save()

    def save(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fid:
            json.dump({"stages": self.stages}, fid, indent=2, sort_keys=True, ensure_ascii=False)
            fid.write("\n")


@dataclass
class PipelineResult:
    name: str
    checkpoint_path: str
    dataset_path: str
    shard_paths: List[str]
    stages_run: List[str] = field(default_factory=list)
    stages_cached: List[str] = field(default_factory=list)
    data_steps: int = 0
    training: Dict[str, Any] = field(default_factory=dict)

    def load_model(self) -> PredictiveModel:
        model, _ = load_checkpoint(self.checkpoint_path)
        return model


def collect_seed(seed: int, map_ref: MapRef) -> int:
    kind, map_seed = map_ref
    return int(np.random.SeedSequence([int(seed), int(map_seed), len(kind)]).generate_state(1)[0])


# ============================================================
# 학습 파이프라인
# ============================================================
def run_training_pipeline(
    config: AppConfig,
    out_dir: str,
    maps: Sequence[MapRef],
    seed: int = 0,
    steps: Optional[int] = None,
    name: str = "model",
    init_checkpoint: Optional[str] = None,
    steps_per_map: Optional[Sequence[int]] = None,
) -> PipelineResult:
    """
    수집 → 라벨링 → 학습을 이어서 실행합니다.

    Args:
        maps: [(지도 종류, 지도 시드), ...]
        steps: 지도당 수집 스텝 수 (None이면 collector.steps)
        name: 데이터셋/체크포인트 파일 이름
        init_checkpoint: 이어서 학습할 체크포인트 경로 (미세조정)
        steps_per_map: 지도마다 수집 스텝 수를 따로 줄 때

    Returns:
        PipelineResult (체크포인트 경로, 실행/캐시된 단계 목록)
    """
    if not maps:
        raise StageError("collect", DatasetError("수집할 지도가 없습니다"))
    budgets = list(steps_per_map) if steps_per_map is not None else [steps or config.collector.steps] * len(maps)
    if len(budgets) != len(maps):
        raise StageError("collect", DatasetError("steps_per_map 길이가 지도 수와 다릅니다"))

    manifest = StageManifest(out_dir)
    result = PipelineResult(name=name, checkpoint_path="", dataset_path="", shard_paths=[])

    # ── 1. 수집 ──
    shard_shas = []
    for map_ref, budget in zip(maps, budgets):
        kind, map_seed = MapKind.parse(map_ref[0]).value, int(map_ref[1])
        stage_id = f"collect:{kind}:{map_seed}:{budget}"
        mode = detector_for(kind)
        cfg_hashes = {"collector": config.fingerprint("collector"), "simulator": config.fingerprint("simulator")}
        key = json_fingerprint({"stage": "collect", "map": [kind, map_seed], "steps": budget,
                                "seed": seed, "detector": mode.value, **cfg_hashes})
        rel = os.path.join("shards", f"{kind}_{map_seed}_{budget}.npz")
        if manifest.cached(stage_id, key):
            logger.info("[%s] 캐시 사용: %s", stage_id, rel)
            result.stages_cached.append(stage_id)
        else:
            with stage(stage_id):
                logger.info("[%s] 수집 시작: %d 스텝, 감지 방식 %s", stage_id, budget, mode.value)
                terrain = make_map(kind, map_seed)
                summary = collect_to_shard(
                    terrain, budget, mode, collect_seed(seed, (kind, map_seed)), manifest.abspath(rel),
                    config.collector, config.simulator,
                )
                logger.info("[%s] 완료: 에피소드 %d, 개입 %d", stage_id, summary.episodes, summary.interventions)
                manifest.record(stage_id, key, rel, summary.sha256, cfg_hashes)
            result.stages_run.append(stage_id)
        shard_shas.append(manifest.stages[stage_id]["sha256"])
        result.shard_paths.append(manifest.abspath(rel))
        result.data_steps += budget

    # ── 2. 라벨링 ──
    stage_id = f"label:{name}"
    cfg_hashes = {"labeler": config.fingerprint("labeler")}
    key = json_fingerprint({"stage": "label", "inputs": shard_shas, **cfg_hashes})
    rel = os.path.join("datasets", f"{name}.npz")
    if manifest.cached(stage_id, key):
        logger.info("[%s] 캐시 사용: %s", stage_id, rel)
        result.stages_cached.append(stage_id)
    else:
        with stage(stage_id):
            merged = EpisodeDataset.concat([EpisodeDataset.load(p) for p in result.shard_paths])
            labeled = label_dataset(merged, config.labeler)
            labeled.meta["labels"]["calibration"] = calibrate_bump_threshold(
                config.labeler.bump_threshold, config.labeler.calibration_speed, config.simulator
            )
            digest = labeled.save(manifest.abspath(rel))
            manifest.record(stage_id, key, rel, digest, cfg_hashes)
        result.stages_run.append(stage_id)
    result.dataset_path = manifest.abspath(rel)
    dataset_sha = manifest.stages[stage_id]["sha256"]

    # ── 3. 학습 ──
    stage_id = f"train:{name}"
    init_sha = file_sha256(init_checkpoint) if init_checkpoint else None
    cfg_hashes = {
        "model": config.fingerprint("model"),
        "training": config.fingerprint("training"),
        "simulator": config.fingerprint("simulator"),
    }
    key = json_fingerprint({"stage": "train", "input": dataset_sha, "seed": seed, "init": init_sha, **cfg_hashes})
    rel = os.path.join("checkpoints", f"{name}.npz")
    curve_path = manifest.abspath(os.path.join("curves", f"{name}.csv"))
    if manifest.cached(stage_id, key):
        logger.info("[%s] 캐시 사용: %s", stage_id, rel)
        result.stages_cached.append(stage_id)
        result.training = manifest.stages[stage_id].get("training", {})
    else:
        with stage(stage_id):
            init_model = load_checkpoint(init_checkpoint)[0] if init_checkpoint else None
            trained = train(EpisodeDataset.load(result.dataset_path), config, seed, init_model)
            write_curve(trained.curve, curve_path)
            summary = {**trained.summary(), "data_steps": result.data_steps, "init_sha256": init_sha}
            digest = save_checkpoint(trained.model, manifest.abspath(rel), summary)
            manifest.record(stage_id, key, rel, digest, cfg_hashes)
            manifest.stages[stage_id]["training"] = summary
            manifest.save()
            result.training = summary
        result.stages_run.append(stage_id)
    result.checkpoint_path = manifest.abspath(rel)

    logger.info("파이프라인 '%s': 실행 %s, 캐시 %s", name, result.stages_run, result.stages_cached)
    return result


# ============================================================
# 실험 묶음 실행 (학습 + 평가)
# ============================================================
def run_suite(
    suite: str,
    config: AppConfig,
    out_dir: str,
    seed: int = 0,
    steps: Optional[int] = None,
) -> EvalResult:
    """실험 묶음 하나: 필요하면 학습 파이프라인을 돌린 뒤 평가합니다."""
    spec = get_suite(suite)
    models: Dict[str, PredictiveModel] = {}
    if spec.needs_model:
        trained = run_training_pipeline(config, out_dir, spec.training_maps, seed, steps, name=spec.name)
        models["learned"] = trained.load_model()
    with stage(f"eval:{spec.name}"):
        return run_eval(spec, config, models, os.path.join(out_dir, "eval", spec.name), seed)


# ============================================================
# 자기 개선 실험
# ============================================================
SELF_IMPROVE_VARIANTS = ("zeroshot", "target_only", "finetuned")


@dataclass
class SelfImproveResult:
    table: pd.DataFrame
    pipelines: Dict[str, PipelineResult]
    evals: Dict[str, EvalResult]


def run_self_improvement(
    config: AppConfig,
    out_dir: str,
    seed: int = 0,
    domain_a: MapRef = ("Urban", 11),
    domain_b: MapRef = ("OffRoad", 31),
    source_steps: Optional[int] = None,
    target_steps: Optional[int] = None,
    alpha_bum: float = 0.0,
) -> SelfImproveResult:
    """
    zeroshot / target_only / finetuned 세 모델을 학습하고 목표 지도 B에서 평가합니다.

    Returns:
        SelfImproveResult. table 열: variant, data_steps, runs, successes,
        success_rate, distance_before_failure_mean
    """
    source_steps = source_steps or config.collector.steps
    target_steps = target_steps or config.harness.self_improve_target_steps

    pipelines: Dict[str, PipelineResult] = {}
    pipelines["zeroshot"] = run_training_pipeline(
        config, out_dir, [domain_a], seed, source_steps, name="zeroshot"
    )
    pipelines["target_only"] = run_training_pipeline(
        config, out_dir, [domain_b], seed, target_steps, name="target_only"
    )
    pipelines["finetuned"] = run_training_pipeline(
        config, out_dir, [domain_a, domain_b], seed, name="finetuned",
        init_checkpoint=pipelines["zeroshot"].checkpoint_path,
        steps_per_map=[source_steps, target_steps],
    )

    evals: Dict[str, EvalResult] = {}
    rows = []
    for variant in SELF_IMPROVE_VARIANTS:
        spec = ExperimentSpec(
            name=f"selfimprove_{variant}",
            description=f"자기 개선 실험 ({variant})",
            map_kind=domain_b[0],
            map_seeds=(int(domain_b[1]),),
            policies=("learned",),
            alpha_bum=alpha_bum,
        )
        with stage(f"eval:{variant}"):
            evaluated = run_eval(
                spec, config, {"learned": pipelines[variant].load_model()},
                os.path.join(out_dir, "eval", spec.name), seed,
            )
        evals[variant] = evaluated
        runs = evaluated.runs
        rows.append({
            "variant": variant,
            "data_steps": pipelines[variant].data_steps,
            "runs": len(runs),
            "successes": int(runs["success"].sum()),
            "success_rate": float(runs["success"].mean()),
            "distance_before_failure_mean": float(runs["distance_before_failure"].mean()),
        })

    table = pd.DataFrame(rows)
    table.to_csv(os.path.join(out_dir, "selfimprove.csv"), index=False)
    logger.info("자기 개선 실험 결과:\n%s", table.to_string(index=False))
    return SelfImproveResult(table=table, pipelines=pipelines, evals=evals)
