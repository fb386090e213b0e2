"""
실험 묶음과 평가
================

미리 정의한 실험 묶음(suite)으로 여러 정책을 같은 조건에서 비교합니다.

[실험 묶음 목록]

1. urban (도심)
   - 학습 정책(울퉁불퉁 비용 있음/없음), LIDAR 정책, 직진 정책
   - 비교: 성공률, 평균 울퉁불퉁함

2. tallgrass (키 큰 풀 지름길)
   - 학습 정책 vs LIDAR 정책
   - LIDAR는 풀을 벽으로 보고 돌아가거나 갇힘

3. offroad (비포장)
   - 나무, 자갈, 키 큰 풀이 섞인 지형

4. generalization (일반화)
   - 도심 + 비포장 데이터로 학습, 처음 보는 무작위 지도 3개에서 평가

5. oracle (정답 예측기)
   - 정답 시뮬레이터를 예측 모델로 써서 플래너 자체를 검증

[평가 규칙]
- 출발 위치 5곳 × 위치당 5회 (기본값)
- 모든 정책이 같은 (출발 위치, 시행 번호, 시드) 조합으로 주행 → 짝 비교 가능
- 정답 값(gt_*)으로 지표 계산

[사용 방법]
spec = get_suite("urban")
result = run_eval(spec, config, {"learned": model}, out_dir="outputs/eval/urban")
"""

import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from config.loader import AppConfig, CollectorConfig
from config.settings import ALPHA_BUM_OFFROAD, ALPHA_BUM_URBAN, DETECTOR_BY_MAP_KIND
from core.baselines import LidarPolicy, NaivePolicy
from core.collision import DetectorMode, clear_mask
from core.errors import ConfigError, DatasetError
from core.geometry import ActionBounds, bearing_error
from core.model import PredictiveModel
from core.planner import LearnedPolicy, Policy, plan_step, random_shooting
from harness.oracle import OraclePredictor
from harness.rollout import RunResult, mpc_run, write_trajectory
from simulator.engine import Episode, RobotState
from simulator.maps import MapKind, make_map, region_cells
from simulator.terrain import TerrainMap

logger = logging.getLogger(__name__)

POLICY_NAMES = ("learned", "learned_nobump", "lidar", "naive", "oracle")
LEARNED_POLICIES = ("learned", "learned_nobump")


# ============================================================
# 실험 정의
# ============================================================
@dataclass(frozen=True)
class ExperimentSpec:
    """실험 묶음 하나"""

    name: str
    description: str
    map_kind: str
    map_seeds: Tuple[int, ...]
    policies: Tuple[str, ...]
    training_maps: Tuple[Tuple[str, int], ...] = ()
    alpha_bum: float = ALPHA_BUM_URBAN
    starts: Optional[int] = None
    trials: Optional[int] = None
    max_steps: Optional[int] = None

    def __post_init__(self):
        MapKind.parse(self.map_kind)
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ConfigError(f"알 수 없는 정책입니다: {unknown} (가능: {POLICY_NAMES})")
        if not self.map_seeds:
            raise ConfigError(f"{self.name}: 평가 지도 시드가 없습니다")

    @property
    def needs_model(self) -> bool:
        return any(p in LEARNED_POLICIES for p in self.policies)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "ExperimentSpec":
        return cls(
            name=config["name"],
            description=config.get("description", ""),
            map_kind=config["map_kind"],
            map_seeds=tuple(int(s) for s in config["map_seeds"]),
            policies=tuple(config["policies"]),
            training_maps=tuple((str(k), int(s)) for k, s in config.get("training_maps", ())),
            alpha_bum=float(config.get("alpha_bum", ALPHA_BUM_URBAN)),
            starts=config.get("starts"),
            trials=config.get("trials"),
            max_steps=config.get("max_steps"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "map_kind": self.map_kind,
            "map_seeds": list(self.map_seeds),
            "policies": list(self.policies),
            "training_maps": [list(m) for m in self.training_maps],
            "alpha_bum": self.alpha_bum,
            "starts": self.starts,
            "trials": self.trials,
            "max_steps": self.max_steps,
        }


SUITES: Dict[str, Dict[str, Any]] = {
    # ────────────────────────────────────────
    # 묶음 1: 도심
    # ────────────────────────────────────────
    "urban": {
        "name": "urban",
        "description": "건물과 콘크리트 길, 잔디가 있는 도심. 울퉁불퉁 비용 유무와 비교 정책을 비교합니다.",
        "map_kind": "Urban",
        "map_seeds": [11],
        "policies": ["learned", "learned_nobump", "lidar", "naive"],
        "training_maps": [["Urban", 11]],
        "alpha_bum": ALPHA_BUM_URBAN,
    },
    # ────────────────────────────────────────
    # 묶음 2: 키 큰 풀 지름길
    # ────────────────────────────────────────
    "tallgrass": {
        "name": "tallgrass",
        "description": "목표까지의 지름길이 키 큰 풀 띠를 지나갑니다. LIDAR 정책은 풀을 벽으로 봅니다.",
        "map_kind": "TallGrassCorridor",
        "map_seeds": [21],
        "policies": ["learned", "lidar"],
        "training_maps": [["TallGrassCorridor", 21]],
        "alpha_bum": ALPHA_BUM_OFFROAD,
    },
    # ────────────────────────────────────────
    # 묶음 3: 비포장
    # ────────────────────────────────────────
    "offroad": {
        "name": "offroad",
        "description": "나무, 자갈, 키 큰 풀이 섞인 비포장 지형.",
        "map_kind": "OffRoad",
        "map_seeds": [31],
        "policies": ["learned", "lidar", "naive"],
        "training_maps": [["OffRoad", 31]],
        "alpha_bum": ALPHA_BUM_OFFROAD,
    },
    # ────────────────────────────────────────
    # 묶음 4: 일반화
    # ────────────────────────────────────────
    "generalization": {
        "name": "generalization",
        "description": "도심 + 비포장 데이터로 학습하고 처음 보는 무작위 지도 3개에서 평가합니다.",
        "map_kind": "NovelRandom",
        "map_seeds": [101, 102, 103],
        "policies": ["learned"],
        "training_maps": [["Urban", 11], ["OffRoad", 31]],
        "alpha_bum": ALPHA_BUM_OFFROAD,
    },
    # ────────────────────────────────────────
    # 묶음 5: 정답 예측기로 플래너 검증
    # ────────────────────────────────────────
    "oracle": {
        "name": "oracle",
        "description": "정답 시뮬레이터를 예측 모델로 사용해 플래너만 검증합니다.",
        "map_kind": "Urban",
        "map_seeds": [11],
        "policies": ["oracle"],
        "alpha_bum": ALPHA_BUM_URBAN,
    },
}


def get_suite(name: str) -> ExperimentSpec:
    if name not in SUITES:
        raise ConfigError(f"알 수 없는 실험 묶음입니다: {name} (가능: {sorted(SUITES)})")
    return ExperimentSpec.from_config(SUITES[name])


def get_suite_list() -> List[Dict[str, str]]:
    """[{"id": "urban", "description": "..."}, ...]"""
    return [{"id": key, "description": data["description"]} for key, data in SUITES.items()]


def detector_for(map_kind: str) -> DetectorMode:
    return DetectorMode.parse(DETECTOR_BY_MAP_KIND[MapKind.parse(map_kind).value])


# ============================================================
# 출발 위치 / 정책 생성
# ============================================================
def eval_starts(terrain: TerrainMap, count: int, seed: int, cfg: Optional[CollectorConfig] = None) -> List[RobotState]:
    """
    출발 영역 안의 여유 있는 칸에서 출발 위치를 고릅니다.
    방향은 목표 쪽 ± 30도.
    """
    cfg = cfg or CollectorConfig()
    rng = np.random.default_rng(seed)
    i0, j0, i1, j1 = region_cells(terrain.spawn_region, terrain.cell_size)
    window = np.zeros_like(terrain.traversable)
    window[j0:j1, i0:i1] = True
    candidates = window & clear_mask(terrain, cfg)
    if not candidates.any():
        candidates = window & terrain.traversable
    if not candidates.any():
        raise DatasetError(f"{terrain.name}: 출발 영역에 지나갈 수 있는 칸이 없습니다")
    jj, ii = np.nonzero(candidates)
    picks = rng.choice(len(ii), size=count, replace=count > len(ii))
    goal = terrain.goal_region.center
    starts = []
    for k in picks:
        x, y = terrain.cell_center(int(ii[k]), int(jj[k]))
        heading = bearing_error((x, y, 0.0), goal) + rng.uniform(-math.pi / 6, math.pi / 6)
        starts.append(RobotState.at(x, y, heading))
    return starts


@dataclass
class PolicyHandle:
    policy: Policy
    sync: Any = None


def build_policy(
    name: str,
    config: AppConfig,
    terrain: TerrainMap,
    goal: Tuple[float, float],
    seed: int,
    model: Optional[PredictiveModel] = None,
    alpha_bum: Optional[float] = None,
) -> PolicyHandle:
    """정책 이름 → 정책 객체 (정답 예측기면 상태 동기화 콜백 포함)"""
    bounds = ActionBounds.planner_box(config.simulator.v_max, config.simulator.w_max)
    reward_cfg = config.reward
    if alpha_bum is not None:
        reward_cfg = reward_cfg.model_copy(update={"alpha_bum": alpha_bum})

    if name in LEARNED_POLICIES:
        if model is None:
            raise DatasetError(f"'{name}' 정책에는 학습된 체크포인트가 필요합니다")
        if name == "learned_nobump":
            reward_cfg = reward_cfg.model_copy(update={"alpha_bum": 0.0})
        return PolicyHandle(LearnedPolicy(model, reward_cfg, config.planner, goal, bounds, seed))
    if name == "oracle":
        oracle = OraclePredictor(terrain, config.planner.horizon, config.labeler.bump_threshold, config.simulator)
        return PolicyHandle(LearnedPolicy(oracle, reward_cfg, config.planner, goal, bounds, seed), oracle.sync)
    if name == "lidar":
        return PolicyHandle(
            LidarPolicy(goal, config.baselines, config.planner, reward_cfg, config.simulator, bounds, seed)
        )
    if name == "naive":
        return PolicyHandle(NaivePolicy(goal, config.baselines, bounds))
    raise ConfigError(f"알 수 없는 정책입니다: {name}")


def run_seeds(base_seed: int, map_index: int, start_index: int, trial: int) -> Tuple[int, int]:
    """(시뮬레이터 시드, 정책 시드) - 정책과 무관하게 같은 조합이면 같은 값"""
    seq = np.random.SeedSequence([int(base_seed), map_index, start_index, trial])
    sim_seed, policy_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    return sim_seed, policy_seed


# ============================================================
# 평가
# ============================================================
@dataclass
class EvalResult:
    spec: ExperimentSpec
    runs: pd.DataFrame
    summary: pd.DataFrame
    trajectory_paths: List[str] = field(default_factory=list)
    maps: Dict[str, TerrainMap] = field(default_factory=dict)


def run_one(
    terrain: TerrainMap,
    start: RobotState,
    handle: PolicyHandle,
    config: AppConfig,
    sim_seed: int,
    max_steps: int,
    policy_name: str,
    candidate_every: int = 0,
) -> RunResult:
    return mpc_run(
        terrain,
        start,
        handle.policy,
        max_steps,
        np.random.default_rng(sim_seed),
        planner_cfg=config.planner,
        sim=config.simulator,
        goal=config.reward.goal or terrain.goal_region.center,
        sync=handle.sync,
        candidate_every=candidate_every,
        policy_name=policy_name,
    )


def run_eval(
    spec: ExperimentSpec,
    config: AppConfig,
    models: Optional[Dict[str, PredictiveModel]] = None,
    out_dir: Optional[str] = None,
    seed: int = 0,
    candidate_every: int = 20,
) -> EvalResult:
    """
    (정책, 지도, 출발 위치, 시행)마다 한 번씩 주행하고 지표 표를 만듭니다.

    Args:
        models: {"learned": 모델}. learned_nobump도 같은 모델을 사용
        out_dir: 있으면 runs.csv, summary.csv, trajectories/*.jsonl 저장

    주행은 (정책, 지도, 출발, 시행) 순서로 차례로 실행하고 결과도 그 순서로 정렬합니다.
    """
    models = models or {}
    model = models.get("learned")
    if spec.needs_model and model is None:
        raise DatasetError(f"{spec.name}: 학습 정책 평가에 필요한 체크포인트가 없습니다")
    if model is not None and model.horizon != config.planner.horizon:
        raise ConfigError(f"체크포인트 horizon({model.horizon})과 플래너 horizon({config.planner.horizon})이 다릅니다")

    starts_n = spec.starts or config.harness.starts
    trials_n = spec.trials or config.harness.trials_per_start
    max_steps = spec.max_steps or config.harness.max_steps

    rows: List[Dict[str, Any]] = []
    paths: List[str] = []
    maps: Dict[str, TerrainMap] = {}
    for map_index, map_seed in enumerate(spec.map_seeds):
        terrain = make_map(spec.map_kind, map_seed)
        maps[terrain.name] = terrain
        goal = config.reward.goal or terrain.goal_region.center
        starts = eval_starts(terrain, starts_n, seed + map_seed, config.collector)
        for policy_name in spec.policies:
            for start_index, start in enumerate(starts):
                for trial in range(trials_n):
                    sim_seed, policy_seed = run_seeds(seed, map_index, start_index, trial)
                    handle = build_policy(policy_name, config, terrain, goal, policy_seed, model, spec.alpha_bum)
                    result = run_one(
                        terrain, start, handle, config, sim_seed, max_steps, policy_name,
                        candidate_every if trial == 0 else 0,
                    )
                    result.meta.update({
                        "suite": spec.name, "start_index": start_index, "trial": trial, "seed": sim_seed,
                    })
                    row = {
                        "suite": spec.name,
                        "map": terrain.name,
                        "policy": policy_name,
                        "start_index": start_index,
                        "trial": trial,
                        "seed": sim_seed,
                        **result.metrics(),
                    }
                    if out_dir:
                        rel = os.path.join("trajectories", f"{policy_name}_{terrain.name}_s{start_index}_t{trial}.jsonl")
                        write_trajectory(result, os.path.join(out_dir, rel))
                        row["trajectory"] = rel
                        paths.append(os.path.join(out_dir, rel))
                    rows.append(row)
            logger.info("%s / %s / %s: %d회 주행 완료", spec.name, terrain.name, policy_name, starts_n * trials_n)

    runs = pd.DataFrame(rows).sort_values(["map", "policy", "start_index", "trial"], kind="mergesort")
    runs = runs.reset_index(drop=True)
    summary = summarize_runs(runs)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        runs.to_csv(os.path.join(out_dir, "runs.csv"), index=False)
        summary.to_csv(os.path.join(out_dir, "summary.csv"), index=False)
        logger.info("평가 결과 저장: %s", out_dir)
    return EvalResult(spec=spec, runs=runs, summary=summary, trajectory_paths=paths, maps=maps)


def summarize_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """
    정책별 요약: 성공률, 평균±표준편차 울퉁불퉁함, 성공 시 평균 스텝 수, 결과별 횟수

    runs 표만으로 계산하는 순수 함수입니다.
    """
    grouped = runs.groupby("policy", sort=True)
    summary = pd.DataFrame({
        "runs": grouped.size(),
        "successes": grouped["success"].sum().astype(int),
        "success_rate": grouped["success"].mean(),
        "bumpiness_mean": grouped["mean_bumpiness"].mean(),
        "bumpiness_std": grouped["mean_bumpiness"].std(ddof=0),
        "steps_to_goal_mean": grouped["steps_to_goal"].mean(),
        "collided": grouped["outcome"].apply(lambda s: int((s == "Collided").sum())),
        "trapped": grouped["outcome"].apply(lambda s: int((s == "Trapped").sum())),
        "timeout": grouped["outcome"].apply(lambda s: int((s == "Timeout").sum())),
        "crossed_tall_grass": grouped["crossed_tall_grass"].mean(),
    })
    return summary.reset_index()


def load_runs(out_dir: str) -> pd.DataFrame:
    path = os.path.join(out_dir, "runs.csv")
    if not os.path.exists(path):
        raise DatasetError(f"평가 결과가 없습니다: {path}")
    return pd.read_csv(path)


# ============================================================
# 통계 검정
# ============================================================
def paired_sign_test(a: Sequence[float], b: Sequence[float]) -> float:
    """
    짝 부호 검정 (단측): "a가 b보다 작다"의 p-값

    같은 값(차이 0)인 짝은 제외합니다. 남은 짝이 없으면 1.0
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"짝 비교 길이가 다릅니다: {a.shape} vs {b.shape}")
    diff = a - b
    nonzero = diff[diff != 0]
    if nonzero.size == 0:
        return 1.0
    wins = int((nonzero < 0).sum())
    return float(binomtest(wins, n=int(nonzero.size), p=0.5, alternative="greater").pvalue)


def paired_metric(runs: pd.DataFrame, policy_a: str, policy_b: str, metric: str) -> Tuple[np.ndarray, np.ndarray]:
    """같은 (지도, 출발, 시행)끼리 짝지은 지표 값"""
    keys = ["map", "start_index", "trial"]
    left = runs[runs["policy"] == policy_a].set_index(keys)[metric]
    right = runs[runs["policy"] == policy_b].set_index(keys)[metric]
    joined = pd.concat([left.rename("a"), right.rename("b")], axis=1, join="inner").sort_index()
    return joined["a"].to_numpy(dtype=float), joined["b"].to_numpy(dtype=float)


# ============================================================
# 최적화기 비교 (정답 예측기 사용)
# ============================================================
@dataclass
class OptimizerScene:
    scene: int
    planner_best: float
    shooting_best: float

    @property
    def planner_wins(self) -> bool:
        return self.planner_best >= self.shooting_best


def optimizer_comparison(
    config: AppConfig,
    scenes: int = 20,
    seed: int = 0,
    warmup_steps: int = 5,
    map_kind: str = "Urban",
) -> List[OptimizerScene]:
    """
    같은 샘플 수(N)로 두 최적화기가 찾은 가장 좋은 보상을 비교합니다.

    장면마다: 정답 예측기 플래너로 warmup_steps 만큼 주행해서 계획을 이어받은 상태를 만들고,
    그 관측에서 (1) 이어받은 계획 중심의 시간 상관 샘플링 + 가중 평균,
    (2) 균등 무작위 샘플링 중 최고 를 각각 한 번 실행합니다.
    """
    results = []
    bounds = ActionBounds.planner_box(config.simulator.v_max, config.simulator.w_max)
    for k in range(scenes):
        terrain = make_map(map_kind, seed + k)
        goal = config.reward.goal or terrain.goal_region.center
        start = eval_starts(terrain, 1, seed + k, config.collector)[0]
        sim_seed, policy_seed = run_seeds(seed, k, 0, 0)
        handle = build_policy("oracle", config, terrain, goal, policy_seed)
        policy: LearnedPolicy = handle.policy
        episode = Episode(terrain, start, np.random.default_rng(sim_seed), config.simulator)
        for _ in range(warmup_steps):
            handle.sync(episode.state)
            decision = policy.act(episode.observe())
            if episode.act(decision.action).gt_collision:
                break

        frame = episode.observe()
        handle.sync(episode.state)
        scene_seq = np.random.SeedSequence([seed, k, 1])
        _, _, planned = plan_step(
            frame, replace(policy.pstate), policy.predictor, policy.reward_cfg, config.planner,
            np.random.default_rng(scene_seq), goal, bounds,
        )
        _, shot = random_shooting(
            frame, policy.predictor, policy.reward_cfg, config.planner,
            np.random.default_rng(scene_seq), goal, bounds,
        )
        results.append(OptimizerScene(scene=k, planner_best=planned.best_reward, shooting_best=shot.best_reward))
    wins = sum(r.planner_wins for r in results)
    logger.info("최적화기 비교: %d/%d 장면에서 시간 상관 샘플링이 같거나 더 좋음", wins, len(results))
    return results
