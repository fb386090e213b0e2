"""
주행 실행 (MPC 루프)과 궤적 파일
================================

[주행 한 번]

    시작 ─▶ 목표 영역 안? ── 예 ──▶ ReachedGoal
              │ 아니오
              ▼
           정책.act(관측) → 시뮬레이터 한 스텝
              │
              ├── 실제 충돌(gt_collision) ──▶ Collided
              ├── 최근 40 스텝 동안 0.5m도 못 움직임 ──▶ Trapped
              └── max_steps 도달 ──▶ Timeout

[궤적 파일 형식] (JSON Lines, 한 줄 = 레코드 하나)

    {"type": "header", "map": ..., "policy": ..., "goal": [x, y], ...}
    {"type": "step", "step": 0, "pose": [...], "action": [...], "gt_bumpiness": ..., ...}
    ...
    {"type": "result", "outcome": "ReachedGoal", "steps": 57}

보고서의 모든 숫자는 이 파일만으로 다시 계산할 수 있습니다 (metrics_from_trajectory).
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from config.loader import PlannerConfig, SimulatorConfig
from core.errors import DatasetError
from core.planner import PlanDiagnostics, Policy
from simulator.engine import Episode, RobotState
from simulator.terrain import TerrainMap, VisualClass

logger = logging.getLogger(__name__)

# 후보 경로 기록 시 저장할 최대 후보 수
CANDIDATES_PER_RECORD = 32


class Outcome(str, Enum):
    REACHED_GOAL = "ReachedGoal"
    COLLIDED = "Collided"
    TRAPPED = "Trapped"
    TIMEOUT = "Timeout"


@dataclass
class TrajectoryStep:
    """주행 한 스텝 기록 (정답 값 포함, 평가 전용)"""

    step: int
    pose: Tuple[float, float, float]
    odom: Tuple[float, float, float]
    action: Tuple[float, float]
    gt_collision: bool
    gt_bumpiness: float
    cell: Tuple[int, int]
    terrain: str
    predicted: Optional[Dict[str, Any]] = None
    candidates: Optional[Dict[str, Any]] = None
    rotating: bool = False

    def to_dict(self) -> Dict[str, Any]:
        record = {
            "type": "step",
            "step": self.step,
            "pose": [round(v, 6) for v in self.pose],
            "odom": [round(v, 6) for v in self.odom],
            "action": [round(v, 6) for v in self.action],
            "gt_collision": bool(self.gt_collision),
            "gt_bumpiness": round(float(self.gt_bumpiness), 6),
            "cell": list(self.cell),
            "terrain": self.terrain,
            "rotating": bool(self.rotating),
        }
        if self.predicted is not None:
            record["predicted"] = self.predicted
        if self.candidates is not None:
            record["candidates"] = self.candidates
        return record


@dataclass
class RunResult:
    """주행 한 번의 결과"""

    outcome: Outcome
    trajectory: List[TrajectoryStep]
    start: Tuple[float, float, float]
    goal: Tuple[float, float]
    map_name: str
    policy: str
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.trajectory)

    def metrics(self) -> Dict[str, Any]:
        return compute_metrics(self.outcome, [s.to_dict() for s in self.trajectory], self.start, self.goal)


# ============================================================
# 주행
# ============================================================
def _candidate_record(diagnostics: PlanDiagnostics, rng_pick: np.random.Generator) -> Dict[str, Any]:
    n = len(diagnostics.rewards)
    keep = np.sort(rng_pick.choice(n, size=min(n, CANDIDATES_PER_RECORD), replace=False))
    preds = diagnostics.predictions
    return {
        "paths": np.round(preds.pos[keep], 4).tolist(),
        "p_coll": np.round(preds.p_coll[keep].max(axis=1), 4).tolist(),
        "p_bump": np.round(preds.p_bump[keep].mean(axis=1), 4).tolist(),
        "reward": np.round(diagnostics.rewards[keep], 4).tolist(),
    }


def mpc_run(
    terrain: TerrainMap,
    start: RobotState,
    policy: Policy,
    max_steps: int,
    rng: np.random.Generator,
    planner_cfg: Optional[PlannerConfig] = None,
    sim: Optional[SimulatorConfig] = None,
    goal: Optional[Tuple[float, float]] = None,
    sync: Optional[Callable[[RobotState], None]] = None,
    candidate_every: int = 0,
    policy_name: str = "policy",
) -> RunResult:
    """
    정책으로 목표까지 주행합니다 (MPC: 매 스텝 다시 계획, 첫 행동만 실행).

    Args:
        sync: 매 스텝 실제 상태를 받는 콜백 (정답 예측기용)
        candidate_every: 0보다 크면 그 간격마다 후보 경로를 궤적에 기록
    """
    planner_cfg = planner_cfg or PlannerConfig()
    sim = sim or SimulatorConfig()
    goal = goal or terrain.goal_region.center
    episode = Episode(terrain, start, rng, sim)
    pick_rng = np.random.default_rng(0)
    policy.reset()

    trajectory: List[TrajectoryStep] = []
    positions = [(start.x, start.y)]
    outcome = Outcome.TIMEOUT

    for t in range(max_steps + 1):
        state = episode.state
        if terrain.goal_region.contains(state.x, state.y):
            outcome = Outcome.REACHED_GOAL
            break
        if t == max_steps:
            outcome = Outcome.TIMEOUT
            break

        frame = episode.observe()
        if sync is not None:
            sync(state)
        decision = policy.act(frame)
        result = episode.act(decision.action)
        nxt = result.next_state

        predicted = None
        candidates = None
        if decision.diagnostics is not None:
            if decision.diagnostics.planned_prediction is not None:
                predicted = decision.diagnostics.planned_prediction.to_dict()
            if candidate_every and t % candidate_every == 0:
                candidates = _candidate_record(decision.diagnostics, pick_rng)
        cell = terrain.index_of(nxt.x, nxt.y)
        trajectory.append(TrajectoryStep(
            step=t,
            pose=nxt.pose,
            odom=nxt.odom_pose,
            action=(float(decision.action[0]), float(decision.action[1])),
            gt_collision=result.gt_collision,
            gt_bumpiness=result.gt_bumpiness_sample,
            cell=cell,
            terrain=VisualClass(int(terrain.visual[cell[1], cell[0]])).label,
            predicted=predicted,
            candidates=candidates,
            rotating=bool(decision.info.get("rotating", False)),
        ))

        if result.gt_collision:
            outcome = Outcome.COLLIDED
            break
        positions.append((nxt.x, nxt.y))
        if len(positions) > planner_cfg.trap_window:
            old = positions[-1 - planner_cfg.trap_window]
            if math.hypot(nxt.x - old[0], nxt.y - old[1]) < planner_cfg.trap_min_displacement:
                outcome = Outcome.TRAPPED
                break

    logger.debug("%s 주행 (%s): %s, %d 스텝", policy_name, terrain.name, outcome.value, len(trajectory))
    return RunResult(
        outcome=outcome,
        trajectory=trajectory,
        start=start.pose,
        goal=(float(goal[0]), float(goal[1])),
        map_name=terrain.name,
        policy=policy_name,
    )


# ============================================================
# 지표
# ============================================================
def compute_metrics(
    outcome: Outcome,
    steps: List[Dict[str, Any]],
    start: Tuple[float, float, float],
    goal: Tuple[float, float],
) -> Dict[str, Any]:
    """
    궤적 레코드 → 주행 지표

    - mean_bumpiness: 스텝당 주입된 각속도 잡음 크기의 평균 (rad/s)
    - distance_before_failure: 실제로 이동한 경로 길이 (m)
    """
    outcome = Outcome(outcome)
    xs = [start[0]] + [s["pose"][0] for s in steps]
    ys = [start[1]] + [s["pose"][1] for s in steps]
    path_length = float(np.sum(np.hypot(np.diff(xs), np.diff(ys)))) if len(xs) > 1 else 0.0
    bump = [s["gt_bumpiness"] for s in steps]
    cells = {tuple(s["cell"]) for s in steps}
    grass_label = VisualClass.TALL_GRASS.label
    return {
        "outcome": outcome.value,
        "success": outcome == Outcome.REACHED_GOAL,
        "steps": len(steps),
        "steps_to_goal": len(steps) if outcome == Outcome.REACHED_GOAL else None,
        "mean_bumpiness": float(np.mean(bump)) if bump else 0.0,
        "path_cells": len(cells),
        "distance_before_failure": path_length,
        "final_goal_distance": float(math.hypot(goal[0] - xs[-1], goal[1] - ys[-1])),
        "crossed_tall_grass": any(s["terrain"] == grass_label for s in steps),
        "rotating_steps": int(sum(1 for s in steps if s.get("rotating"))),
        # 평가 주행은 첫 충돌에서 끝나므로 사람 개입이 생길 수 없습니다.
        "interventions": 0,
    }


# ============================================================
# 궤적 파일
# ============================================================
def write_trajectory(result: RunResult, path: str, header: Optional[Dict[str, Any]] = None) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    head = {
        "type": "header",
        "map": result.map_name,
        "policy": result.policy,
        "start": [round(v, 6) for v in result.start],
        "goal": [round(v, 6) for v in result.goal],
        **(header or {}),
        **result.meta,
    }
    with open(path, "w", encoding="utf-8") as fid:
        fid.write(json.dumps(head, sort_keys=True, ensure_ascii=False) + "\n")
        for step in result.trajectory:
            fid.write(json.dumps(step.to_dict(), sort_keys=True) + "\n")
        fid.write(json.dumps({"type": "result", "outcome": result.outcome.value, "steps": result.steps}) + "\n")


def read_trajectory(path: str) -> Tuple[Dict[str, Any], List[Dict[str, Any]], Dict[str, Any]]:
    """궤적 파일 → (header, steps, result)"""
    if not os.path.exists(path):
        raise DatasetError(f"궤적 파일이 없습니다: {path}")
    header: Dict[str, Any] = {}
    steps: List[Dict[str, Any]] = []
    result: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as fid:
        for line_no, line in enumerate(fid, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"궤적 파일 {path}:{line_no} 해석 실패 ({exc})") from exc
            kind = record.get("type")
            if kind == "header":
                header = record
            elif kind == "step":
                steps.append(record)
            elif kind == "result":
                result = record
    if not header or not result:
        raise DatasetError(f"궤적 파일에 header/result 레코드가 없습니다: {path}")
    return header, steps, result


def metrics_from_trajectory(path: str) -> Dict[str, Any]:
    """궤적 파일만으로 주행 지표를 다시 계산합니다."""
    header, steps, result = read_trajectory(path)
    metrics = compute_metrics(Outcome(result["outcome"]), steps, tuple(header["start"]), tuple(header["goal"]))
    for key in ("map", "policy", "start_index", "trial", "seed"):
        if key in header:
            metrics[key] = header[key]
    return metrics
