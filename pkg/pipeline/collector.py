"""
자율 데이터 수집기
==================

로봇이 스스로 돌아다니며 학습 데이터를 모읍니다.
사람이 조종하지 않고, 목표도 없이 "시간 상관 랜덤 워크"로 움직입니다.

[시간 상관 랜덤 워크]
매 스텝 완전히 무작위로 행동하면 좌우 회전이 서로 상쇄되어
로봇이 거의 직진만 하게 됩니다. 그래서 직전 행동을 대부분 유지합니다:

    a_t = ρ × a_(t-1) + (1 − ρ) × u,   u ~ 균등분포(행동 범위)

    ρ = 0   → 매번 새로운 무작위 행동
    ρ = 0.9 → 한 번 돌기 시작하면 한동안 계속 돔

[수집 루프]

    ┌─▶ 현재 관측 o_t
    │      │
    │   충돌 감지? ── 예 ──▶ 기록(o_t, (0,0), 충돌=1) → 복구 동작 → 새 에피소드 ─┐
    │      │ 아니오                                                           │
    │   행동 a_t 샘플 → 기록(o_t, a_t) → 시뮬레이터 한 스텝                     │
    └──────┴──────────────────────────────────────────────────────────────────┘

모든 스텝이 기록되므로 N 스텝 수집 → 기록 N개.
시뮬레이터가 이미 4Hz로 동작하므로 따로 샘플링 주기를 낮추지 않습니다.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np

from config.loader import CollectorConfig, SimulatorConfig
from core.collision import DetectorMode, clear_mask, detect_collision, reset_maneuver
from pipeline.dataset import EpisodeDataset, RawRecord
from simulator.engine import RobotState, render_sensors, step
from simulator.terrain import TerrainMap

logger = logging.getLogger(__name__)


@dataclass
class CollectPolicyState:
    """랜덤 워크 정책 상태"""

    prev_action: Tuple[float, float] = (0.0, 0.0)
    correlation: float = 0.9
    v_range: Tuple[float, float] = (0.0, 2.0)
    w_range: Tuple[float, float] = (-1.5, 1.5)

    @classmethod
    def from_config(cls, cfg: CollectorConfig) -> "CollectPolicyState":
        return cls(correlation=cfg.correlation, v_range=tuple(cfg.v_range), w_range=tuple(cfg.w_range))


def sample_action(pstate: CollectPolicyState, rng: np.random.Generator) -> Tuple[float, float]:
    """
    랜덤 워크에서 다음 행동을 뽑고 pstate.prev_action을 갱신합니다.

    Returns:
        (v, w) - 항상 행동 범위 안
    """
    u_v = rng.uniform(pstate.v_range[0], pstate.v_range[1])
    u_w = rng.uniform(pstate.w_range[0], pstate.w_range[1])
    rho = pstate.correlation
    v = rho * pstate.prev_action[0] + (1.0 - rho) * u_v
    w = rho * pstate.prev_action[1] + (1.0 - rho) * u_w
    v = float(min(max(v, pstate.v_range[0]), pstate.v_range[1]))
    w = float(min(max(w, pstate.w_range[0]), pstate.w_range[1]))
    pstate.prev_action = (v, w)
    return (v, w)


@dataclass
class ShardSummary:
    """수집 결과 요약 (shard 메타 정보에 기록)"""

    path: str
    sha256: str
    records: int
    episodes: int
    resets: int
    interventions: int
    detector_mode: str
    extra: Dict[str, Any] = field(default_factory=dict)


class Collector:
    """
    데이터 수집기 - 한 지도, 한 시드, 한 감지 방식

    [사용 예시]
    collector = Collector(terrain, DetectorMode.RANGE, seed=1)
    records = list(collector.run(1000))
    print(collector.interventions)
    """

    def __init__(
        self,
        terrain: TerrainMap,
        mode: DetectorMode,
        seed: int,
        cfg: Optional[CollectorConfig] = None,
        sim: Optional[SimulatorConfig] = None,
    ):
        self.terrain = terrain
        self.mode = DetectorMode.parse(mode)
        self.seed = int(seed)
        self.cfg = cfg or CollectorConfig()
        self.sim = sim or SimulatorConfig()

        # 정책 / 시뮬레이터 / 시작 위치용 난수를 분리
        policy_seq, sim_seq, start_seq = np.random.SeedSequence(self.seed).spawn(3)
        self.policy_rng = np.random.default_rng(policy_seq)
        self.sim_rng = np.random.default_rng(sim_seq)
        self.start_rng = np.random.default_rng(start_seq)

        # 통계
        self.episodes = 0
        self.resets = 0
        self.interventions = 0

    def _start_state(self) -> RobotState:
        """지도 전체에서 여유 있는 칸 하나를 무작위로 골라 시작"""
        mask = clear_mask(self.terrain, self.cfg)
        if not mask.any():
            mask = self.terrain.traversable
        jj, ii = np.nonzero(mask)
        k = int(self.start_rng.integers(0, len(ii)))
        x, y = self.terrain.cell_center(int(ii[k]), int(jj[k]))
        heading = self.start_rng.uniform(-math.pi, math.pi)
        return RobotState.at(x, y, heading)

    def run(self, steps: int) -> Iterator[RawRecord]:
        """steps개의 기록을 차례로 돌려줍니다."""
        pstate = CollectPolicyState.from_config(self.cfg)
        state = self._start_state()
        frame = render_sensors(state, self.terrain, self.sim_rng, self.sim)
        episode_id = 0
        self.episodes = 1

        for t in range(steps):
            if detect_collision(frame, self.mode, self.cfg):
                yield RawRecord(t, frame, (0.0, 0.0), episode_id, True, self.mode)

                result = reset_maneuver(state, self.terrain, self.sim_rng, self.mode, self.cfg, self.sim)
                state, frame = result.state, result.frame
                self.resets += 1
                self.interventions += int(result.intervened)
                pstate.prev_action = (0.0, 0.0)
                if t + 1 < steps:
                    episode_id += 1
                    self.episodes += 1
                continue

            action = sample_action(pstate, self.policy_rng)
            yield RawRecord(t, frame, action, episode_id, False, self.mode)
            outcome = step(state, action, self.terrain, self.sim.dt, self.sim_rng, self.sim)
            state, frame = outcome.next_state, outcome.frame

            if (t + 1) % 10000 == 0:
                logger.debug("수집 진행: %d/%d 스텝, 에피소드 %d", t + 1, steps, self.episodes)

        logger.info(
            "수집 완료: %s, %d 스텝, 에피소드 %d, 복구 %d, 사람 개입 %d",
            self.terrain.name, steps, self.episodes, self.resets, self.interventions,
        )

    def counters(self) -> Dict[str, int]:
        return {"episodes": self.episodes, "resets": self.resets, "interventions": self.interventions}


def collect(
    terrain: TerrainMap,
    steps: int,
    mode: DetectorMode,
    seed: int,
    cfg: Optional[CollectorConfig] = None,
    sim: Optional[SimulatorConfig] = None,
) -> Iterator[RawRecord]:
    """수집 기록 스트림 (Collector.run의 함수형 버전)"""
    return Collector(terrain, mode, seed, cfg, sim).run(steps)


def collect_to_shard(
    terrain: TerrainMap,
    steps: int,
    mode: DetectorMode,
    seed: int,
    path: str,
    cfg: Optional[CollectorConfig] = None,
    sim: Optional[SimulatorConfig] = None,
) -> ShardSummary:
    """수집해서 바로 shard 파일로 저장합니다."""
    collector = Collector(terrain, mode, seed, cfg, sim)
    records = list(collector.run(steps))
    meta = {
        "kind": "shard",
        "map": terrain.name,
        "seed": int(seed),
        "steps": int(steps),
        "detector_mode": collector.mode.value,
        "counters": collector.counters(),
        "collector_config": collector.cfg.model_dump(mode="json"),
        "simulator_config": collector.sim.model_dump(mode="json"),
    }
    dataset = EpisodeDataset.from_records(records, meta)
    digest = dataset.save(path)
    return ShardSummary(
        path=path,
        sha256=digest,
        records=len(dataset),
        episodes=collector.episodes,
        resets=collector.resets,
        interventions=collector.interventions,
        detector_mode=collector.mode.value,
    )
