"""
지도 생성기
============

실험에 사용할 지도를 시드(seed)로부터 만들어 냅니다.
같은 (종류, 시드) → 항상 같은 지도.

[지도 종류]
    Urban              건물(벽) + 매끄러운 콘크리트 길 + 울퉁불퉁한 잔디
    OffRoad            나무 + 키 큰 풀 + 자갈 + 잔디
    TallGrassCorridor  목표까지 가는 짧은 길은 키 큰 풀 띠를 지나야 하고,
                       풀이 없는 길은 크게 돌아가야 하는 지도
    NovelRandom        학습에 쓰지 않는 무작위 지도 (일반화 평가용)

[TallGrassCorridor 구조] (위에서 본 모습)

        ┌──────────────────────────────┐
        │            [목표]            │
        │                              │
        │ ·######""""""""""""######### │  ← 벽 띠, 가운데만 키 큰 풀
        │ ↑         ↑                  │
        │ 우회로   지름길 (풀 통과)     │
        │            [출발]            │
        └──────────────────────────────┘

[검증]
출발 영역 중심 → 목표 영역 중심까지 "실제로 지나갈 수 있는" 경로가
BFS로 확인되지 않으면 시드를 바꿔 다시 생성합니다.
"""

import logging
import os
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np

from config.settings import (
    CELL_SIZE,
    MAP_HEIGHT_CELLS,
    MAP_MAX_RETRIES,
    MAP_RETRY_SEED_STRIDE,
    MAP_WIDTH_CELLS,
)
from core.errors import MapGenerationError
from simulator.pathfinding import shortest_path_length
from simulator.terrain import Region, TerrainMap, build_map, load_map

logger = logging.getLogger(__name__)


class MapKind(str, Enum):
    URBAN = "Urban"
    OFF_ROAD = "OffRoad"
    TALL_GRASS_CORRIDOR = "TallGrassCorridor"
    NOVEL_RANDOM = "NovelRandom"

    @classmethod
    def parse(cls, value) -> "MapKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise MapGenerationError(f"알 수 없는 지도 종류입니다: {value} (가능: {[k.value for k in cls]})")


# 지형 문자 (config.settings.DEFAULT_LEGEND와 같음)
FREE = "."
CONCRETE = "="
GRASS = ","
TALL_GRASS = '"'
GRAVEL = ":"
WALL = "#"
TREE = "T"


class _Canvas:
    """문자 격자 위에 사각형/원을 칠하는 도구. [j, i] = [행(y), 열(x)]"""

    def __init__(self, width: int, height: int, fill: str):
        self.width = width
        self.height = height
        self.grid = np.full((height, width), fill, dtype="<U1")

    def rect(self, i0: int, j0: int, i1: int, j1: int, char: str) -> None:
        """[i0, i1) × [j0, j1) 칸을 칠합니다."""
        i0, i1 = max(i0, 0), min(i1, self.width)
        j0, j1 = max(j0, 0), min(j1, self.height)
        if i0 < i1 and j0 < j1:
            self.grid[j0:j1, i0:i1] = char

    def disk(self, ci: float, cj: float, radius: float, char: str) -> None:
        jj, ii = np.mgrid[0:self.height, 0:self.width]
        mask = (ii + 0.5 - ci) ** 2 + (jj + 0.5 - cj) ** 2 <= radius ** 2
        self.grid[mask] = char

    def region(self, region: Region, char: str, margin: int = 0) -> None:
        i0, j0, i1, j1 = region_cells(region)
        self.rect(i0 - margin, j0 - margin, i1 + margin, j1 + margin, char)

    def free_of(self, i0: int, j0: int, i1: int, j1: int, protected: np.ndarray) -> bool:
        i0, i1 = max(i0, 0), min(i1, self.width)
        j0, j1 = max(j0, 0), min(j1, self.height)
        return not protected[j0:j1, i0:i1].any()

    def to_map(self, spawn: Region, goal: Region, name: str) -> TerrainMap:
        rows = ["".join(self.grid[j]) for j in range(self.height - 1, -1, -1)]
        return build_map(rows, spawn, goal, cell_size=CELL_SIZE, name=name)


def region_cells(region: Region, cell_size: float = CELL_SIZE) -> Tuple[int, int, int, int]:
    """미터 영역 → 칸 범위 [i0, i1) × [j0, j1)"""
    return (
        int(np.floor(region.x0 / cell_size)),
        int(np.floor(region.y0 / cell_size)),
        int(np.ceil(region.x1 / cell_size)),
        int(np.ceil(region.y1 / cell_size)),
    )


def _cell_region(i0: int, j0: int, i1: int, j1: int) -> Region:
    return Region(i0 * CELL_SIZE, j0 * CELL_SIZE, i1 * CELL_SIZE, j1 * CELL_SIZE)


# 출발/목표 영역 (5칸 × 5칸 = 2.5m × 2.5m)
_CORNER_SPAWN = _cell_region(2, 2, 7, 7)
_CORNER_GOAL = _cell_region(MAP_WIDTH_CELLS - 7, MAP_HEIGHT_CELLS - 7, MAP_WIDTH_CELLS - 2, MAP_HEIGHT_CELLS - 2)


# ============================================================
# 지도 종류별 생성 함수
# ============================================================
def _urban(rng: np.random.Generator) -> Tuple[_Canvas, Region, Region]:
    """
    도심 지도

    - 바탕: 잔디 (울퉁불퉁)
    - 콘크리트 길: 출발 → 목표를 잇는 ㄱ자 길 (3칸 폭)
    - 건물: 출발-목표 대각선 한가운데 큰 건물 + 작은 건물 몇 개
      → 목표로 직진하면 건물에 부딪힘
    """
    canvas = _Canvas(MAP_WIDTH_CELLS, MAP_HEIGHT_CELLS, GRASS)
    spawn, goal = _CORNER_SPAWN, _CORNER_GOAL
    si0, sj0, si1, sj1 = region_cells(spawn)
    gi0, gj0, gi1, gj1 = region_cells(goal)

    # 흙바닥 조각
    for _ in range(int(rng.integers(2, 5))):
        canvas.disk(rng.uniform(5, 35), rng.uniform(5, 35), rng.uniform(1.5, 3.0), FREE)

    # ㄱ자 콘크리트 길: 위로 먼저 갈지, 오른쪽으로 먼저 갈지
    offset = int(rng.integers(0, 2))
    if rng.integers(2) == 0:
        col = si0 + 1 + offset
        row = gj0 + 1 + offset
        canvas.rect(col, sj0, col + 3, row + 3, CONCRETE)
        canvas.rect(col, row, gi1, row + 3, CONCRETE)
    else:
        row = sj0 + 1 + offset
        col = gi0 + 1 + offset
        canvas.rect(si0, row, col + 3, row + 3, CONCRETE)
        canvas.rect(col, row, col + 3, gj1, CONCRETE)
    canvas.region(spawn, CONCRETE)
    canvas.region(goal, CONCRETE)

    # 보호 영역: 길 + 출발/목표 주변 (건물이 덮으면 안 됨)
    protected = canvas.grid == CONCRETE
    for region in (spawn, goal):
        i0, j0, i1, j1 = region_cells(region)
        protected[max(j0 - 2, 0):j1 + 2, max(i0 - 2, 0):i1 + 2] = True
    # 길 옆 한 칸 여유
    padded = np.pad(protected, 1)
    protected = protected | padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]

    # 중앙 큰 건물 (대각선 위)
    size = int(rng.integers(8, 13))
    ci = MAP_WIDTH_CELLS // 2 + int(rng.integers(-2, 3))
    cj = MAP_HEIGHT_CELLS // 2 + int(rng.integers(-2, 3))
    bi0, bj0 = ci - size // 2, cj - size // 2
    canvas.rect(bi0, bj0, bi0 + size, bj0 + size, WALL)
    protected[max(bj0 - 1, 0):bj0 + size + 1, max(bi0 - 1, 0):bi0 + size + 1] = True

    # 작은 건물
    for _ in range(int(rng.integers(3, 6))):
        for _attempt in range(50):
            w, h = int(rng.integers(3, 7)), int(rng.integers(3, 7))
            i0 = int(rng.integers(1, MAP_WIDTH_CELLS - w - 1))
            j0 = int(rng.integers(1, MAP_HEIGHT_CELLS - h - 1))
            if canvas.free_of(i0 - 1, j0 - 1, i0 + w + 1, j0 + h + 1, protected):
                canvas.rect(i0, j0, i0 + w, j0 + h, WALL)
                protected[j0 - 1:j0 + h + 1, i0 - 1:i0 + w + 1] = True
                break
    return canvas, spawn, goal


def _off_road(rng: np.random.Generator) -> Tuple[_Canvas, Region, Region]:
    """
    비포장 지도

    - 바탕: 흙바닥
    - 잔디, 자갈, 키 큰 풀 조각
    - 나무: 하나씩 또는 2×2 덩어리로 흩어짐
    """
    canvas = _Canvas(MAP_WIDTH_CELLS, MAP_HEIGHT_CELLS, FREE)
    spawn, goal = _CORNER_SPAWN, _CORNER_GOAL

    for _ in range(int(rng.integers(6, 11))):
        canvas.disk(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(3.0, 6.0), GRASS)
    for _ in range(int(rng.integers(4, 7))):
        canvas.disk(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2.0, 4.0), GRAVEL)
    for _ in range(int(rng.integers(4, 8))):
        canvas.disk(rng.uniform(4, 36), rng.uniform(4, 36), rng.uniform(2.0, 4.0), TALL_GRASS)

    for _ in range(int(rng.integers(30, 50))):
        i, j = int(rng.integers(0, MAP_WIDTH_CELLS)), int(rng.integers(0, MAP_HEIGHT_CELLS))
        cluster = 2 if rng.uniform() < 0.25 else 1
        canvas.rect(i, j, i + cluster, j + cluster, TREE)

    canvas.region(spawn, FREE, margin=1)
    canvas.region(goal, FREE, margin=1)
    return canvas, spawn, goal


def _tall_grass_corridor(rng: np.random.Generator) -> Tuple[_Canvas, Region, Region]:
    """
    키 큰 풀 통로 지도

    - 지도 가운데를 가로지르는 벽 띠 (4칸 두께)
    - 벽 띠 가운데 12칸은 키 큰 풀 → 지름길
    - 한쪽 끝 3칸은 빈 땅 → 우회로 (지름길보다 약 1.5배 멀다)
    """
    canvas = _Canvas(MAP_WIDTH_CELLS, MAP_HEIGHT_CELLS, FREE)
    mid = MAP_WIDTH_CELLS // 2
    spawn = _cell_region(mid - 3, 2, mid + 2, 7)
    goal = _cell_region(mid - 3, MAP_HEIGHT_CELLS - 7, mid + 2, MAP_HEIGHT_CELLS - 2)

    # 잔디 조각 (장식)
    for _ in range(int(rng.integers(2, 5))):
        canvas.disk(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2.0, 4.0), GRASS)

    band_j0 = MAP_HEIGHT_CELLS // 2 - 2
    band_j1 = band_j0 + 4
    canvas.rect(0, band_j0, MAP_WIDTH_CELLS, band_j1, WALL)

    grass_i0 = mid - 6 + int(rng.integers(-2, 3))
    canvas.rect(grass_i0, band_j0, grass_i0 + 12, band_j1, TALL_GRASS)

    if rng.integers(2) == 0:
        canvas.rect(1, band_j0, 4, band_j1, FREE)
    else:
        canvas.rect(MAP_WIDTH_CELLS - 4, band_j0, MAP_WIDTH_CELLS - 1, band_j1, FREE)

    canvas.region(spawn, FREE, margin=1)
    canvas.region(goal, FREE, margin=1)
    return canvas, spawn, goal


def _novel_random(rng: np.random.Generator) -> Tuple[_Canvas, Region, Region]:
    """
    일반화 평가용 무작위 지도 - 모든 지형이 섞여 있고 출발/목표 모서리도 무작위
    """
    base = str(rng.choice([FREE, GRASS, GRAVEL]))
    canvas = _Canvas(MAP_WIDTH_CELLS, MAP_HEIGHT_CELLS, base)

    for _ in range(int(rng.integers(8, 15))):
        char = str(rng.choice([FREE, CONCRETE, GRASS, GRAVEL, TALL_GRASS]))
        canvas.disk(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2.0, 5.0), char)
    for _ in range(int(rng.integers(2, 6))):
        w, h = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        i0, j0 = int(rng.integers(0, MAP_WIDTH_CELLS - w)), int(rng.integers(0, MAP_HEIGHT_CELLS - h))
        canvas.rect(i0, j0, i0 + w, j0 + h, WALL)
    for _ in range(int(rng.integers(15, 40))):
        i, j = int(rng.integers(0, MAP_WIDTH_CELLS)), int(rng.integers(0, MAP_HEIGHT_CELLS))
        canvas.rect(i, j, i + 1, j + 1, TREE)

    far = MAP_WIDTH_CELLS - 7
    corners = [(2, 2), (far, 2), (2, far), (far, far)]
    start = int(rng.integers(0, 4))
    si, sj = corners[start]
    gi, gj = corners[3 - start]
    spawn = _cell_region(si, sj, si + 5, sj + 5)
    goal = _cell_region(gi, gj, gi + 5, gj + 5)

    canvas.region(spawn, FREE, margin=1)
    canvas.region(goal, FREE, margin=1)
    return canvas, spawn, goal


_GENERATORS: Dict[MapKind, Callable[[np.random.Generator], Tuple[_Canvas, Region, Region]]] = {
    MapKind.URBAN: _urban,
    MapKind.OFF_ROAD: _off_road,
    MapKind.TALL_GRASS_CORRIDOR: _tall_grass_corridor,
    MapKind.NOVEL_RANDOM: _novel_random,
}


def spawn_goal_path_length(terrain: TerrainMap) -> int:
    """출발 영역 중심 → 목표 영역 중심 최단 격자 거리 (실제 통과 가능 칸 기준). 없으면 -1"""
    start = terrain.index_of(*terrain.spawn_region.center)
    goal = terrain.index_of(*terrain.goal_region.center)
    length = shortest_path_length(terrain.traversable, start, goal)
    return -1 if length is None else length


def make_map(kind, seed: int) -> TerrainMap:
    """
    지도를 생성합니다.

    출발 → 목표 경로가 없으면 시드를 (seed + 7919 × 시도 번호)로 바꿔 다시 생성하고,
    MAP_MAX_RETRIES번 실패하면 MapGenerationError를 발생시킵니다.

    Args:
        kind: MapKind 또는 종류 이름 ("Urban" 등)
        seed: 난수 시드
    """
    kind = MapKind.parse(kind)
    generator = _GENERATORS[kind]
    for attempt in range(MAP_MAX_RETRIES):
        attempt_seed = int(seed) + MAP_RETRY_SEED_STRIDE * attempt
        canvas, spawn, goal = generator(np.random.default_rng(attempt_seed))
        terrain = canvas.to_map(spawn, goal, name=f"{kind.value}-{seed}")
        if spawn_goal_path_length(terrain) >= 0:
            if attempt:
                logger.info("%s 지도: %d번 재생성 후 경로 확인 (seed=%d)", kind.value, attempt, seed)
            return terrain
        logger.info("%s 지도: 경로 없음, 다시 생성 (seed=%d, 시도 %d)", kind.value, seed, attempt + 1)
    raise MapGenerationError(f"{kind.value} 지도를 {MAP_MAX_RETRIES}번 시도했지만 출발→목표 경로가 없습니다 (seed={seed})")


def resolve_map(spec: str, seed: int = 0) -> TerrainMap:
    """
    CLI용: 파일 경로이면 지도 파일을 읽고, 아니면 지도 종류 이름으로 생성합니다.
    """
    if os.path.exists(spec):
        return load_map(spec)
    return make_map(spec, seed)
