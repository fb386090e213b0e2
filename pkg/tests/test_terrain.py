"""
지형 / 지도 생성 / 경로 탐색 테스트
====================================

terrain.py, maps.py, pathfinding.py를 검증합니다.
"""

import sys
import os

import numpy as np
import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.errors import MapFormatError, MapGenerationError
from simulator.maps import MapKind, make_map, region_cells, resolve_map, spawn_goal_path_length
from simulator.pathfinding import bfs_distances, dilate, free_cells_bfs, min_cost_path, shortest_path_length
from simulator.terrain import (
    Region,
    TerrainCell,
    TerrainMap,
    VisualClass,
    build_map,
    load_map,
    save_map,
)


def small_map() -> TerrainMap:
    """5×4 칸 지도: 가운데 키 큰 풀, 오른쪽 벽"""
    rows = [
        "...,#",
        '.."..',
        '.."=#',
        "....#",
    ]
    return build_map(rows, Region(0.0, 0.0, 0.5, 0.5), Region(1.5, 1.5, 2.0, 2.0), name="small")


class TestTerrainCell:
    """지형 칸 규칙 테스트"""

    def test_tall_grass_is_visible_but_passable(self):
        """키 큰 풀: 센서에 잡히지만 지나갈 수 있어야 합니다."""
        terrain = small_map()
        cell = terrain.cell_at(1.25, 1.25)
        assert cell.visual_class == VisualClass.TALL_GRASS
        assert cell.geometric_occupancy
        assert cell.physically_traversable

    def test_wall_must_block(self):
        """지나갈 수 있는 벽은 만들 수 없습니다."""
        with pytest.raises(MapFormatError):
            TerrainCell(VisualClass.WALL, True, True, 0.0)

    def test_bumpiness_range(self):
        with pytest.raises(MapFormatError):
            TerrainCell(VisualClass.GRASS, False, True, 1.5)


class TestTerrainMap:
    """격자 지도 조회 테스트"""

    def test_top_row_is_highest_y(self):
        """지도 파일 맨 윗줄은 y가 가장 큰 행입니다."""
        terrain = small_map()
        assert terrain.cell_at(1.75, 1.75).visual_class == VisualClass.GRASS
        assert terrain.cell_at(1.75, 0.25).visual_class == VisualClass.FREE_GROUND

    def test_out_of_bounds_is_wall(self):
        terrain = small_map()
        assert terrain.cell_at(-0.1, 0.5).visual_class == VisualClass.WALL
        assert not terrain.sample(np.array([10.0]), np.array([0.1]), "traversable")[0]
        assert terrain.sample(np.array([10.0]), np.array([0.1]), "occupancy")[0]

    def test_index_of_clamps(self):
        terrain = small_map()
        assert terrain.index_of(100.0, -5.0) == (terrain.width - 1, 0)
        assert terrain.cell_index(100.0, -5.0) is None

    def test_derived_layers(self):
        terrain = small_map()
        assert terrain.occupancy.shape == (4, 5)
        assert terrain.visual[1, 3] == int(VisualClass.CONCRETE)
        assert terrain.bumpiness[1, 3] == pytest.approx(0.2)

    def test_text_round_trip(self, tmp_path):
        """지도 파일로 저장했다가 읽으면 같은 격자여야 합니다."""
        terrain = make_map("Urban", 3)
        path = str(tmp_path / "urban.yaml")
        save_map(terrain, path)
        loaded = load_map(path)
        np.testing.assert_array_equal(loaded.visual, terrain.visual)
        np.testing.assert_array_equal(loaded.traversable, terrain.traversable)
        assert loaded.goal_region == terrain.goal_region
        assert loaded.name == terrain.name

    def test_wrong_version_rejected(self):
        text = small_map().to_text().replace("format_version: 1", "format_version: 99")
        with pytest.raises(MapFormatError):
            TerrainMap.from_text(text)

    def test_unknown_char_rejected(self):
        with pytest.raises(MapFormatError):
            build_map(["..X"], Region(0, 0, 0.5, 0.5), Region(1.0, 0, 1.5, 0.5))


class TestPathfinding:
    """격자 BFS 테스트"""

    def test_distances(self):
        passable = np.ones((3, 3), dtype=bool)
        dist = bfs_distances(passable, (0, 0))
        assert dist[2, 2] == 4

    def test_blocked_start(self):
        passable = np.zeros((2, 2), dtype=bool)
        assert (bfs_distances(passable, (0, 0)) == -1).all()

    def test_no_path(self):
        passable = np.array([[True, False, True]])
        assert shortest_path_length(passable, (0, 0), (2, 0)) is None
        assert free_cells_bfs(passable, (0, 0)).sum() == 1

    def test_dilate(self):
        mask = np.zeros((7, 7), dtype=bool)
        mask[3, 3] = True
        grown = dilate(mask, 1)
        assert grown[1:6, 1:6].sum() == 9
        assert grown[2:5, 2:5].all()
        # 지도 가장자리는 장애물로 취급
        assert dilate(np.zeros((3, 3), dtype=bool), 1)[0, 0]

    def test_min_cost_path_avoids_expensive_cell(self):
        passable = np.ones((3, 3), dtype=bool)
        cost = np.zeros((3, 3))
        cost[1, 1] = 5.0
        path = min_cost_path(passable, cost, (0, 1), (2, 1))
        assert path[0] == (0, 1) and path[-1] == (2, 1)
        assert (1, 1) not in path
        assert len(path) == 5

    def test_min_cost_path_none(self):
        passable = np.array([[True, False, True]])
        assert min_cost_path(passable, np.zeros((1, 3)), (0, 0), (2, 0)) is None


class TestMapGenerator:
    """지도 생성기 테스트"""

    @pytest.mark.parametrize("kind", [k.value for k in MapKind])
    def test_goal_reachable(self, kind):
        """모든 지도는 출발 → 목표 경로가 있어야 합니다."""
        for seed in (0, 1, 2):
            terrain = make_map(kind, seed)
            assert spawn_goal_path_length(terrain) >= 0

    def test_deterministic(self):
        a = make_map("OffRoad", 31)
        b = make_map("OffRoad", 31)
        np.testing.assert_array_equal(a.codes, b.codes)
        assert a.name == "OffRoad-31"

    def test_spawn_and_goal_are_traversable(self):
        for kind in MapKind:
            terrain = make_map(kind, 5)
            for region in (terrain.spawn_region, terrain.goal_region):
                i0, j0, i1, j1 = region_cells(region, terrain.cell_size)
                assert terrain.traversable[j0:j1, i0:i1].all()

    def test_tall_grass_shortcut(self):
        """
        TallGrassCorridor: 센서 기준(풀 = 장애물)으로는 멀리 돌아가야 하고,
        실제로는 풀을 지나 더 짧게 갈 수 있어야 합니다.
        """
        terrain = make_map("TallGrassCorridor", 21)
        start = terrain.index_of(*terrain.spawn_region.center)
        goal = terrain.index_of(*terrain.goal_region.center)
        real = shortest_path_length(terrain.traversable, start, goal)
        sensed = shortest_path_length(~terrain.occupancy, start, goal)
        assert real is not None and sensed is not None
        assert sensed > real

    def test_urban_has_smooth_route(self):
        """도심: 울퉁불퉁함이 지도 평균보다 낮은 출발 → 목표 경로가 있어야 합니다."""
        for seed in (1, 11):
            terrain = make_map("Urban", seed)
            start = terrain.index_of(*terrain.spawn_region.center)
            goal = terrain.index_of(*terrain.goal_region.center)
            path = min_cost_path(terrain.traversable, terrain.bumpiness, start, goal)
            assert path is not None
            route = np.mean([terrain.bumpiness[j, i] for i, j in path])
            assert route < terrain.bumpiness[terrain.traversable].mean()

    def test_parse_kind(self):
        assert MapKind.parse("urban") == MapKind.URBAN
        with pytest.raises(MapGenerationError):
            MapKind.parse("Moon")

    def test_resolve_map_file_or_kind(self, tmp_path):
        terrain = make_map("NovelRandom", 101)
        path = str(tmp_path / "novel.yaml")
        save_map(terrain, path)
        assert resolve_map(path).name == terrain.name
        assert resolve_map("NovelRandom", 101).name == "NovelRandom-101"
