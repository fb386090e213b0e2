"""
격자 경로 탐색
==============

너비 우선 탐색(BFS)으로 격자 위 경로를 찾습니다.
울퉁불퉁함이 가장 적은 경로는 Dijkstra로 찾습니다.
"어떤 칸을 지나갈 수 있는가"는 호출하는 쪽이 마스크로 넘깁니다.

    - 실제로 지나갈 수 있는 길:   terrain.traversable
    - 센서가 "비어 있다"고 보는 길: ~terrain.occupancy

두 마스크로 각각 탐색해 보면, 키 큰 풀 지대처럼
"센서는 막혔다고 하지만 실제로는 지나갈 수 있는" 곳이 드러납니다.
"""

import heapq
from collections import deque
from typing import List, Optional, Tuple

import numpy as np

# 상하좌우 4방향 이웃
_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))

Cell = Tuple[int, int]


def bfs_distances(passable: np.ndarray, start: Cell) -> np.ndarray:
    """
    start 칸에서 모든 칸까지의 격자 거리 (4방향 이동 횟수).

    Args:
        passable: (height, width) bool 배열, [j, i] 순서
        start: (i, j)

    Returns:
        (height, width) int 배열, 도달 불가 = -1
    """
    height, width = passable.shape
    dist = np.full((height, width), -1, dtype=np.int64)
    si, sj = start
    if not (0 <= si < width and 0 <= sj < height) or not passable[sj, si]:
        return dist

    dist[sj, si] = 0
    queue = deque([(si, sj)])
    while queue:
        i, j = queue.popleft()
        d = dist[j, i] + 1
        for di, dj in _NEIGHBORS:
            ni, nj = i + di, j + dj
            if 0 <= ni < width and 0 <= nj < height and passable[nj, ni] and dist[nj, ni] < 0:
                dist[nj, ni] = d
                queue.append((ni, nj))
    return dist


def shortest_path_length(passable: np.ndarray, start: Cell, goal: Cell) -> Optional[int]:
    """start → goal 최단 격자 거리. 경로가 없으면 None"""
    dist = bfs_distances(passable, start)
    gi, gj = goal
    value = int(dist[gj, gi])
    return value if value >= 0 else None


def free_cells_bfs(passable: np.ndarray, start: Cell) -> np.ndarray:
    """start 칸과 연결된 모든 칸 (bool 마스크)"""
    return bfs_distances(passable, start) >= 0


def min_cost_path(
    passable: np.ndarray, cost: np.ndarray, start: Cell, goal: Cell, step_cost: float = 1e-3
) -> Optional[List[Cell]]:
    """
    Dijkstra: 지나가는 칸의 cost 합이 가장 작은 start → goal 경로.

    칸에 들어갈 때마다 cost[j, i] + step_cost를 더합니다.
    step_cost는 비용이 같은 경로 중 짧은 쪽을 고르게 합니다.

    Returns:
        [(i, j), ...] start와 goal 포함. 경로가 없으면 None
    """
    height, width = passable.shape
    si, sj = start
    gi, gj = goal
    if not (passable[sj, si] and passable[gj, gi]):
        return None

    best = np.full((height, width), np.inf)
    previous = {}
    best[sj, si] = 0.0
    queue = [(0.0, si, sj)]
    while queue:
        d, i, j = heapq.heappop(queue)
        if (i, j) == (gi, gj):
            break
        if d > best[j, i]:
            continue
        for di, dj in _NEIGHBORS:
            ni, nj = i + di, j + dj
            if 0 <= ni < width and 0 <= nj < height and passable[nj, ni]:
                nd = d + float(cost[nj, ni]) + step_cost
                if nd < best[nj, ni]:
                    best[nj, ni] = nd
                    previous[(ni, nj)] = (i, j)
                    heapq.heappush(queue, (nd, ni, nj))

    if not np.isfinite(best[gj, gi]):
        return None
    path = [(gi, gj)]
    while path[-1] != (si, sj):
        path.append(previous[path[-1]])
    return path[::-1]


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """
    정사각형 이웃(반경 radius칸)으로 마스크를 넓힙니다.
    장애물 주변 여유 공간 계산에 사용합니다.
    """
    if radius <= 0:
        return mask.copy()
    height, width = mask.shape
    padded = np.pad(mask, radius, mode="constant", constant_values=True)
    out = np.zeros_like(mask, dtype=bool)
    for dj in range(-radius, radius + 1):
        for di in range(-radius, radius + 1):
            out |= padded[radius + dj:radius + dj + height, radius + di:radius + di + width]
    return out
