"""
지형 모델 모듈
==============

로봇이 돌아다니는 세계를 격자(grid)로 표현합니다.

[핵심 개념 - 보이는 것과 실제는 다르다]

각 격자 칸(TerrainCell)은 네 가지 속성을 가집니다:

    ┌──────────────┬────────────┬────────────┬──────────────┐
    │ 지형         │ 센서에     │ 실제로     │ 울퉁불퉁함   │
    │              │ 장애물?    │ 지나감?    │              │
    ├──────────────┼────────────┼────────────┼──────────────┤
    │ 콘크리트     │ 아니오     │ 예         │ 낮음 (0.2)   │
    │ 잔디         │ 아니오     │ 예         │ 높음 (0.6)   │
    │ 키 큰 풀 ★   │ 예         │ 예         │ 중간 (0.35)  │
    │ 벽, 나무     │ 예         │ 아니오     │ -            │
    └──────────────┴────────────┴────────────┴──────────────┘

    ★ 거리 센서(LIDAR)는 키 큰 풀을 벽처럼 봅니다.
      하지만 로봇은 풀을 헤치고 지나갈 수 있습니다.
      카메라는 풀과 벽을 구분할 수 있습니다.

[격자 좌표]
    칸 (i, j): i = 열(x 방향), j = 행(y 방향)
    세계 좌표 (x, y) → 칸 (floor(x / cell_size), floor(y / cell_size))
    지도 밖은 모두 벽으로 취급합니다.

[지도 파일 형식] (YAML, docs/02_지도파일형식.md 참고)

    format_version: 1
    name: urban-1
    cell_size: 0.5
    spawn_region: [1.0, 1.0, 3.5, 3.5]    # [x0, y0, x1, y1] 미터
    goal_region: [16.5, 16.5, 19.0, 19.0]
    legend:
      "#": {visual_class: Wall, geometric_occupancy: true, ...}
    grid: |
      ########
      #..,,..#      ← 맨 윗줄 = y가 가장 큰 행
      ########
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import yaml

from config.settings import CELL_SIZE, DEFAULT_LEGEND, MAP_FORMAT_VERSION
from core.errors import MapFormatError

logger = logging.getLogger(__name__)


class VisualClass(IntEnum):
    """카메라에 보이는 지형 종류 (정수 값 = one-hot 인덱스)"""

    FREE_GROUND = 0
    CONCRETE = 1
    GRASS = 2
    TALL_GRASS = 3
    GRAVEL = 4
    WALL = 5
    TREE = 6

    @classmethod
    def from_name(cls, name: str) -> "VisualClass":
        try:
            return _NAME_TO_CLASS[name]
        except KeyError:
            raise MapFormatError(f"알 수 없는 지형 종류입니다: {name}") from None

    @property
    def label(self) -> str:
        return _CLASS_TO_NAME[self]


_NAME_TO_CLASS = {
    "FreeGround": VisualClass.FREE_GROUND,
    "Concrete": VisualClass.CONCRETE,
    "Grass": VisualClass.GRASS,
    "TallGrass": VisualClass.TALL_GRASS,
    "Gravel": VisualClass.GRAVEL,
    "Wall": VisualClass.WALL,
    "Tree": VisualClass.TREE,
}
_CLASS_TO_NAME = {v: k for k, v in _NAME_TO_CLASS.items()}

NUM_VISUAL_CLASSES = len(VisualClass)

# 광선이 아무것도 맞지 않았을 때의 종류 값
NO_HIT = -1


@dataclass(frozen=True)
class TerrainCell:
    """격자 한 칸의 지형 속성"""

    visual_class: VisualClass
    geometric_occupancy: bool
    physically_traversable: bool
    bumpiness_coeff: float

    def __post_init__(self):
        if not 0.0 <= self.bumpiness_coeff <= 1.0:
            raise MapFormatError(f"bumpiness_coeff는 [0, 1] 범위여야 합니다: {self.bumpiness_coeff}")
        if self.visual_class in (VisualClass.WALL, VisualClass.TREE):
            if not self.geometric_occupancy or self.physically_traversable:
                raise MapFormatError(f"{self.visual_class.label}는 센서에 잡히고 지나갈 수 없어야 합니다")
        if self.visual_class == VisualClass.TALL_GRASS:
            if not (self.geometric_occupancy and self.physically_traversable):
                raise MapFormatError("TallGrass는 센서에 잡히면서 지나갈 수 있어야 합니다")

    def to_dict(self) -> dict:
        return {
            "visual_class": self.visual_class.label,
            "geometric_occupancy": self.geometric_occupancy,
            "physically_traversable": self.physically_traversable,
            "bumpiness_coeff": self.bumpiness_coeff,
        }

    @classmethod
    def from_config(cls, config: dict) -> "TerrainCell":
        try:
            return cls(
                visual_class=VisualClass.from_name(config["visual_class"]),
                geometric_occupancy=bool(config["geometric_occupancy"]),
                physically_traversable=bool(config["physically_traversable"]),
                bumpiness_coeff=float(config["bumpiness_coeff"]),
            )
        except KeyError as exc:
            raise MapFormatError(f"범례 항목에 {exc} 값이 없습니다") from None


def default_legend() -> Dict[str, TerrainCell]:
    """settings.DEFAULT_LEGEND → {문자: TerrainCell}"""
    return {char: TerrainCell.from_config(spec) for char, spec in DEFAULT_LEGEND.items()}


def legend_char(visual_class: VisualClass) -> str:
    """기본 범례에서 지형 종류에 해당하는 문자"""
    for char, spec in DEFAULT_LEGEND.items():
        if spec["visual_class"] == visual_class.label:
            return char
    raise MapFormatError(f"기본 범례에 없는 지형입니다: {visual_class.label}")


# 지도 밖 = 벽
OUT_OF_BOUNDS_CELL = TerrainCell(VisualClass.WALL, True, False, 0.0)


@dataclass(frozen=True)
class Region:
    """세계 좌표(미터) 축 정렬 사각형 [x0, x1) × [y0, y1)"""

    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def to_list(self) -> List[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values) -> "Region":
        if len(values) != 4:
            raise MapFormatError(f"영역은 [x0, y0, x1, y1] 네 값이어야 합니다: {values}")
        x0, y0, x1, y1 = (float(v) for v in values)
        if x1 <= x0 or y1 <= y0:
            raise MapFormatError(f"영역 크기가 0 이하입니다: {values}")
        return cls(x0, y0, x1, y1)


@dataclass
class TerrainMap:
    """
    격자 지도

    codes[j, i]는 palette의 인덱스입니다 (j = 행(y), i = 열(x)).
    센서 계산은 팔레트에서 파생된 numpy 배열(occupancy 등)을 사용합니다.
    """

    codes: np.ndarray
    palette: List[TerrainCell]
    chars: List[str]
    spawn_region: Region
    goal_region: Region
    cell_size: float = CELL_SIZE
    name: str = "map"

    occupancy: np.ndarray = field(init=False, repr=False)
    traversable: np.ndarray = field(init=False, repr=False)
    bumpiness: np.ndarray = field(init=False, repr=False)
    visual: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int16)
        if self.codes.ndim != 2:
            raise MapFormatError(f"격자는 2차원이어야 합니다: {self.codes.shape}")
        if len(self.palette) != len(self.chars):
            raise MapFormatError("팔레트와 문자 목록의 길이가 다릅니다")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= len(self.palette)):
            raise MapFormatError("격자에 팔레트 밖의 코드가 있습니다")
        self.refresh()

    def refresh(self):
        """codes가 바뀐 뒤 파생 배열을 다시 만듭니다."""
        occ = np.array([c.geometric_occupancy for c in self.palette], dtype=bool)
        trav = np.array([c.physically_traversable for c in self.palette], dtype=bool)
        bump = np.array([c.bumpiness_coeff for c in self.palette], dtype=float)
        vis = np.array([int(c.visual_class) for c in self.palette], dtype=np.int8)
        self.occupancy = occ[self.codes]
        self.traversable = trav[self.codes]
        self.bumpiness = bump[self.codes]
        self.visual = vis[self.codes]

    # --------------------------------------------------------
    # 크기
    # --------------------------------------------------------
    @property
    def height(self) -> int:
        return int(self.codes.shape[0])

    @property
    def width(self) -> int:
        return int(self.codes.shape[1])

    @property
    def extent(self) -> Tuple[float, float]:
        """지도 크기 (미터)"""
        return (self.width * self.cell_size, self.height * self.cell_size)

    # --------------------------------------------------------
    # 좌표 조회
    # --------------------------------------------------------
    def cell_index(self, x: float, y: float) -> Optional[Tuple[int, int]]:
        """세계 좌표 → (i, j). 지도 밖이면 None"""
        i = int(np.floor(x / self.cell_size))
        j = int(np.floor(y / self.cell_size))
        if 0 <= i < self.width and 0 <= j < self.height:
            return (i, j)
        return None

    def cell_at(self, x: float, y: float) -> TerrainCell:
        """세계 좌표의 지형 칸 (지도 밖 = 벽)"""
        idx = self.cell_index(x, y)
        if idx is None:
            return OUT_OF_BOUNDS_CELL
        i, j = idx
        return self.palette[int(self.codes[j, i])]

    def cell_center(self, i: int, j: int) -> Tuple[float, float]:
        return ((i + 0.5) * self.cell_size, (j + 0.5) * self.cell_size)

    def sample(self, xs: np.ndarray, ys: np.ndarray, layer: str) -> np.ndarray:
        """
        여러 좌표의 속성을 한 번에 조회합니다 (광선 진행용).

        Args:
            layer: "occupancy" | "traversable" | "bumpiness" | "visual"
        """
        grid = getattr(self, layer)
        ii = np.floor(np.asarray(xs) / self.cell_size).astype(np.int64)
        jj = np.floor(np.asarray(ys) / self.cell_size).astype(np.int64)
        inside = (ii >= 0) & (ii < self.width) & (jj >= 0) & (jj < self.height)
        values = grid[np.clip(jj, 0, self.height - 1), np.clip(ii, 0, self.width - 1)]
        return np.where(inside, values, _OOB_LAYER_VALUE[layer])

    def cells(self) -> Iterator[List[TerrainCell]]:
        """행 단위(row-major, 아래 행부터)로 TerrainCell을 돌려줍니다."""
        for j in range(self.height):
            yield [self.palette[int(c)] for c in self.codes[j]]

    def index_of(self, x: float, y: float) -> Tuple[int, int]:
        """세계 좌표 → (i, j), 지도 밖이면 가장 가까운 칸으로 자름"""
        i = min(max(int(np.floor(x / self.cell_size)), 0), self.width - 1)
        j = min(max(int(np.floor(y / self.cell_size)), 0), self.height - 1)
        return (i, j)

    # --------------------------------------------------------
    # 텍스트 변환
    # --------------------------------------------------------
    def to_text(self) -> str:
        """YAML 지도 파일 내용"""
        rows = ["".join(self.chars[int(c)] for c in self.codes[j]) for j in range(self.height - 1, -1, -1)]
        legend = {char: cell.to_dict() for char, cell in zip(self.chars, self.palette)}
        document = {
            "format_version": MAP_FORMAT_VERSION,
            "name": self.name,
            "cell_size": self.cell_size,
            "spawn_region": self.spawn_region.to_list(),
            "goal_region": self.goal_region.to_list(),
            "legend": legend,
            "grid": "\n".join(rows) + "\n",
        }
        return yaml.safe_dump(document, sort_keys=True, allow_unicode=True, width=4096)

    @classmethod
    def from_text(cls, text: str) -> "TerrainMap":
        try:
            document = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise MapFormatError(f"지도 파일을 해석할 수 없습니다: {exc}") from exc
        if not isinstance(document, dict):
            raise MapFormatError("지도 파일 최상위는 키-값 형태여야 합니다")

        version = document.get("format_version")
        if version != MAP_FORMAT_VERSION:
            raise MapFormatError(f"지원하지 않는 지도 형식 버전입니다: {version}")

        legend_raw = document.get("legend") or {}
        legend = dict(default_legend())
        for char, spec in legend_raw.items():
            if len(str(char)) != 1:
                raise MapFormatError(f"범례 문자는 한 글자여야 합니다: {char!r}")
            legend[str(char)] = TerrainCell.from_config(spec)

        rows = [row for row in str(document.get("grid", "")).splitlines() if row.strip()]
        if not rows:
            raise MapFormatError("grid가 비어 있습니다")
        width = len(rows[0])
        if any(len(row) != width for row in rows):
            raise MapFormatError("grid의 모든 줄 길이가 같아야 합니다")

        chars = sorted(legend)
        lookup = {char: k for k, char in enumerate(chars)}
        codes = np.zeros((len(rows), width), dtype=np.int16)
        for r, row in enumerate(rows):
            j = len(rows) - 1 - r
            for i, char in enumerate(row):
                if char not in lookup:
                    raise MapFormatError(f"범례에 없는 문자입니다: {char!r} (행 {r}, 열 {i})")
                codes[j, i] = lookup[char]

        return cls(
            codes=codes,
            palette=[legend[c] for c in chars],
            chars=chars,
            spawn_region=Region.from_list(document["spawn_region"]),
            goal_region=Region.from_list(document["goal_region"]),
            cell_size=float(document.get("cell_size", CELL_SIZE)),
            name=str(document.get("name", "map")),
        )

    def copy(self) -> "TerrainMap":
        return TerrainMap(
            codes=self.codes.copy(),
            palette=list(self.palette),
            chars=list(self.chars),
            spawn_region=self.spawn_region,
            goal_region=self.goal_region,
            cell_size=self.cell_size,
            name=self.name,
        )


_OOB_LAYER_VALUE = {
    "occupancy": True,
    "traversable": False,
    "bumpiness": 0.0,
    "visual": int(VisualClass.WALL),
}


def save_map(terrain: TerrainMap, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fid:
        fid.write(terrain.to_text())
    logger.info("지도 저장: %s (%dx%d)", path, terrain.width, terrain.height)


def load_map(path: str) -> TerrainMap:
    try:
        with open(path, "r", encoding="utf-8") as fid:
            return TerrainMap.from_text(fid.read())
    except OSError as exc:
        raise MapFormatError(f"지도 파일을 읽을 수 없습니다: {path} ({exc})") from exc


def build_map(
    grid_rows: List[str],
    spawn_region: Region,
    goal_region: Region,
    cell_size: float = CELL_SIZE,
    name: str = "map",
) -> TerrainMap:
    """
    기본 범례 문자로 쓴 격자(맨 윗줄 = 가장 높은 y)로 지도를 만듭니다.
    테스트와 지도 생성기에서 사용합니다.
    """
    legend = default_legend()
    chars = sorted(legend)
    lookup = {char: k for k, char in enumerate(chars)}
    height = len(grid_rows)
    codes = np.zeros((height, len(grid_rows[0])), dtype=np.int16)
    for r, row in enumerate(grid_rows):
        for i, char in enumerate(row):
            if char not in lookup:
                raise MapFormatError(f"범례에 없는 문자입니다: {char!r}")
            codes[height - 1 - r, i] = lookup[char]
    return TerrainMap(
        codes=codes,
        palette=[legend[c] for c in chars],
        chars=chars,
        spawn_region=spawn_region,
        goal_region=goal_region,
        cell_size=cell_size,
        name=name,
    )
