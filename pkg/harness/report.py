"""
보고서 (SVG 그림 + 요약 표)
============================

평가 폴더(runs.csv, trajectories/*.jsonl)를 읽어서 그림과 표를 만듭니다.

[만드는 파일]
    report/
    ├── trajectories_<묶음>.svg      지도 위 주행 궤적 (색 = 결과, 선 모양 = 정책)
    ├── fan_<정책>_<지도>_<스텝>.svg  후보 경로 부채꼴 (색 = 예측 충돌 확률 / 울퉁불퉁 확률)
    └── summary.txt                  정책별 요약 표

[결과 색]
    ReachedGoal = 초록, Collided = 빨강, Trapped = 주황, Timeout = 회색

표의 숫자는 모두 궤적 파일에서 다시 계산합니다 (runs.csv를 믿지 않음).
같은 입력이면 같은 바이트의 파일이 나옵니다 (SVG 해시 고정, 날짜 메타데이터 제거).
"""

import glob
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from core.errors import DatasetError, MapGenerationError  # noqa: E402
from core.geometry import local_to_world  # noqa: E402
from harness.experiments import summarize_runs  # noqa: E402
from harness.rollout import Outcome, metrics_from_trajectory, read_trajectory  # noqa: E402
from simulator.maps import make_map  # noqa: E402
from simulator.terrain import NUM_VISUAL_CLASSES, TerrainMap, VisualClass  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "nav-report"
plt.rcParams["svg.fonttype"] = "none"

OUTCOME_COLORS = {
    Outcome.REACHED_GOAL.value: "#2ca02c",
    Outcome.COLLIDED.value: "#d62728",
    Outcome.TRAPPED.value: "#ff7f0e",
    Outcome.TIMEOUT.value: "#7f7f7f",
}
POLICY_STYLES = {"learned": "-", "learned_nobump": "--", "lidar": "-.", "naive": ":", "oracle": "-"}

TERRAIN_COLORS = {
    VisualClass.FREE_GROUND: "#f2efe6",
    VisualClass.CONCRETE: "#c8c8c8",
    VisualClass.GRASS: "#b9dc9c",
    VisualClass.TALL_GRASS: "#6fa85a",
    VisualClass.GRAVEL: "#c9b38f",
    VisualClass.WALL: "#3b3b3b",
    VisualClass.TREE: "#2f5d2f",
}

BUMPINESS_UNIT = "mean injected angular-noise magnitude per step (rad/s)"


@dataclass
class ReportBundle:
    out_dir: str
    images: List[str] = field(default_factory=list)
    table_path: str = ""
    summary: Optional[pd.DataFrame] = None


# ============================================================
# 입력 읽기
# ============================================================
def terrain_for(name: str, maps: Optional[Dict[str, TerrainMap]] = None) -> TerrainMap:
    """지도 이름("Urban-11")으로 지도를 찾거나 다시 생성합니다."""
    if maps and name in maps:
        return maps[name]
    kind, _, seed = name.rpartition("-")
    try:
        return make_map(kind, int(seed))
    except (ValueError, MapGenerationError) as exc:
        raise DatasetError(f"지도 '{name}'를 다시 만들 수 없습니다. 지도 파일을 직접 지정하세요") from exc


def trajectory_files(eval_dir: str) -> List[str]:
    paths = sorted(glob.glob(os.path.join(eval_dir, "trajectories", "*.jsonl")))
    if not paths:
        raise DatasetError(f"궤적 파일이 없습니다: {eval_dir}/trajectories")
    return paths


def runs_from_trajectories(paths: List[str]) -> pd.DataFrame:
    """궤적 파일들 → 주행 지표 표 (보고서 표의 유일한 입력)"""
    rows = [metrics_from_trajectory(p) for p in paths]
    return pd.DataFrame(rows).sort_values(["map", "policy", "start_index", "trial"], kind="mergesort")


def format_summary(summary: pd.DataFrame, title: str) -> str:
    lines = [title, "=" * len(title), ""]
    lines.append(summary.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    lines.append("")
    lines.append(f"bumpiness: {BUMPINESS_UNIT}")
    return "\n".join(lines) + "\n"


# ============================================================
# 그림
# ============================================================
def _draw_terrain(ax, terrain: TerrainMap) -> None:
    cmap = ListedColormap([TERRAIN_COLORS[VisualClass(k)] for k in range(NUM_VISUAL_CLASSES)])
    width, height = terrain.extent
    ax.imshow(
        terrain.visual, origin="lower", extent=(0, width, 0, height), cmap=cmap,
        vmin=-0.5, vmax=NUM_VISUAL_CLASSES - 0.5, interpolation="nearest",
    )
    for region, color in ((terrain.spawn_region, "#1f77b4"), (terrain.goal_region, "#e377c2")):
        ax.add_patch(plt.Rectangle(
            (region.x0, region.y0), region.x1 - region.x0, region.y1 - region.y0,
            fill=False, edgecolor=color, linewidth=1.5,
        ))
    ax.set_aspect("equal")
    ax.set_xlim(0, width)
    ax.set_ylim(0, height)


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_trajectories(
    paths: List[str], out_path: str, title: str, maps: Optional[Dict[str, TerrainMap]] = None
) -> str:
    """지도 위에 모든 주행 궤적을 그립니다 (지도마다 한 칸)."""
    by_map: Dict[str, List[Tuple[dict, List[dict], dict]]] = {}
    for path in paths:
        header, steps, result = read_trajectory(path)
        by_map.setdefault(header["map"], []).append((header, steps, result))

    names = sorted(by_map)
    fig, axes = plt.subplots(1, len(names), figsize=(6 * len(names), 6), squeeze=False)
    for ax, name in zip(axes[0], names):
        _draw_terrain(ax, terrain_for(name, maps))
        for header, steps, result in by_map[name]:
            xs = [header["start"][0]] + [s["pose"][0] for s in steps]
            ys = [header["start"][1]] + [s["pose"][1] for s in steps]
            ax.plot(
                xs, ys, POLICY_STYLES.get(header["policy"], "-"),
                color=OUTCOME_COLORS[result["outcome"]], linewidth=1.0, alpha=0.8,
            )
            ax.plot(xs[0], ys[0], "o", color="#1f77b4", markersize=3)
        ax.set_title(name)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")

    handles = [plt.Line2D([], [], color=c, label=o) for o, c in OUTCOME_COLORS.items()]
    policies = sorted({h["policy"] for runs in by_map.values() for h, _, _ in runs})
    handles += [plt.Line2D([], [], color="black", linestyle=POLICY_STYLES.get(p, "-"), label=p) for p in policies]
    fig.legend(handles=handles, loc="lower center", ncol=len(handles), fontsize=8)
    fig.suptitle(title)
    return _save(fig, out_path)


def plot_candidate_fan(
    header: dict, steps: List[dict], index: int, out_path: str, terrain: TerrainMap, window: float = 6.0
) -> str:
    """
    한 스텝의 후보 경로 부채꼴

    왼쪽: 예측 충돌 확률(후보별 최대값), 오른쪽: 예측 울퉁불퉁 확률(후보별 평균)
    """
    record = steps[index]
    pose = tuple(steps[index - 1]["pose"]) if index > 0 else tuple(header["start"])
    candidates = record["candidates"]
    world = local_to_world(pose, np.asarray(candidates["paths"], dtype=float))
    origin = np.broadcast_to(np.asarray(pose[:2]), (world.shape[0], 1, 2))
    segments = np.concatenate([origin, world], axis=1)

    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    for ax, key, label in ((axes[0], "p_coll", "P(collision)"), (axes[1], "p_bump", "P(bumpy)")):
        _draw_terrain(ax, terrain)
        lines = LineCollection(segments, cmap="RdYlGn_r", linewidths=1.2)
        lines.set_array(np.asarray(candidates[key], dtype=float))
        lines.set_clim(0.0, 1.0)
        ax.add_collection(lines)
        ax.plot(pose[0], pose[1], "o", color="#1f77b4", markersize=5)
        ax.set_xlim(pose[0] - window, pose[0] + window)
        ax.set_ylim(pose[1] - window, pose[1] + window)
        ax.set_title(f"{label}, step {record['step']}")
        fig.colorbar(lines, ax=ax, fraction=0.046, pad=0.04)
    fig.suptitle(f"{header['policy']} / {header['map']}")
    return _save(fig, out_path)


# ============================================================
# 보고서
# ============================================================
def emit_report(
    eval_dir: str,
    out_dir: Optional[str] = None,
    maps: Optional[Dict[str, TerrainMap]] = None,
    fan_frames: int = 3,
    title: Optional[str] = None,
) -> ReportBundle:
    """
    평가 폴더 → 그림 + 요약 표

    Args:
        eval_dir: run_eval이 저장한 폴더
        out_dir: 보고서 폴더 (기본: eval_dir/report)
        fan_frames: 후보 경로 그림을 그릴 최대 스텝 수
    """
    out_dir = out_dir or os.path.join(eval_dir, "report")
    paths = trajectory_files(eval_dir)
    suite = title or read_trajectory(paths[0])[0].get("suite") or os.path.basename(os.path.normpath(eval_dir))
    bundle = ReportBundle(out_dir=out_dir)

    runs = runs_from_trajectories(paths)
    bundle.summary = summarize_runs(runs)
    bundle.table_path = os.path.join(out_dir, "summary.txt")
    os.makedirs(out_dir, exist_ok=True)
    with open(bundle.table_path, "w", encoding="utf-8") as fid:
        fid.write(format_summary(bundle.summary, f"{suite}: {len(runs)} runs"))

    bundle.images.append(plot_trajectories(paths, os.path.join(out_dir, f"trajectories_{suite}.svg"), suite, maps))

    drawn = 0
    for path in paths:
        if drawn >= fan_frames:
            break
        header, steps, _ = read_trajectory(path)
        terrain = None
        for index, record in enumerate(steps):
            if drawn >= fan_frames:
                break
            if "candidates" not in record:
                continue
            terrain = terrain or terrain_for(header["map"], maps)
            name = f"fan_{header['policy']}_{header['map']}_s{header.get('start_index', 0)}_step{record['step']}.svg"
            bundle.images.append(plot_candidate_fan(header, steps, index, os.path.join(out_dir, name), terrain))
            drawn += 1

    logger.info("보고서 저장: %s (그림 %d개)", out_dir, len(bundle.images))
    return bundle
