"""
자율 주행 학습 시스템 - 실행 스크립트
=====================================

데이터 수집부터 평가 보고서까지 모든 단계를 명령어 하나씩으로 실행합니다.

[실행 방법]
    python run.py <명령> [옵션]

[명령 목록]
    make-maps    지도 파일 생성 (Urban, OffRoad, TallGrassCorridor, NovelRandom)
    collect      자율 데이터 수집 → shard 파일
    label        shard들 → 라벨링된 데이터셋
    train        데이터셋 → 체크포인트
    deploy       정책 하나로 목표까지 한 번 주행 → 궤적 파일
    eval         실험 묶음 평가 (필요하면 학습 파이프라인부터 실행)
    selfimprove  자기 개선 실험 (zeroshot / target_only / finetuned)
    report       평가 폴더 → SVG 그림 + 요약 표

[공통 옵션]
    --config <yaml>   설정 파일
    --seed <정수>     난수 시드
    --out-dir <폴더>  출력 루트 (없으면 NAV_OUTPUT_DIR 환경 변수, 그것도 없으면 ./outputs)
    --log-level       DEBUG / INFO / WARNING

[사용 예시]
    python run.py make-maps --out-dir outputs
    python run.py eval --suite urban --seed 0
    python run.py report --eval-dir outputs/eval/urban
"""

import argparse
import logging
import os
import sys

# 프로젝트 루트 디렉토리를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from config.loader import AppConfig, load_config, resolve_output_dir  # noqa: E402
from config.settings import DETECTOR_BY_MAP_KIND  # noqa: E402
from core.collision import DetectorMode  # noqa: E402
from core.errors import (  # noqa: E402
    ConfigError,
    DatasetError,
    LabelModeMismatchError,
    MapFormatError,
    MapGenerationError,
    NavError,
    StageError,
    TrainingDivergedError,
)
from core.model import load_checkpoint, save_checkpoint  # noqa: E402
from core.trainer import train, write_curve  # noqa: E402
from harness.experiments import (  # noqa: E402
    SUITES,
    build_policy,
    eval_starts,
    get_suite,
    optimizer_comparison,
    run_eval,
)
from harness.pipeline import run_self_improvement, run_suite  # noqa: E402
from harness.report import emit_report  # noqa: E402
from harness.rollout import mpc_run, write_trajectory  # noqa: E402
from pipeline.collector import collect_to_shard  # noqa: E402
from pipeline.dataset import EpisodeDataset  # noqa: E402
from pipeline.labeler import calibrate_bump_threshold, label_dataset  # noqa: E402
from simulator.engine import RobotState  # noqa: E402
from simulator.maps import MapKind, make_map, resolve_map  # noqa: E402
from simulator.terrain import save_map  # noqa: E402


logger = logging.getLogger("run")

# 예외 종류 → 종료 코드 (앞에서부터 먼저 맞는 것)
EXIT_CODES = (
    (ConfigError, 2),
    (TrainingDivergedError, 4),
    (DatasetError, 3),
    (LabelModeMismatchError, 3),
    (MapFormatError, 3),
    (MapGenerationError, 3),
)


def exit_code(exc: Exception) -> int:
    """단계 실패는 원인 예외 기준으로 판단합니다."""
    if isinstance(exc, StageError):
        exc = exc.cause
    for kind, code in EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return 1


def _floats(text: str, count: int, name: str):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{name}: 숫자 {count}개를 쉼표로 구분해 주세요 ({text})") from exc
    if len(values) != count:
        raise ConfigError(f"{name}: 숫자 {count}개가 필요합니다 ({text})")
    return values


def _with_horizon(config: AppConfig, horizon: int) -> AppConfig:
    return config.with_overrides(labeler={"horizon": horizon}, model={"horizon": horizon}, planner={"horizon": horizon})


# ============================================================
# 명령별 실행 함수
# ============================================================
def cmd_make_maps(args, config: AppConfig) -> None:
    out_dir = os.path.join(args.out_dir, "maps")
    os.makedirs(out_dir, exist_ok=True)
    kinds = args.kinds or [k.value for k in MapKind]
    for kind in kinds:
        for seed in args.map_seeds:
            terrain = make_map(kind, seed)
            save_map(terrain, os.path.join(out_dir, f"{terrain.name}.yaml"))
    print(f"  지도 저장 폴더: {out_dir}")


def cmd_collect(args, config: AppConfig) -> None:
    terrain = resolve_map(args.map, args.map_seed)
    if args.detector:
        mode = DetectorMode.parse(args.detector)
    elif args.map in DETECTOR_BY_MAP_KIND:
        mode = DetectorMode.parse(DETECTOR_BY_MAP_KIND[args.map])
    else:
        raise ConfigError("지도 파일로 수집할 때는 --detector range|inertial 을 지정해 주세요")
    out = args.out or os.path.join(args.out_dir, "shards", f"{terrain.name}_{args.seed}.npz")
    summary = collect_to_shard(
        terrain, args.steps or config.collector.steps, mode, args.seed, out, config.collector, config.simulator
    )
    print(f"  기록 {summary.records}개, 에피소드 {summary.episodes}개, 개입 {summary.interventions}회")
    print(f"  저장: {summary.path} (sha256 {summary.sha256[:12]})")


def cmd_label(args, config: AppConfig) -> None:
    if args.horizon:
        config = _with_horizon(config, args.horizon)
    if args.bump_threshold is not None:
        config = config.with_overrides(labeler={"bump_threshold": args.bump_threshold})
    merged = EpisodeDataset.concat([EpisodeDataset.load(p) for p in args.inputs])
    mode = DetectorMode.parse(args.detector) if args.detector else None
    labeled = label_dataset(merged, config.labeler, mode)
    labeled.meta["labels"]["calibration"] = calibrate_bump_threshold(
        config.labeler.bump_threshold, config.labeler.calibration_speed, config.simulator
    )
    out = args.out or os.path.join(args.out_dir, "datasets", "labeled.npz")
    digest = labeled.save(out)
    labels = labeled.meta["labels"]
    print(f"  충돌 비율 {labels['collision_rate']:.4f}, 울퉁불퉁 비율 {labels['bumpy_rate']:.4f}")
    print(f"  저장: {out} (sha256 {digest[:12]})")


def cmd_train(args, config: AppConfig) -> None:
    dataset = EpisodeDataset.load(args.data)
    init_model = load_checkpoint(args.init)[0] if args.init else None
    result = train(dataset, config, args.seed, init_model)
    out = args.out or os.path.join(args.out_dir, "checkpoints", "model.npz")
    write_curve(result.curve, os.path.splitext(out)[0] + "_curve.csv")
    digest = save_checkpoint(result.model, out, result.summary())
    print(f"  최고 검증 손실 {result.best_val_loss:.4f} (epoch {result.best_epoch})")
    print(f"  저장: {out} (sha256 {digest[:12]})")


def cmd_deploy(args, config: AppConfig) -> None:
    terrain = resolve_map(args.map, args.map_seed)
    overrides = {}
    if args.goal:
        overrides["goal"] = _floats(args.goal, 2, "--goal")
    if args.alpha_pos is not None:
        overrides["alpha_pos"] = args.alpha_pos
    if args.alpha_bum is not None:
        overrides["alpha_bum"] = args.alpha_bum
    if overrides:
        config = config.with_overrides(reward=overrides)
    goal = config.reward.goal or terrain.goal_region.center

    model = load_checkpoint(args.ckpt)[0] if args.ckpt else None
    if args.start:
        start = RobotState.at(*_floats(args.start, 3, "--start"))
    else:
        start = eval_starts(terrain, 1, args.seed, config.collector)[0]
    handle = build_policy(args.policy, config, terrain, goal, args.seed, model)
    result = mpc_run(
        terrain, start, handle.policy, args.max_steps or config.harness.max_steps,
        np.random.default_rng(args.seed), config.planner, config.simulator, goal,
        sync=handle.sync, candidate_every=args.candidate_every, policy_name=args.policy,
    )
    result.meta.update({"seed": args.seed})
    out = args.out or os.path.join(args.out_dir, "deploy", f"{args.policy}_{terrain.name}_{args.seed}.jsonl")
    write_trajectory(result, out)
    metrics = result.metrics()
    print(f"  결과: {metrics['outcome']} ({metrics['steps']} 스텝, 평균 울퉁불퉁함 {metrics['mean_bumpiness']:.3f})")
    print(f"  저장: {out}")


def cmd_eval(args, config: AppConfig) -> None:
    if args.list:
        for key, data in SUITES.items():
            print(f"  {key:16s} {data['description']}")
        return
    if args.compare_optimizers:
        scenes = optimizer_comparison(config, scenes=args.scenes, seed=args.seed)
        table = pd.DataFrame([vars(s) for s in scenes])
        out = os.path.join(args.out_dir, "eval", "optimizer_comparison.csv")
        os.makedirs(os.path.dirname(out), exist_ok=True)
        table.to_csv(out, index=False)
        wins = int((table["planner_best"] >= table["shooting_best"]).sum())
        print(f"  시간 상관 샘플링 ≥ 무작위 샘플링: {wins}/{len(table)} 장면")
        return
    if not args.suite:
        raise ConfigError("--suite 를 지정해 주세요 (목록: --list)")
    if args.ckpt:
        spec = get_suite(args.suite)
        models = {"learned": load_checkpoint(args.ckpt)[0]}
        result = run_eval(spec, config, models, os.path.join(args.out_dir, "eval", spec.name), args.seed)
    else:
        result = run_suite(args.suite, config, args.out_dir, args.seed, args.steps)
    print(result.summary.to_string(index=False))


def cmd_selfimprove(args, config: AppConfig) -> None:
    result = run_self_improvement(
        config, os.path.join(args.out_dir, "selfimprove"), args.seed,
        source_steps=args.source_steps, target_steps=args.target_steps,
    )
    print(result.table.to_string(index=False))


def cmd_report(args, config: AppConfig) -> None:
    maps = None
    if args.map:
        terrain = resolve_map(args.map, args.map_seed)
        maps = {terrain.name: terrain}
    bundle = emit_report(args.eval_dir, args.report_dir, maps, args.fan_frames)
    print(f"  그림 {len(bundle.images)}개, 표: {bundle.table_path}")


# ============================================================
# 명령줄 인자
# ============================================================
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML 설정 파일")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None, help="출력 루트 폴더")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(description="자율 주행 학습 시스템")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-maps", parents=[common], help="지도 파일 생성")
    p.add_argument("--kinds", nargs="*", default=None)
    p.add_argument("--map-seeds", nargs="*", type=int, default=[11, 21, 31, 101, 102, 103])
    p.set_defaults(func=cmd_make_maps)

    p = sub.add_parser("collect", parents=[common], help="자율 데이터 수집")
    p.add_argument("--map", required=True, help="지도 파일 또는 종류 이름")
    p.add_argument("--map-seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--detector", choices=[m.value for m in DetectorMode], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("label", parents=[common], help="shard 라벨링")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--bump-threshold", type=float, default=None)
    p.add_argument("--detector", choices=[m.value for m in DetectorMode], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", parents=[common], help="예측 모델 학습")
    p.add_argument("--data", required=True)
    p.add_argument("--init", default=None, help="이어서 학습할 체크포인트")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("deploy", parents=[common], help="정책으로 한 번 주행")
    p.add_argument("--map", required=True)
    p.add_argument("--map-seed", type=int, default=0)
    p.add_argument("--policy", choices=["learned", "learned_nobump", "lidar", "naive", "oracle"], default="learned")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--goal", default=None, help="x,y")
    p.add_argument("--start", default=None, help="x,y,heading")
    p.add_argument("--alpha-pos", type=float, default=None)
    p.add_argument("--alpha-bum", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--candidate-every", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("eval", parents=[common], help="실험 묶음 평가")
    p.add_argument("--suite", choices=sorted(SUITES), default=None)
    p.add_argument("--ckpt", default=None, help="주면 학습 파이프라인을 건너뜀")
    p.add_argument("--steps", type=int, default=None, help="지도당 수집 스텝 수")
    p.add_argument("--list", action="store_true")
    p.add_argument("--compare-optimizers", action="store_true")
    p.add_argument("--scenes", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfimprove", parents=[common], help="자기 개선 실험")
    p.add_argument("--source-steps", type=int, default=None)
    p.add_argument("--target-steps", type=int, default=None)
    p.set_defaults(func=cmd_selfimprove)

    p = sub.add_parser("report", parents=[common], help="보고서 생성")
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--report-dir", default=None)
    p.add_argument("--map", default=None)
    p.add_argument("--map-seed", type=int, default=0)
    p.add_argument("--fan-frames", type=int, default=3)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    """메인 실행 함수"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    print()
    print("=" * 60)
    print("  자율 주행 학습 시스템")
    print("  Self-Supervised Navigation Pipeline")
    print("=" * 60)
    print(f"  명령: {args.command}")
    print()

    try:
        config = load_config(args.config)
        args.out_dir = resolve_output_dir(args.out_dir, config)
        print(f"  출력 폴더: {args.out_dir}")
        args.func(args, config)
    except NavError as exc:
        print(f"오류: {exc}", file=sys.stderr)
        return exit_code(exc)

    print()
    print("=" * 60)
    return 0


if __name__ == "__main__":
    sys.exit(main())
