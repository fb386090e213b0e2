"""
학습 파이프라인 테스트
======================

harness/pipeline.py (수집 → 라벨링 → 학습, manifest 캐시)를 검증합니다.

[캐시 규칙]
    단계 key = 입력 해시 + 설정 구역 해시
    key가 같고 출력 파일 해시도 그대로면 다시 실행하지 않습니다.
"""

import json
import sys
import os

import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.loader import build_config
from core.archive import file_sha256
from core.errors import DatasetError, MapGenerationError, StageError
from harness.pipeline import MANIFEST_NAME, StageManifest, run_self_improvement, run_training_pipeline, stage

URBAN = [("Urban", 11)]
STEPS = 200


def tiny_config(**training):
    return build_config({
        "simulator": {"camera_rays": 4, "ground_lookaheads": [0.5, 1.0]},
        "model": {"encoder_sizes": [8, 4], "rnn_hidden": 4, "action_embed": 3, "output_hidden": 5, "horizon": 3},
        "labeler": {"horizon": 3},
        "planner": {"horizon": 3, "samples": 16},
        "training": {"batch_size": 64, "max_epochs": 2, "patience": 2, **training},
    })


class TestStage:
    """단계 예외 포장 테스트"""

    def test_wraps_exception_with_stage_name(self):
        with pytest.raises(StageError) as info:
            with stage("label:demo"):
                raise DatasetError("라벨이 없습니다")
        assert info.value.stage == "label:demo"
        assert isinstance(info.value.cause, DatasetError)

    def test_stage_error_passes_through(self):
        with pytest.raises(StageError) as info:
            with stage("outer"):
                with stage("inner"):
                    raise ValueError("x")
        assert info.value.stage == "inner"


class TestManifest:
    """manifest.json 테스트"""

    def test_cached_needs_same_key_and_hash(self, tmp_path):
        out = tmp_path / "data.bin"
        out.write_bytes(b"abc")
        manifest = StageManifest(str(tmp_path))
        manifest.record("collect:x", "k1", "data.bin", file_sha256(str(out)), {})
        reloaded = StageManifest(str(tmp_path))
        assert reloaded.cached("collect:x", "k1")
        assert not reloaded.cached("collect:x", "k2")

        out.write_bytes(b"changed")
        assert not reloaded.cached("collect:x", "k1")

    def test_broken_manifest(self, tmp_path):
        (tmp_path / MANIFEST_NAME).write_text("{not json")
        with pytest.raises(DatasetError):
            StageManifest(str(tmp_path))


class TestTrainingPipeline:
    """수집 → 라벨링 → 학습 테스트"""

    def test_second_run_is_cached(self, tmp_path):
        config = tiny_config()
        first = run_training_pipeline(config, str(tmp_path), URBAN, seed=0, steps=STEPS)
        assert first.stages_run == ["collect:Urban:11:200", "label:model", "train:model"]
        assert os.path.exists(first.checkpoint_path)
        assert os.path.exists(str(tmp_path / "curves" / "model.csv"))
        assert first.data_steps == STEPS

        second = run_training_pipeline(config, str(tmp_path), URBAN, seed=0, steps=STEPS)
        assert second.stages_run == []
        assert second.stages_cached == first.stages_run
        assert second.checkpoint_path == first.checkpoint_path
        assert set(second.training) == set(first.training)

    def test_deleted_dataset_is_relabeled(self, tmp_path):
        """라벨링 결과가 같으면 학습 단계는 캐시를 그대로 씁니다."""
        config = tiny_config()
        first = run_training_pipeline(config, str(tmp_path), URBAN, seed=0, steps=STEPS)
        os.remove(first.dataset_path)
        again = run_training_pipeline(config, str(tmp_path), URBAN, seed=0, steps=STEPS)
        assert again.stages_run == ["label:model"]
        assert "train:model" in again.stages_cached

    def test_training_config_change_retrains_only(self, tmp_path):
        run_training_pipeline(tiny_config(), str(tmp_path), URBAN, seed=0, steps=STEPS)
        changed = run_training_pipeline(tiny_config(max_epochs=1), str(tmp_path), URBAN, seed=0, steps=STEPS)
        assert changed.stages_run == ["train:model"]

        with open(tmp_path / MANIFEST_NAME, encoding="utf-8") as fid:
            stages = json.load(fid)["stages"]
        assert set(stages) == {"collect:Urban:11:200", "label:model", "train:model"}

    def test_no_maps(self, tmp_path):
        with pytest.raises(StageError) as info:
            run_training_pipeline(tiny_config(), str(tmp_path), [], seed=0)
        assert info.value.stage == "collect"

    def test_unknown_map_kind(self, tmp_path):
        with pytest.raises(MapGenerationError):
            run_training_pipeline(tiny_config(), str(tmp_path), [("Mars", 1)], seed=0, steps=STEPS)


@pytest.mark.slow
class TestSelfImprovement:
    """자기 개선 실험 (작은 예산으로 끝까지 실행)"""

    def test_table_and_shared_shards(self, tmp_path):
        config = tiny_config().with_overrides(harness={"starts": 1, "trials_per_start": 1, "max_steps": 15})
        result = run_self_improvement(config, str(tmp_path), seed=0, source_steps=STEPS, target_steps=100)
        assert list(result.table["variant"]) == ["zeroshot", "target_only", "finetuned"]
        assert list(result.table["data_steps"]) == [STEPS, 100, STEPS + 100]
        assert (tmp_path / "selfimprove.csv").exists()
        # 미세조정 모델은 앞에서 수집한 두 shard를 다시 씁니다
        assert result.pipelines["finetuned"].stages_cached[:2] == ["collect:Urban:11:200", "collect:OffRoad:31:100"]
        assert result.pipelines["finetuned"].training["init_sha256"]
