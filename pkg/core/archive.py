"""
저장 파일(아카이브) 모듈
=========================

수집 데이터(shard), 라벨링된 데이터셋, 모델 체크포인트를 모두
같은 형식으로 저장합니다.

[파일 구조]
zip 파일 하나에 다음이 들어있습니다:

    meta.json          ← 형식 버전, 설정값 등 메타 정보
    arrays/<이름>.npy  ← numpy 배열 (이름별로 하나씩)

[항목 시각 고정]
zip 항목 시각은 항상 1980-01-01입니다.
같은 데이터 → 같은 파일(같은 해시).
"""

import hashlib
import io
import json
import os
import zipfile
from typing import Any, Dict, Tuple

import numpy as np

from config.settings import ARCHIVE_FORMAT_VERSION
from core.errors import DatasetError

# zip 항목 시각 고정값
_FIXED_DATE = (1980, 1, 1, 0, 0, 0)

_META_NAME = "meta.json"
_ARRAY_PREFIX = "arrays/"


def _zip_info(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def write_archive(path: str, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> str:
    """
    배열과 메타 정보를 아카이브 파일로 저장합니다.

    Args:
        path: 저장 경로
        arrays: {이름: numpy 배열}
        meta: JSON으로 저장 가능한 딕셔너리

    Returns:
        저장한 파일의 sha256 해시
    """
    full_meta = dict(meta)
    full_meta["format_version"] = ARCHIVE_FORMAT_VERSION

    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)

    try:
        with zipfile.ZipFile(path, "w") as zf:
            meta_text = json.dumps(full_meta, sort_keys=True, ensure_ascii=False, indent=2)
            zf.writestr(_zip_info(_META_NAME), meta_text.encode("utf-8"))

            # 이름순으로 저장해야 항상 같은 파일이 됩니다
            for name in sorted(arrays):
                buffer = io.BytesIO()
                np.lib.format.write_array(buffer, np.ascontiguousarray(arrays[name]), allow_pickle=False)
                zf.writestr(_zip_info(f"{_ARRAY_PREFIX}{name}.npy"), buffer.getvalue())
    except OSError as exc:
        raise DatasetError(f"아카이브 저장 실패: {path} ({exc})") from exc

    return file_sha256(path)


def read_archive(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    아카이브 파일을 읽어 (배열 딕셔너리, 메타 정보)를 반환합니다.

    형식 버전이 다르면 DatasetError를 발생시킵니다.
    """
    if not os.path.exists(path):
        raise DatasetError(f"파일이 없습니다: {path}")

    arrays: Dict[str, np.ndarray] = {}
    try:
        with zipfile.ZipFile(path, "r") as zf:
            meta = json.loads(zf.read(_META_NAME).decode("utf-8"))
            for name in zf.namelist():
                if not name.startswith(_ARRAY_PREFIX):
                    continue
                key = name[len(_ARRAY_PREFIX):-len(".npy")]
                with zf.open(name) as fid:
                    arrays[key] = np.lib.format.read_array(io.BytesIO(fid.read()), allow_pickle=False)
    except (OSError, KeyError, zipfile.BadZipFile, ValueError) as exc:
        raise DatasetError(f"아카이브 읽기 실패: {path} ({exc})") from exc

    version = meta.get("format_version")
    if version != ARCHIVE_FORMAT_VERSION:
        raise DatasetError(
            f"지원하지 않는 형식 버전입니다: {version} (기대값 {ARCHIVE_FORMAT_VERSION}, 파일 {path})"
        )
    return arrays, meta


def file_sha256(path: str) -> str:
    """파일 내용의 sha256 해시 (16진수 문자열)"""
    digest = hashlib.sha256()
    with open(path, "rb") as fid:
        for chunk in iter(lambda: fid.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def json_fingerprint(obj: Any) -> str:
    """JSON으로 표현 가능한 객체의 정규화 해시 (설정값 캐시 키로 사용)"""
    text = json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
