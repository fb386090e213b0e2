"""
pipeline 패키지 - 학습 데이터 파이프라인
==========================================

- dataset.py  : 수집 기록 저장/읽기 (EpisodeDataset)
- collector.py: 랜덤 워크 자율 데이터 수집
- labeler.py  : 자기 지도(self-supervised) 사건 라벨 계산
"""
