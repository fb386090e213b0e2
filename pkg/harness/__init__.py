"""
harness 패키지 - 실험 실행과 평가
==================================

학습 파이프라인(수집 → 라벨링 → 학습)과 배치(deploy) 실험을 묶고,
정답(gt_*) 값으로 결과를 평가합니다.
정답 값을 읽는 곳은 이 패키지뿐입니다.

- oracle.py     : 정답 시뮬레이터를 예측 모델처럼 쓰는 OraclePredictor
- rollout.py    : MPC 주행 한 번(mpc_run), 궤적 파일, 주행 지표
- experiments.py: 실험 묶음(SUITES), 평가(run_eval), 부호 검정, 최적화기 비교
- pipeline.py   : 단계별 캐시가 있는 학습 파이프라인, 자기 개선 실험
- report.py     : SVG 그림과 요약 표
"""
