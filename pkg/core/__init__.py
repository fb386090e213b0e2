"""
core 패키지 - 예측 모델과 계획의 핵심 로직
==========================================

이 패키지에는 로봇의 두뇌에 해당하는 코드가 들어있습니다:
- geometry.py : 2D 자세, 이륜 운동학, 좌표 변환, 행동 범위
- diffnet.py  : 작은 역전파 엔진 (텐서, 테이프, GRU, Adam)
- model.py    : 카메라 관측 + 행동 시퀀스 → 사건 확률/위치 예측 모델
- trainer.py  : 학습 루프 (에피소드 단위 분할, 조기 종료)
- planner.py  : 보상 함수와 MPC 플래너 (시간 상관 샘플링 + 가중 평균)
- baselines.py: 비교용 정책 (거리 센서 정책, 직진 정책)
- archive.py  : 재현 가능한 npz 저장, 파일 해시
- errors.py   : 예외 계층
"""
