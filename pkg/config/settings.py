"""
자율주행 로봇 내비게이션 시스템 - 전체 설정값
===============================================

이 파일은 시스템의 모든 기본 설정값을 한 곳에서 관리합니다.
실험 조건에 맞게 이 값들을 수정하거나, YAML 설정 파일로 덮어쓰면 됩니다.
(설정 파일 형식은 config/loader.py 참고)

[설정값 변경 가이드]
- 로봇을 더 빠르게 움직이고 싶다면: V_MAX, W_MAX 수정
- 데이터를 더 많이 모으고 싶다면: COLLECT_STEPS 수정
- 울퉁불퉁한 지형을 더 강하게 피하고 싶다면: ALPHA_BUM_URBAN 수정
- 플래너 후보 경로 수를 바꾸고 싶다면: PLANNER_SAMPLES 수정
"""

# ============================================================
# 1. 시뮬레이션 설정 (simworld)
# ============================================================
# 제어 주기 (초). 4Hz = 0.25초마다 한 번 행동을 결정합니다.
SIM_DT = 0.25

# 행동 한계값
# v: 선속도 (m/s), w: 각속도 (rad/s)
V_MAX = 2.0
W_MAX = 1.5

# 지형 격자 한 칸의 크기 (미터)
CELL_SIZE = 0.5

# 지형 울퉁불퉁함 → IMU 각속도 잡음 변환 계수
# 잡음 크기 = BUMP_GAIN × 지형 울퉁불퉁함 계수 × |선속도|
BUMP_GAIN = 1.0

# 가속도 잡음은 각속도 잡음의 절반 크기로 주입
ACCEL_NOISE_RATIO = 0.5

# 오도메트리(바퀴 엔코더 적분) 잡음 - 한 스텝당 표준편차
ODOM_NOISE_POS = 0.01        # 미터
ODOM_NOISE_HEADING = 0.002   # 라디안

# 카메라 (스캔라인 형태로 단순화한 카메라)
CAMERA_FOV_DEG = 170.0                   # 시야각 (도)
CAMERA_RAYS = 32                         # 시야각을 나누는 광선 수
GROUND_LOOKAHEADS = (0.5, 1.0, 2.0, 4.0)  # 바닥 지형을 샘플링할 전방 거리 (미터)

# 거리 센서 (2D LIDAR 대응)
RANGE_RAYS = 72          # 360도를 5도 간격으로
MAX_RANGE = 10.0         # 최대 측정 거리 (미터)
RANGE_NOISE_STD = 0.0    # 거리 측정 잡음 (0 = 잡음 없음)

# 광선 진행(ray marching) 간격 = 격자 크기 × 이 비율
# 0.1이면 격자 한 칸을 10번 나누어 검사
RAY_STEP_FRACTION = 0.1

# ============================================================
# 2. 지형 설정 (terrain)
# ============================================================
# 지도 파일에서 사용하는 기본 범례 (문자 → 지형 속성)
#
# 각 항목 설명:
#   visual_class: 카메라에 보이는 지형 종류
#   geometric_occupancy: 거리 센서에 장애물로 잡히는가?
#   physically_traversable: 실제로 로봇이 지나갈 수 있는가?
#   bumpiness_coeff: 울퉁불퉁함 계수 (0~1)
#
# 주의: 키 큰 풀(TallGrass)은 거리 센서에는 장애물로 보이지만
#       실제로는 지나갈 수 있습니다. 이것이 이 시스템의 핵심 문제입니다!
DEFAULT_LEGEND = {
    ".":  {"visual_class": "FreeGround", "geometric_occupancy": False,
           "physically_traversable": True, "bumpiness_coeff": 0.3},
    "=":  {"visual_class": "Concrete", "geometric_occupancy": False,
           "physically_traversable": True, "bumpiness_coeff": 0.2},
    ",":  {"visual_class": "Grass", "geometric_occupancy": False,
           "physically_traversable": True, "bumpiness_coeff": 0.6},
    '"':  {"visual_class": "TallGrass", "geometric_occupancy": True,
           "physically_traversable": True, "bumpiness_coeff": 0.35},
    ":":  {"visual_class": "Gravel", "geometric_occupancy": False,
           "physically_traversable": True, "bumpiness_coeff": 0.8},
    "#":  {"visual_class": "Wall", "geometric_occupancy": True,
           "physically_traversable": False, "bumpiness_coeff": 0.0},
    "T":  {"visual_class": "Tree", "geometric_occupancy": True,
           "physically_traversable": False, "bumpiness_coeff": 0.0},
}

# 생성 지도 크기 (격자 칸 수)
MAP_WIDTH_CELLS = 40
MAP_HEIGHT_CELLS = 40

# 출발지→목표지 경로가 없는 지도를 다시 생성할 최대 횟수
MAP_MAX_RETRIES = 50

# 재생성 시 시드를 바꾸는 간격 (소수 사용)
MAP_RETRY_SEED_STRIDE = 7919

# ============================================================
# 3. 데이터 수집 설정 (collector)
# ============================================================
# 수집 스텝 수 (4Hz 기준 60,000 스텝 ≈ 4시간)
COLLECT_STEPS = 60000

# 시간 상관 랜덤 워크의 상관 계수 ρ
# a_t = ρ × a_(t-1) + (1-ρ) × 균등분포 샘플
COLLECT_CORRELATION = 0.9

# 랜덤 워크 행동 범위
COLLECT_V_RANGE = (0.0, 2.0)
COLLECT_W_RANGE = (-1.5, 1.5)

# 충돌 감지 기준
COLLISION_NEAR_DISTANCE = 0.3   # 거리 센서 기준: 이보다 가까우면 충돌 (미터)
STUCK_CMD_MIN_SPEED = 0.2       # 관성 기준: 명령 속도가 이 이상인데
STUCK_SPEED = 0.05              # 실제 속도가 이 이하이면 "끼임"

# 지도 종류별 충돌 감지 방식
# 도심: 거리 센서 (재물 손상 방지), 비포장: 관성 센서 (풀을 장애물로 오인하지 않도록)
DETECTOR_BY_MAP_KIND = {
    "Urban": "range",
    "OffRoad": "inertial",
    "TallGrassCorridor": "inertial",
    "NovelRandom": "inertial",
}

# 충돌 후 복구 동작 (후진 후 회전)
RESET_BACKUP_STEPS = 4          # 후진 스텝 수
RESET_BACKUP_SPEED = 0.5        # 후진 속도 (m/s)
RESET_ROTATE_MIN_DEG = 90.0     # 회전 각도 범위 (도)
RESET_ROTATE_MAX_DEG = 180.0
RESET_MAX_ATTEMPTS = 3          # 이 횟수를 넘으면 "사람 개입"(순간이동)으로 처리

# ============================================================
# 4. 라벨링 설정 (labeler)
# ============================================================
# 울퉁불퉁함 판정 기준 (rad/s)
# IMU 각속도 - 명령 각속도 > 이 값 → 울퉁불퉁
BUMP_THRESHOLD = 0.5

# 보정 확인용 기준 속도 (m/s)
BUMP_CALIBRATION_SPEED = 1.0

# 예측 구간 (스텝 수)
HORIZON = 8

# ============================================================
# 5. 예측 모델 설정 (model)
# ============================================================
ENCODER_SIZES = (128, 64)   # 관측 → 은닉 상태 전결합층 크기
RNN_HIDDEN = 64             # 순환 셀 은닉 크기
ACTION_EMBED = 16           # 행동 임베딩 크기
OUTPUT_HIDDEN = 32          # 출력층 앞 은닉 크기

# ============================================================
# 6. 학습 설정 (training)
# ============================================================
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BATCH_SIZE = 128
MAX_EPOCHS = 50
EARLY_STOP_PATIENCE = 5
VALIDATION_FRACTION = 0.1

# 위치 오차(m²)가 분류 손실을 압도하지 않도록 하는 가중치 λ_pos
POSITION_LOSS_WEIGHT = 0.1

# 충돌 양성 : 음성 유효 비율 (1:4)
COLLISION_POSITIVE_RATIO = 0.25

# ============================================================
# 7. 플래너 설정 (planner)
# ============================================================
PLANNER_SAMPLES = 256           # N: 후보 행동 시퀀스 수
PLANNER_SIGMA = (0.3, 0.4)      # σ: (선속도, 각속도) 샘플링 표준편차
PLANNER_BETA = 0.6              # β: 시간 상관 계수
PLANNER_GAMMA = 10.0            # γ: 보상 가중 온도

# 보상 가중치
ALPHA_POS = 1.0
ALPHA_BUM_URBAN = 0.5
ALPHA_BUM_OFFROAD = 0.0

# 갇힘 판정: TRAP_WINDOW_STEPS 동안 이동 거리가 TRAP_MIN_DISPLACEMENT 미만
TRAP_WINDOW_STEPS = 40
TRAP_MIN_DISPLACEMENT = 0.5

# ============================================================
# 8. 비교 정책 설정 (baselines)
# ============================================================
LIDAR_CLEARANCE = 0.4     # 장애물과의 최소 허용 거리 (미터)
NAIVE_SPEED = 1.0         # 직진 정책 속도 (m/s)
NAIVE_GAIN = 1.5          # 방향 오차 → 각속도 비례 이득

# ============================================================
# 9. 평가 설정 (harness)
# ============================================================
EVAL_STARTS = 5               # 출발 위치 수
EVAL_TRIALS_PER_START = 5     # 출발 위치당 시행 수
EVAL_MAX_STEPS = 400          # 한 시행의 최대 스텝 수

# 자기 개선 실험의 목표 도메인 데이터 예산 (스텝)
SELF_IMPROVE_TARGET_STEPS = 15000

# 출력 폴더
OUTPUT_DIR_ENV = "NAV_OUTPUT_DIR"   # 이 환경 변수가 있으면 출력 루트로 사용
DEFAULT_OUTPUT_DIR = "outputs"

# 저장 파일 형식 버전
ARCHIVE_FORMAT_VERSION = 1
MAP_FORMAT_VERSION = 1
