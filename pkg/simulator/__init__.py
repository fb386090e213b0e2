"""
simulator 패키지 - 책상 크기 2D 주행 시뮬레이터
================================================

실제 로봇 없이도 데이터 수집과 주행 실험을 할 수 있는
격자 지도 시뮬레이터입니다.

- terrain.py    : 지형 종류, 격자 지도, 지도 파일 읽기/쓰기
- maps.py       : 시드로 재현되는 지도 생성기 (도심, 키 큰 풀, 비포장, 무작위)
- pathfinding.py: 출발 → 목표 경로 확인 (BFS, Dijkstra)
- engine.py     : 센서 렌더링과 한 스텝 물리
"""
