# mechcond: 측정 기반 기계 공진기 조건부 상태 준비
# - model: 모드/측정 모델, 손실각(점성/구조), PSD, 격자
# - specfact: Wiener-Hopf 스펙트럼 인수분해, causal/anti-causal 분리
# - wiener: 예측/역추정 Wiener 필터, 점성 단일 모드 닫힌 형태
# - condition: 필터 적용, 조건부 분산, 상대 추정, 변환 계수
# - simulate: 주파수 영역 궤적 합성, Monte Carlo, (C, n_th) 스윕
# - criteria: squeezing/RWA/냉각/얽힘 판정식
# - ingest: trace 입력, Welch PSD, 모델 피팅, 설정 내보내기
# - config: JSON 모델 설정 스키마 (Hz ↔ rad/s)
# - fileio: 바이너리/CSV/JSON 형식, RunManifest
