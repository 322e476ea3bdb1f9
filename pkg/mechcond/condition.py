"""
필터 적용, 조건부 스펙트럼/분산, 상대 추정 통계, 변환 계수(F_q, F_p), 집단 모드 간 상관.

필요 환경변수:
  MECHCOND_RICHARDSON_TOL: 절반 해상도 적분과의 허용 상대 차이. 기본 0.005
  MECHCOND_SYMMETRY_TOL: 예측/역추정 분산 대칭 잔차 허용치. 기본 1e-6 (초과 시 경고와 "symmetry" flag, cli 종료 코드 1)
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import signal

from mechcond.errors import ModelError, QuadratureError, TraceError
from mechcond.model import (
    FrequencyGrid,
    MeasurementModel,
    SampledSpectrum,
    collective_spectra,
    photocurrent_psd,
)
from mechcond.specfact import RESIDUAL_TOL, impulse_response
from mechcond.wiener import WienerFilterSet, synthesize_filters

RICHARDSON_TOL = float(os.environ.get("MECHCOND_RICHARDSON_TOL", "0.005"))
NEGATIVE_TOL = 1e-9
SYMMETRY_TOL = float(os.environ.get("MECHCOND_SYMMETRY_TOL", "1e-6"))

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EstimateTraces:
    q_pred: np.ndarray
    p_pred: np.ndarray
    q_retro: np.ndarray
    p_retro: np.ndarray
    dt: float
    valid_range: Tuple[int, int]

    def window(self) -> slice:
        return slice(*self.valid_range)

    @property
    def delta_q(self) -> np.ndarray:
        s = self.window()
        return self.q_pred[s] - self.q_retro[s]

    @property
    def delta_p(self) -> np.ndarray:
        s = self.window()
        return self.p_pred[s] - self.p_retro[s]


class ConditioningReport(BaseModel):
    V_dq_dq: float
    V_dp_dp: float
    C_dq_dp: float
    V_Dq_Dq: Optional[float] = None
    V_Dp_Dp: Optional[float] = None
    C_Dq_Dp: Optional[float] = None
    F_q: Optional[float] = None
    F_p: Optional[float] = None
    purity: Optional[float] = None
    squeezing_ratio: Optional[float] = None
    relative_squeezing_ratio: Optional[float] = None
    subset: List[int]
    provenance: str
    retrodicted: Optional[Dict[str, float]] = None
    symmetry_residual: Optional[float] = None
    stderr: Dict[str, float] = Field(default_factory=dict)
    excess_kurtosis: Optional[Dict[str, float]] = None
    flags: List[str] = Field(default_factory=list)
    grid: Dict[str, float] = Field(default_factory=dict)
    seed: Optional[int] = None
    trials: Optional[int] = None


# --- time-domain application ---------------------------------------------------------------


def _filter_trace(y: np.ndarray, h: SampledSpectrum, causal: bool) -> np.ndarray:
    """반대쪽 lag 탭(연속 필터 점프의 Gibbs 잔향)은 버린다. lag 0 탭은 양쪽 모두 사용."""
    _, taps = impulse_response(h)
    half = taps.shape[0] // 2
    taps = np.array(taps)
    # taps[half] 가 lag 0
    if causal:
        taps[:half] = 0.0
    else:
        taps[half + 1 :] = 0.0
    full = signal.fftconvolve(y, taps, mode="full")
    return full[half : half + y.shape[0]]


def apply_filters(filters: WienerFilterSet, y: np.ndarray, dt: float) -> EstimateTraces:
    """q̂(t) = Σ_m h_m y[t−m]. 예측은 과거 샘플만, 역추정은 미래 샘플만 사용."""
    y = np.asarray(y, dtype=float)
    grid = filters.grid
    if abs(grid.dt - dt) > 1e-9 * dt:
        raise TraceError(f"sample period {dt:.6g} s does not match filter grid Nyquist (dt = {grid.dt:.6g} s)")
    impulse_len = grid.n_points // 2
    if y.shape[0] < 4 * impulse_len:
        raise TraceError(f"trace too short: {y.shape[0]} samples < 4 x filter impulse length ({impulse_len})")
    if not np.all(np.isfinite(y)):
        raise TraceError("trace contains non-finite samples")
    traces = EstimateTraces(
        q_pred=_filter_trace(y, filters.h_q_causal, True),
        p_pred=_filter_trace(y, filters.h_p_causal, True),
        q_retro=_filter_trace(y, filters.h_q_anticausal, False),
        p_retro=_filter_trace(y, filters.h_p_anticausal, False),
        dt=dt,
        valid_range=(impulse_len, y.shape[0] - impulse_len),
    )
    _logger.info("filters applied", extra={"samples": y.shape[0], "validStart": impulse_len})
    return traces


# --- model-based conditional statistics ----------------------------------------------------


class ConditionalSpectra(NamedTuple):
    s_dq_dq: SampledSpectrum
    s_dp_dp: SampledSpectrum
    s_dq_dp: SampledSpectrum


def conditional_spectra(
    meas: MeasurementModel,
    filters: WienerFilterSet,
    subset: Optional[Sequence[int]] = None,
    direction: str = "causal",
) -> ConditionalSpectra:
    """S_δqδq = S_qq + S_q̂q̂ − 2Re S_qq̂ (p 도 동일), 교차항은 Re{S_qp + S_q̂p̂ − S_qp̂ − S_q̂p}."""
    idx = filters.subset if subset is None else meas.check_subset(subset)
    grid = filters.grid
    spectra = collective_spectra(meas, idx, grid)
    s_yy = photocurrent_psd(meas, grid).values
    if direction == "causal":
        h_q, h_p = filters.h_q_causal.values, filters.h_p_causal.values
    elif direction == "anticausal":
        h_q, h_p = filters.h_q_anticausal.values, filters.h_p_anticausal.values
    else:
        raise ModelError(f"direction must be 'causal' or 'anticausal', got {direction!r}")
    s_qy, s_py = spectra.s_qy.values, spectra.s_py.values

    # S_{a b̂} = ⟨a b̂*⟩ = H_b* S_aY,  S_{â b̂} = H_a H_b* S_YY
    s_dq = spectra.s_qq.values + np.abs(h_q) ** 2 * s_yy - 2 * np.real(np.conj(h_q) * s_qy)
    s_dp = spectra.s_pp.values + np.abs(h_p) ** 2 * s_yy - 2 * np.real(np.conj(h_p) * s_py)
    s_dqdp = np.real(
        spectra.s_qp.values
        + h_q * np.conj(h_p) * s_yy
        - np.conj(h_p) * s_qy
        - h_q * np.conj(s_py)
    )
    return ConditionalSpectra(
        SampledSpectrum(grid, s_dq),
        SampledSpectrum(grid, s_dp),
        SampledSpectrum(grid, s_dqdp),
    )


class ConditionalVariances(NamedTuple):
    V_dq_dq: float
    V_dp_dp: float
    C_dq_dp: float
    richardson_error: float

    @property
    def richardson_ok(self) -> bool:
        return self.richardson_error <= RICHARDSON_TOL


def _integrate_checked(s: SampledSpectrum) -> Tuple[float, float]:
    full = float(np.real(s.integral(tail=True)))
    half = float(np.real(s.integral(stride=2, tail=True)))
    scale = max(abs(full), 1e-300)
    return full, abs(full - half) / scale


def conditional_variances(spectra: ConditionalSpectra) -> ConditionalVariances:
    """사다리꼴 ∫ dω/2π. 절반 해상도 결과와 RICHARDSON_TOL 이상 다르면 경고."""
    v_q, err_q = _integrate_checked(spectra.s_dq_dq)
    v_p, err_p = _integrate_checked(spectra.s_dp_dp)
    c_qp = float(np.real(spectra.s_dq_dp.integral(tail=True)))
    for name, v in (("V_dq_dq", v_q), ("V_dp_dp", v_p)):
        if v < -NEGATIVE_TOL * max(abs(v_q), abs(v_p), 1.0):
            raise QuadratureError(f"{name} = {v:.4g} is negative; grid resolution or band is misconfigured")
    v_q, v_p = max(v_q, 0.0), max(v_p, 0.0)
    err = max(err_q, err_p)
    if err > RICHARDSON_TOL:
        _logger.warning("richardson check failed", extra={"relativeError": err, "tolerance": RICHARDSON_TOL})
    return ConditionalVariances(v_q, v_p, c_qp, err)


def covariance_matrix(v_qq: float, v_pp: float, c_qp: float) -> np.ndarray:
    mat = np.array([[v_qq, c_qp], [c_qp, v_pp]])
    if np.min(np.linalg.eigvalsh(mat)) < -NEGATIVE_TOL * max(v_qq, v_pp, 1.0):
        raise QuadratureError("conditional covariance matrix is not positive semidefinite")
    return mat


def gaussian_purity(v_qq: float, v_pp: float, c_qp: float) -> float:
    """1/(2√det V). 진공 분산 1/2 규약에서 순수 상태는 1."""
    det = v_qq * v_pp - c_qp * c_qp
    if det <= 0:
        return float("nan")
    return 1.0 / (2.0 * math.sqrt(det))


def _symmetry_residual(fwd: ConditionalVariances, back: ConditionalVariances) -> float:
    """예측/역추정은 같은 분산, 반대 부호 공분산을 가져야 한다.
    continuous 필터는 H⃖ 가 H⃗ 의 시간 반전이라 반올림 오차 수준에서 맞는다. discrete 필터는 lag 0 이 예측 쪽에만 들어가 O(Γ′·dt) 어긋난다."""
    scale = max(fwd.V_dq_dq, fwd.V_dp_dp, 1e-300)
    return max(
        abs(fwd.V_dq_dq - back.V_dq_dq) / max(fwd.V_dq_dq, 1e-300),
        abs(fwd.V_dp_dp - back.V_dp_dp) / max(fwd.V_dp_dp, 1e-300),
        abs(fwd.C_dq_dp + back.C_dq_dp) / scale,
    )


def thermal_squeezing_ratio(report: ConditioningReport) -> Tuple[Optional[float], Optional[float]]:
    """(V_δp/V_δq, V_Δp/V_Δq)."""
    cond = report.V_dp_dp / report.V_dq_dq if report.V_dq_dq > 0 else None
    rel = None
    if report.V_Dq_Dq and report.V_Dp_Dp is not None:
        rel = report.V_Dp_Dp / report.V_Dq_Dq
    return cond, rel


def relative_variances(meas: MeasurementModel, filters: WienerFilterSet) -> Tuple[float, float, float]:
    """모델에서 본 (V_ΔqΔq, V_ΔpΔp, C_ΔqΔp) = ∫ (H⃗ − H⃖)(H⃗ − H⃖)* S_YY dω/2π."""
    s_yy = photocurrent_psd(meas, filters.grid).values
    d_q = filters.h_q_causal.values - filters.h_q_anticausal.values
    d_p = filters.h_p_causal.values - filters.h_p_anticausal.values
    grid = filters.grid
    v_q = float(SampledSpectrum(grid, np.abs(d_q) ** 2 * s_yy).integral(tail=True))
    v_p = float(SampledSpectrum(grid, np.abs(d_p) ** 2 * s_yy).integral(tail=True))
    c_qp = float(SampledSpectrum(grid, np.real(d_q * np.conj(d_p)) * s_yy).integral(tail=True))
    return v_q, v_p, c_qp


def model_report(
    meas: MeasurementModel,
    subset: Sequence[int],
    grid: FrequencyGrid,
    projection: str = "continuous",
) -> ConditioningReport:
    """스펙트럼만으로 계산한 리포트 (provenance = analytic)."""
    filters = synthesize_filters(meas, subset, grid, projection=projection)
    fwd = conditional_variances(conditional_spectra(meas, filters, direction="causal"))
    back = conditional_variances(conditional_spectra(meas, filters, direction="anticausal"))
    covariance_matrix(fwd.V_dq_dq, fwd.V_dp_dp, fwd.C_dq_dp)
    rel_q, rel_p, rel_qp = relative_variances(meas, filters)
    f_q, f_p = conversion_factors((rel_q, rel_p), (fwd.V_dq_dq, fwd.V_dp_dp))
    flags = []
    if not (fwd.richardson_ok and back.richardson_ok):
        flags.append("richardson")
    symmetry = _symmetry_residual(fwd, back)
    if symmetry > SYMMETRY_TOL:
        _logger.warning(
            "prediction/retrodiction symmetry violated",
            extra={"residual": symmetry, "tolerance": SYMMETRY_TOL, "projection": projection},
        )
        flags.append("symmetry")
    if filters.factor is not None and filters.factor.residual > RESIDUAL_TOL:
        flags.append("factorization_residual")
    return ConditioningReport(
        V_dq_dq=fwd.V_dq_dq,
        V_dp_dp=fwd.V_dp_dp,
        C_dq_dp=fwd.C_dq_dp,
        V_Dq_Dq=rel_q,
        V_Dp_Dp=rel_p,
        C_Dq_Dp=rel_qp,
        F_q=f_q,
        F_p=f_p,
        purity=gaussian_purity(fwd.V_dq_dq, fwd.V_dp_dp, fwd.C_dq_dp),
        squeezing_ratio=fwd.V_dp_dp / fwd.V_dq_dq if fwd.V_dq_dq > 0 else None,
        relative_squeezing_ratio=rel_p / rel_q if rel_q > 0 else None,
        subset=list(filters.subset),
        provenance="analytic",
        retrodicted={"V_dq_dq": back.V_dq_dq, "V_dp_dp": back.V_dp_dp, "C_dq_dp": back.C_dq_dp},
        symmetry_residual=symmetry,
        flags=flags,
        grid={"n_points": grid.n_points, "d_omega": grid.d_omega},
    )


# --- relative estimates ---------------------------------------------------------------------


def relative_estimate_stats(traces: EstimateTraces) -> Tuple[float, float, float]:
    """Δq = q̂⃗ − q̂⃖, Δp = p̂⃗ − p̂⃖ 의 표본 (공)분산."""
    lo, hi = traces.valid_range
    if hi <= lo:
        raise TraceError("valid range of estimate traces is empty")
    dq, dp = traces.delta_q, traces.delta_p
    cov = np.cov(np.vstack([dq, dp]))
    return float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1])


def conversion_factors(
    v_relative: Tuple[float, float], v_conditional: Tuple[float, float]
) -> Tuple[float, float]:
    """F = 1 − V_Δ/(2V_δ)."""
    out = []
    for v_rel, v_cond in zip(v_relative, v_conditional):
        if v_cond == 0:
            raise ModelError("conditional variance is zero; conversion factor undefined")
        out.append(1.0 - v_rel / (2.0 * v_cond))
    return out[0], out[1]


def infer_conditional_from_relative(v_relative: float, f: float) -> float:
    """V_δ = V_Δ/(2(1−F))."""
    if f >= 1:
        raise ModelError(f"conversion factor must be < 1, got {f}")
    return v_relative / (2.0 * (1.0 - f))


def collective_correlations(traces_a: EstimateTraces, traces_b: EstimateTraces) -> Tuple[float, float]:
    """두 집단 모드 상대 추정의 정규화 상관 (ρ_qq, ρ_pp)."""
    if traces_a.q_pred.shape != traces_b.q_pred.shape or abs(traces_a.dt - traces_b.dt) > 1e-12 * traces_a.dt:
        raise TraceError("estimate traces do not share a time base")
    lo = max(traces_a.valid_range[0], traces_b.valid_range[0])
    hi = min(traces_a.valid_range[1], traces_b.valid_range[1])
    if hi <= lo:
        raise TraceError("estimate traces have no common valid range")
    sl = slice(lo, hi)
    out = []
    for a, b in (
        (traces_a.q_pred[sl] - traces_a.q_retro[sl], traces_b.q_pred[sl] - traces_b.q_retro[sl]),
        (traces_a.p_pred[sl] - traces_a.p_retro[sl], traces_b.p_pred[sl] - traces_b.p_retro[sl]),
    ):
        if np.std(a) == 0 or np.std(b) == 0:
            raise ModelError("zero-variance relative estimate; correlation undefined")
        out.append(float(np.corrcoef(a, b)[0, 1]))
    return out[0], out[1]


# --- phase-space export helpers --------------------------------------------------------------


def thermal_std(meas: MeasurementModel, subset: Sequence[int], grid: FrequencyGrid) -> Tuple[float, float]:
    """(q_th, p_th) = 조건화 전 집단 모드 표준편차."""
    spectra = collective_spectra(meas, subset, grid)
    return math.sqrt(float(spectra.s_qq.integral())), math.sqrt(float(spectra.s_pp.integral()))


def phase_space_points(traces: EstimateTraces, q_th: float, p_th: float) -> Dict[str, np.ndarray]:
    """예측/역추정/상대 추정의 (q, p) 점, 열적 표준편차로 정규화."""
    s = traces.window()
    return {
        "prediction": np.column_stack([traces.q_pred[s] / q_th, traces.p_pred[s] / p_th]),
        "retrodiction": np.column_stack([traces.q_retro[s] / q_th, traces.p_retro[s] / p_th]),
        "relative": np.column_stack([traces.delta_q / q_th, traces.delta_p / p_th]),
    }
