"""
집단 모드 위치/운동량의 causal(예측)·anti-causal(역추정) Wiener 필터.

  H⃗_q = (1/M)[S_qY/M*]₊     H⃖_q = (1/M*)[S_qY/M]₋    (p 도 동일)

단일 점성 모드의 닫힌 형태 필터(analytic_viscous_filters)는 수치 합성의 기준값으로 쓴다.
필터는 주파수 영역에 저장·적용한다. 시간 영역 탭은 impulse_response 로 확인용.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from mechcond.errors import ModelError
from mechcond.model import (
    Damping,
    FrequencyGrid,
    MeasurementModel,
    ModeModel,
    SampledSpectrum,
    collective_cross_spectra,
    photocurrent_psd,
)
from mechcond.specfact import (
    EDGE_RATE_DIVISOR,
    SpectralFactor,
    anticausal_part,
    causal_part,
    projection_pair,
    spectral_factorize,
)

NOTCH_DEPTH = 1e-2

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WienerFilterSet:
    h_q_causal: SampledSpectrum
    h_p_causal: SampledSpectrum
    h_q_anticausal: SampledSpectrum
    h_p_anticausal: SampledSpectrum
    subset: Tuple[int, ...]
    meta: Dict[str, Any] = field(default_factory=dict)
    factor: Optional[SpectralFactor] = None

    @property
    def grid(self) -> FrequencyGrid:
        return self.h_q_causal.grid

    def as_dict(self) -> Dict[str, SampledSpectrum]:
        return {
            "h_q_causal": self.h_q_causal,
            "h_p_causal": self.h_p_causal,
            "h_q_anticausal": self.h_q_anticausal,
            "h_p_anticausal": self.h_p_anticausal,
        }


def synthesize_filters(
    meas: MeasurementModel,
    subset: Sequence[int],
    grid: FrequencyGrid,
    projection: str = "continuous",
) -> WienerFilterSet:
    """projection="continuous" 는 연속 시간 필터의 격자 표본 (닫힌 형태와 비교 가능, H⃖ = 시간 반전 H⃗).
    "discrete" 는 격자 위 이산 Wiener 해 (lag 0 이 causal 쪽)."""
    idx = meas.check_subset(subset)
    grid.check_covers(m.omega for m in meas.signal_modes)
    causal, anticausal = projection_pair(projection)
    s_yy = photocurrent_psd(meas, grid)
    factor = spectral_factorize(s_yy, projection=projection)
    m = factor.m.values
    m_conj = np.conj(m)
    s_qy, s_py = collective_cross_spectra(meas, idx, grid)

    h_q_c = causal(s_qy.with_values(s_qy.values / m_conj)).values / m
    h_p_c = causal(s_py.with_values(s_py.values / m_conj)).values / m
    h_q_a = anticausal(s_qy.with_values(s_qy.values / m)).values / m_conj
    h_p_a = anticausal(s_py.with_values(s_py.values / m)).values / m_conj

    _logger.info(
        "wiener filters synthesized",
        extra={"subset": list(idx), "nPoints": grid.n_points, "factorResidual": factor.residual, "projection": projection},
    )
    return WienerFilterSet(
        h_q_causal=SampledSpectrum(grid, h_q_c),
        h_p_causal=SampledSpectrum(grid, h_p_c),
        h_q_anticausal=SampledSpectrum(grid, h_q_a),
        h_p_anticausal=SampledSpectrum(grid, h_p_a),
        subset=idx,
        meta={
            "model": meas.fingerprint(),
            "n_points": grid.n_points,
            "d_omega": grid.d_omega,
            "source": "numerical",
            "projection": projection,
        },
        factor=factor,
    )


@dataclass(frozen=True)
class ViscousCoefficients:
    """닫힌 형태 필터 계수. Ω′, Γ′ 는 수정된 감수율 χ′ 의 공진 주파수/감쇠율."""

    A: float
    B: float
    omega_prime: float
    gamma_prime: float
    n_tot: float


def viscous_coefficients(mode: ModeModel, eta: float) -> ViscousCoefficients:
    if mode.damping is not Damping.VISCOUS:
        raise ModelError("closed-form filters exist only for a viscously damped mode")
    om, g, c = mode.omega, mode.gamma, mode.C
    n_tot = mode.n_tot
    om_p = (16 * eta * g ** 2 * c * n_tot * om ** 2 + om ** 4) ** 0.25
    g_p = math.sqrt(-2 * om ** 2 + g ** 2 + 2 * om_p ** 2)
    a = 8 * math.sqrt(eta * g ** 3 * c) * n_tot * om ** 2 / (om ** 2 + om_p ** 2)
    b = (g + g_p) / (om_p ** 2 - om ** 2 + g ** 2 + g * g_p)
    return ViscousCoefficients(A=a, B=b, omega_prime=om_p, gamma_prime=g_p, n_tot=n_tot)


def analytic_viscous_filters(mode: ModeModel, eta: float, grid: FrequencyGrid) -> WienerFilterSet:
    """H⃗_q = A(1−iBω)χ′, H⃗_p = −(AB/Ω)(Ω² + iω(Ω′²−Ω²)/(Γ′+Γ))χ′, H⃖_q = H⃗_q*, H⃖_p = −H⃗_p*.
    측정 잡음은 shot floor 1/2 만 있다고 가정."""
    k = viscous_coefficients(mode, eta)
    w = grid.omega
    om, g = mode.omega, mode.gamma
    chi_p = 1.0 / (k.omega_prime ** 2 - w ** 2 - 1j * k.gamma_prime * w)
    h_q = k.A * (1 - 1j * k.B * w) * chi_p
    h_p = -(k.A * k.B / om) * (om ** 2 + 1j * w * (k.omega_prime ** 2 - om ** 2) / (k.gamma_prime + g)) * chi_p
    return WienerFilterSet(
        h_q_causal=SampledSpectrum(grid, h_q),
        h_p_causal=SampledSpectrum(grid, h_p),
        h_q_anticausal=SampledSpectrum(grid, np.conj(h_q)),
        h_p_anticausal=SampledSpectrum(grid, -np.conj(h_p)),
        subset=(0,),
        meta={"n_points": grid.n_points, "d_omega": grid.d_omega, "source": "analytic", "coefficients": asdict(k)},
    )


def viscous_relative_variances(mode: ModeModel, eta: float) -> Tuple[float, float, float]:
    """닫힌 형태 (V_ΔqΔq, V_ΔpΔp, C_ΔqΔp=0)."""
    k = viscous_coefficients(mode, eta)
    om, g = mode.omega, mode.gamma
    om_p, g_p = k.omega_prime, k.gamma_prime
    ab2 = (k.A * k.B) ** 2
    v_q = ab2 / (g + g_p) * (1 + 2 * g * g_p / (om ** 2 + om_p ** 2))
    v_p = ab2 / ((g + g_p) ** 2 * om ** 2) * (
        g * om ** 2 / 2
        + g_p * om_p ** 2 / 2
        + g * g_p * (g - g_p) * (om_p ** 2 - om ** 2) / (2 * (om ** 2 + om_p ** 2))
    )
    return v_q, v_p, 0.0


def relative_l2(a: SampledSpectrum, b: SampledSpectrum) -> float:
    """‖a−b‖₂/‖b‖₂."""
    ref = np.linalg.norm(b.values)
    if ref == 0:
        return float(np.linalg.norm(a.values))
    return float(np.linalg.norm(a.values - b.values) / ref)


@dataclass(frozen=True)
class FilterDiagnostics:
    leakage: float
    notches: List[float]
    passband_center: Optional[float]
    factor_residual: Optional[float] = None


def _without_jump(h: SampledSpectrum, causal: bool) -> SampledSpectrum:
    """t=0 점프 J 를 J/(a∓iω) 로 뺀 h. J 는 lag-0 값(= dt·J/2)에서 읽는다."""
    grid = h.grid
    a = math.pi / (EDGE_RATE_DIVISOR * grid.dt)
    jump = 2.0 * np.sum(h.values) / grid.n_points / grid.dt
    sign = -1j if causal else 1j
    return h.with_values(h.values - jump / (a + sign * grid.omega))


def _leakage(h: SampledSpectrum, causal: bool, continuous: bool = False) -> float:
    total = float(np.sum(np.abs(h.values) ** 2))
    if total == 0:
        return 0.0
    if continuous:
        h = _without_jump(h, causal)
    wrong = anticausal_part(h) if causal else causal_part(h)
    return float(np.sum(np.abs(wrong.values) ** 2) / total)


def filter_quality(filters: WienerFilterSet, meas: Optional[MeasurementModel] = None) -> FilterDiagnostics:
    """인과성 누설, notch 위치(최대값의 1e-2 미만 극소), 통과대역 중심 (ω > 0).
    연속 필터의 누설은 t=0 점프를 뺀 뒤 격자 lag 로 잰다."""
    continuous = filters.meta.get("projection") == "continuous" or filters.meta.get("source") == "analytic"
    leak = max(
        _leakage(filters.h_q_causal, True, continuous),
        _leakage(filters.h_p_causal, True, continuous),
        _leakage(filters.h_q_anticausal, False, continuous),
        _leakage(filters.h_p_anticausal, False, continuous),
    )
    w = filters.grid.omega
    pos = w > 0
    mag = np.abs(filters.h_q_causal.values[pos])
    w_pos = w[pos]
    peak = float(mag.max()) if mag.size else 0.0
    notches: List[float] = []
    center = None
    if peak > 0:
        center = float(w_pos[int(np.argmax(mag))])
        log_mag = np.log10(np.maximum(mag, peak * 1e-300))
        minima, _ = signal.find_peaks(-log_mag, prominence=1.0)
        notches = [float(w_pos[i]) for i in minima if mag[i] < NOTCH_DEPTH * peak]
    if meas is not None and filters.meta.get("model") not in (None, meas.fingerprint()):
        _logger.warning("filters were synthesized from a different model", extra={"filtersModel": filters.meta.get("model")})
    return FilterDiagnostics(
        leakage=leak,
        notches=notches,
        passband_center=center,
        factor_residual=filters.factor.residual if filters.factor is not None else None,
    )
