"""
격자 위 Wiener–Hopf 스펙트럼 인수분해와 causal/anti-causal 분리.

- 인수분해: cepstrum(켑스트럼) 방식. ½log s 의 lag 열에 causal 창
  (lag 0 ×1, 1..n/2−1 ×2, Nyquist lag ×1) 을 씌우고 exp.
- 이산 분리(causal_part): lag 0 은 causal 쪽, Nyquist lag(−n/2) 은 anti-causal 쪽. 격자 위에서 bin 단위로 정확.
- 연속 분리(continuous_causal_part): 연속 시간 ∫₀^∞ 의 표본. t=0 의 값·도함수 점프를
  1/(a∓iω)^{j+1} 기저로 해석적으로 떼어내고, 남은 매끄러운 부분만 사다리꼴(lag 0, Nyquist lag 를 반씩)로 나눈다.
  x → conj(x) 가 시간 반전이므로 continuous_anticausal_part(conj x) = conj(continuous_causal_part(x)).
- lag 영역 ↔ 주파수 영역: x_lag = fft(X)/n, X = ifft(x_lag)·n (e^{+iωt} 규약).
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import special

from mechcond.errors import FactorizationError
from mechcond.model import SampledSpectrum

FLOOR_EPS = 1e-12
RESIDUAL_TOL = 1e-6
EDGE_ORDER = 3
# 기저 감쇠율 a = π/(EDGE_RATE_DIVISOR·dt)
EDGE_RATE_DIVISOR = 16.0
PROJECTIONS = ("discrete", "continuous")

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SpectralFactor:
    """anticausal_fraction 은 m 의 격자 lag 기준 값. continuous 인수는 t=0 점프의 Gibbs 잔향을 포함한다."""

    m: SampledSpectrum
    source: SampledSpectrum
    residual: float
    anticausal_fraction: float
    projection: str = "discrete"


def _to_lags(values: np.ndarray) -> np.ndarray:
    """ω 오름차순 values → lag 열 (index m = lag m, m ≥ n/2 는 음의 lag)."""
    return np.fft.fft(np.fft.ifftshift(values)) / values.shape[0]


def _from_lags(lags: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft(lags) * lags.shape[0])


def _causal_mask(n: int) -> np.ndarray:
    mask = np.zeros(n)
    mask[: n // 2] = 1.0
    return mask


def _cepstral_window(n: int) -> np.ndarray:
    win = np.zeros(n)
    win[0] = 1.0
    win[1 : n // 2] = 2.0
    win[n // 2] = 1.0
    return win


def causal_part(x: SampledSpectrum) -> SampledSpectrum:
    """[x]₊ : 음의 lag 성분 제거 (lag 0 유지)."""
    lags = _to_lags(x.values)
    return x.with_values(_from_lags(lags * _causal_mask(lags.shape[0])))


def anticausal_part(x: SampledSpectrum) -> SampledSpectrum:
    """[x]₋ : 음의 lag 성분만. causal_part(x) + anticausal_part(x) = x."""
    lags = _to_lags(x.values)
    return x.with_values(_from_lags(lags * (1.0 - _causal_mask(lags.shape[0]))))


def _trapezoid_mask(n: int) -> np.ndarray:
    mask = np.zeros(n)
    mask[0] = 0.5
    mask[1 : n // 2] = 1.0
    mask[n // 2] = 0.5
    return mask


def _edge_derivatives(x: SampledSpectrum, order: int) -> np.ndarray:
    """x(t) 의 t=0 값과 도함수 (dω/2π)Σ(−iω)^k x(ω), k < order. Nyquist bin 은 ±ω 평균 가중."""
    w = x.grid.omega
    out = np.zeros(order, dtype=complex)
    for k in range(order):
        kernel = (-1j * w) ** k
        kernel[0] = kernel[0].real
        out[k] = np.sum(kernel * x.values) * x.grid.d_omega / (2 * math.pi)
    return out


def _edge_basis(x: SampledSpectrum, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """t>0 쪽 Σβ_j t^j e^{−at}/j! 와 t<0 쪽 Σγ_j (−t)^j e^{at}/j! 의 스펙트럼.
    양쪽 모두 t→0 에서 x 의 값·도함수(order 개)와 맞춘다."""
    grid = x.grid
    a = math.pi / (EDGE_RATE_DIVISOR * grid.dt)
    w = grid.omega
    f = _edge_derivatives(x, order)
    plus = np.zeros(grid.n_points, dtype=complex)
    minus = np.zeros(grid.n_points, dtype=complex)
    for j in range(order):
        beta = sum(special.comb(j, k, exact=True) * a ** (j - k) * f[k] for k in range(j + 1))
        gamma = sum(special.comb(j, k, exact=True) * a ** (j - k) * (-1) ** k * f[k] for k in range(j + 1))
        plus += beta / (a - 1j * w) ** (j + 1)
        minus += gamma / (a + 1j * w) ** (j + 1)
    return plus, minus


def continuous_split(x: SampledSpectrum, order: int = EDGE_ORDER) -> Tuple[SampledSpectrum, SampledSpectrum]:
    """([x]₊, [x]₋) 연속 시간 분리. 합은 x 와 같다.
    x(t) 는 t=0 근처에서 매끄러워야 한다 (도함수 order−1 차까지). 점프가 있는 입력은 causal_part 를 쓴다."""
    if order < 0:
        raise FactorizationError(f"edge order must be >= 0, got {order}")
    plus, minus = _edge_basis(x, order)
    lags = _to_lags(x.values - plus - minus)
    mask = _trapezoid_mask(lags.shape[0])
    causal = plus + _from_lags(lags * mask)
    anticausal = minus + _from_lags(lags * (1.0 - mask))
    return x.with_values(causal), x.with_values(anticausal)


def continuous_causal_part(x: SampledSpectrum, order: int = EDGE_ORDER) -> SampledSpectrum:
    return continuous_split(x, order)[0]


def continuous_anticausal_part(x: SampledSpectrum, order: int = EDGE_ORDER) -> SampledSpectrum:
    return continuous_split(x, order)[1]


def projection_pair(projection: str):
    """projection 이름 → (causal, anticausal) 분리 함수."""
    if projection == "discrete":
        return causal_part, anticausal_part
    if projection == "continuous":
        return continuous_causal_part, continuous_anticausal_part
    raise FactorizationError(f"projection must be one of {PROJECTIONS}, got {projection!r}")


def impulse_response(x: SampledSpectrum) -> Tuple[np.ndarray, np.ndarray]:
    """(lag 시간[s], 탭): lag −n/2 … n/2−1 순서. 탭 합성곱 Σ h_m y[t−m] 가 필터 출력."""
    n = x.grid.n_points
    taps = np.fft.fftshift(_to_lags(x.values))
    if x.hermitian:
        taps = taps.real
    lags = (np.arange(n) - n // 2) * x.grid.dt
    return lags, taps


def _anticausal_energy_fraction(values: np.ndarray) -> float:
    lags = _to_lags(values)
    energy = np.abs(lags) ** 2
    total = energy.sum()
    if total == 0:
        return 0.0
    return float(energy[lags.shape[0] // 2 :].sum() / total)


def spectral_factorize(s: SampledSpectrum, projection: str = "discrete") -> SpectralFactor:
    """s = |m|², m 최소위상 (causal, causal 역함수).

    projection="continuous" 는 log s 에서 대역 끝 값 L_∞ 를 빼고 (δ 성분, 양쪽에 반씩)
    나머지를 연속 분리한다. log s 가 짝함수라 order 2 로 3차 도함수까지 맞는다.
    """
    if projection not in PROJECTIONS:
        raise FactorizationError(f"projection must be one of {PROJECTIONS}, got {projection!r}")
    vals = np.asarray(s.values)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag)) > 1e-12 * np.max(np.abs(vals.real)):
            raise FactorizationError("spectrum to factorize must be real")
        vals = vals.real
    bad = np.flatnonzero(~np.isfinite(vals) | (vals <= 0))
    if bad.size:
        raise FactorizationError("spectrum must be strictly positive and finite", bad_bins=bad.tolist())

    floor = FLOOR_EPS * vals.max()
    clamped = np.maximum(vals, floor)
    n_clamped = int(np.count_nonzero(vals < floor))
    if n_clamped:
        _logger.warning("spectrum bins clamped to positivity floor", extra={"clamped": n_clamped, "floor": floor})

    log_s = np.log(clamped)
    if projection == "discrete":
        cep = _to_lags(0.5 * log_s)
        log_m = _from_lags(cep * _cepstral_window(cep.shape[0]))
    else:
        edge = float(log_s[0])
        tail = SampledSpectrum(s.grid, (log_s - edge).astype(complex), hermitian=True)
        log_m = 0.5 * edge + continuous_causal_part(tail, order=2).values
    m = np.exp(log_m)

    residual = float(np.max(np.abs(np.abs(m) ** 2 - clamped) / clamped))
    leak = _anticausal_energy_fraction(m)
    if residual > RESIDUAL_TOL or (projection == "discrete" and leak > 1e-8):
        _logger.warning(
            "spectral factor outside tolerance",
            extra={"residual": residual, "anticausalFraction": leak, "nPoints": s.grid.n_points, "projection": projection},
        )
    return SpectralFactor(
        m=SampledSpectrum(s.grid, m, hermitian=True),
        source=s,
        residual=residual,
        anticausal_fraction=leak,
        projection=projection,
    )
