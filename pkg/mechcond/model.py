"""
기계 공진기 모드/측정 모델과 닫힌 형태 PSD.

- 모든 주파수는 각주파수(rad/s). 설정 파일(Hz)은 config 에서 변환.
- q, p 는 영점 분산 1/2 로 정규화된 무차원 좌표.
- Fourier 규약: x(ω) = ∫ x(t) e^{+iωt} dt (감수율 1/(Ω²−ω²−iΓω) 가 causal).
- 격자는 0 을 중심으로 한 양측 격자, values 는 ω 오름차순 (−n/2 … n/2−1)·dω.

필요 환경변수:
  MECHCOND_GRID_POINTS: make_grid 의 점 개수 강제 (2의 거듭제곱). 기본 0 = 자동
  MECHCOND_MAX_GRID_POINTS: 자동 격자 점 개수 상한. 넘으면 선폭당 bin 을 8 까지 줄이고, 그래도 넘으면 ModelError. 기본 2^22
  MECHCOND_TEMPERATURE_K: n_th 미지정 모드의 온도. 기본 295
"""
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants, integrate, optimize

from mechcond.errors import ModelError

GRID_POINTS = int(os.environ.get("MECHCOND_GRID_POINTS", "0"))
MAX_GRID_POINTS = int(os.environ.get("MECHCOND_MAX_GRID_POINTS", str(2 ** 22)))
TEMPERATURE_K = float(os.environ.get("MECHCOND_TEMPERATURE_K", "295"))

DEFAULT_OMEGA_C = 2 * math.pi * 10e3
SHOT_FLOOR_LEVEL = 0.5
MIN_GRID_POINTS = 2 ** 10
BAND_MARGIN = 8.0
BINS_PER_WIDTH = 16
MIN_BINS_PER_WIDTH = 8

_logger = logging.getLogger(__name__)


class Damping(str, Enum):
    VISCOUS = "viscous"
    STRUCTURAL = "structural"


class NoiseKind(str, Enum):
    SHOT_FLOOR = "shot_floor"
    LORENTZIAN_PEAK = "lorentzian_peak"
    STRUCTURAL_PEAK = "structural_peak"
    TABULATED = "tabulated"


class MomentumConvention(str, Enum):
    PER_MODE = "per_mode"  # p_j = q̇_j/Ω_j
    LITERAL = "literal"  # S_pY = −iω S_qY


def thermal_occupancy(omega: float, temperature_k: float = TEMPERATURE_K) -> float:
    """n_th = k_B T / ħΩ."""
    if omega <= 0 or temperature_k <= 0:
        raise ModelError("omega and temperature must be positive")
    return constants.k * temperature_k / (constants.hbar * omega)


@dataclass(frozen=True)
class ModeModel:
    omega: float
    gamma: float
    mu: float
    n_th: float
    damping: Damping = Damping.STRUCTURAL
    omega_c: float = DEFAULT_OMEGA_C
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "damping", Damping(self.damping))
        if not (self.omega > 0 and self.gamma > 0):
            raise ModelError(f"mode {self.label!r}: omega and gamma must be positive")
        if self.mu < 0 or self.n_th < 0:
            raise ModelError(f"mode {self.label!r}: mu and n_th must be non-negative")
        if self.omega / self.gamma <= 1:
            raise ModelError(f"mode {self.label!r}: Q = omega/gamma must exceed 1")
        if self.damping is Damping.STRUCTURAL and not self.omega_c > 0:
            raise ModelError(f"mode {self.label!r}: structural damping needs omega_c > 0")

    @property
    def Q(self) -> float:
        return self.omega / self.gamma

    @property
    def C(self) -> float:
        return self.mu / self.gamma

    @property
    def n_tot(self) -> float:
        return self.n_th + self.C + 0.5

    def with_(self, **changes: Any) -> "ModeModel":
        return replace(self, **changes)


@dataclass(frozen=True)
class NoiseComponent:
    """S_NN 의 한 성분. kind 에 따라 쓰이는 필드가 다르다."""

    kind: NoiseKind
    level: float = SHOT_FLOOR_LEVEL
    center: float = 0.0
    width: float = 0.0
    height: float = 0.0
    mode: Optional[ModeModel] = None
    table_omega: Tuple[float, ...] = ()
    table_value: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.SHOT_FLOOR and not self.level > 0:
            raise ModelError("shot floor level must be positive")
        if self.kind is NoiseKind.LORENTZIAN_PEAK and not (self.center > 0 and self.width > 0 and self.height >= 0):
            raise ModelError("lorentzian peak needs center > 0, width > 0, height >= 0")
        if self.kind is NoiseKind.STRUCTURAL_PEAK and self.mode is None:
            raise ModelError("structural peak needs mode parameters")
        if self.kind is NoiseKind.TABULATED:
            if len(self.table_omega) < 2 or len(self.table_omega) != len(self.table_value):
                raise ModelError("tabulated curve needs matching omega/value tables (>= 2 points)")
            if min(self.table_value) < 0:
                raise ModelError("tabulated curve values must be non-negative")
            if any(b <= a for a, b in zip(self.table_omega, self.table_omega[1:])):
                raise ModelError("tabulated curve omega must be strictly increasing")

    @classmethod
    def shot_floor(cls, level: float = SHOT_FLOOR_LEVEL) -> "NoiseComponent":
        return cls(NoiseKind.SHOT_FLOOR, level=level)

    @classmethod
    def lorentzian(cls, center: float, width: float, height: float) -> "NoiseComponent":
        return cls(NoiseKind.LORENTZIAN_PEAK, center=center, width=width, height=height)

    @classmethod
    def structural(cls, mode: ModeModel) -> "NoiseComponent":
        return cls(NoiseKind.STRUCTURAL_PEAK, mode=mode)

    @classmethod
    def tabulated(cls, omega: Iterable[float], value: Iterable[float]) -> "NoiseComponent":
        return cls(NoiseKind.TABULATED, table_omega=tuple(float(w) for w in omega), table_value=tuple(float(v) for v in value))


@dataclass(frozen=True)
class MeasurementModel:
    eta: float
    signal_modes: Tuple[ModeModel, ...]
    noise_components: Tuple[NoiseComponent, ...] = (NoiseComponent.shot_floor(),)
    momentum_convention: MomentumConvention = MomentumConvention.PER_MODE

    def __post_init__(self) -> None:
        object.__setattr__(self, "signal_modes", tuple(self.signal_modes))
        object.__setattr__(self, "noise_components", tuple(self.noise_components))
        object.__setattr__(self, "momentum_convention", MomentumConvention(self.momentum_convention))
        if not 0 < self.eta <= 1:
            raise ModelError(f"eta must be in (0, 1], got {self.eta}")
        if not self.signal_modes:
            raise ModelError("measurement model needs at least one signal mode")

    @property
    def mu_total(self) -> float:
        return sum(m.mu for m in self.signal_modes)

    def check_subset(self, subset: Sequence[int]) -> Tuple[int, ...]:
        idx = tuple(int(i) for i in subset)
        if not idx:
            raise ModelError("subset of conditioned modes is empty")
        if len(set(idx)) != len(idx):
            raise ModelError(f"subset has duplicate indices: {list(idx)}")
        for i in idx:
            if not 0 <= i < len(self.signal_modes):
                raise ModelError(f"subset index {i} out of range (0..{len(self.signal_modes) - 1})")
        return idx

    def fingerprint(self) -> str:
        """모델 파라미터 해시 (필터/리포트 메타데이터용)."""
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FrequencyGrid:
    n_points: int
    d_omega: float

    def __post_init__(self) -> None:
        n = int(self.n_points)
        if n < MIN_GRID_POINTS or n & (n - 1):
            raise ModelError(f"n_points must be a power of two >= {MIN_GRID_POINTS}, got {n}")
        if not self.d_omega > 0:
            raise ModelError("d_omega must be positive")

    @property
    def omega(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.n_points // 2) * self.d_omega

    @property
    def omega_max(self) -> float:
        return self.n_points // 2 * self.d_omega

    @property
    def dt(self) -> float:
        """격자에 대응하는 샘플 주기 (Nyquist = omega_max)."""
        return 2 * math.pi / (self.n_points * self.d_omega)

    @classmethod
    def for_sampling(cls, n_points: int, dt: float) -> "FrequencyGrid":
        return cls(n_points, 2 * math.pi / (n_points * dt))

    def check_covers(self, omegas: Iterable[float]) -> None:
        need = BAND_MARGIN * max(omegas)
        if self.omega_max < need * (1 - 1e-9):
            raise ModelError(f"grid max|omega| = {self.omega_max:.4g} below {BAND_MARGIN}x max resonance ({need:.4g})")


@dataclass(frozen=True, eq=False)
class SampledSpectrum:
    grid: FrequencyGrid
    values: np.ndarray
    hermitian: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.shape != (self.grid.n_points,):
            raise ModelError(f"values shape {v.shape} does not match grid ({self.grid.n_points},)")
        object.__setattr__(self, "values", v)

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    @property
    def real(self) -> np.ndarray:
        return np.real(self.values)

    def integral(self, stride: int = 1, tail: bool = False) -> complex:
        """∫ values dω/2π (사다리꼴). stride=2 는 절반 해상도.
        tail=True 면 격자 밖 |ω| 를 끝점에서 이어지는 ω⁻² 꼬리로 더한다 (조건부 스펙트럼의 고주파 거동)."""
        vals = self.values[::stride]
        total = integrate.trapezoid(vals, dx=self.grid.d_omega * stride) / (2 * math.pi)
        if tail:
            w = self.grid.omega[::stride]
            total = total + (vals[0] * abs(w[0]) + vals[-1] * abs(w[-1])) / (2 * math.pi)
        return complex(total) if np.iscomplexobj(vals) else float(total)

    def with_values(self, values: np.ndarray, hermitian: Optional[bool] = None) -> "SampledSpectrum":
        return SampledSpectrum(self.grid, values, self.hermitian if hermitian is None else hermitian)


# --- damping law and single-mode spectra -------------------------------------------------


def loss_angle(mode: ModeModel, omega: Any) -> Any:
    """φ(ω). Structural: ωQ⁻¹/√(ω²+ω_c²), viscous: ωQ⁻¹/Ω. ω 에 대해 홀함수."""
    w = np.asarray(omega, dtype=float)
    return w * _phi_over_omega(mode, w)


def _phi_over_omega(mode: ModeModel, w: np.ndarray) -> np.ndarray:
    # φ/ω 를 직접 계산해서 ω=0 에서도 유한
    if mode.damping is Damping.VISCOUS:
        return np.full_like(w, 1.0 / (mode.Q * mode.omega), dtype=float)
    return 1.0 / (mode.Q * np.sqrt(w * w + mode.omega_c ** 2))


def susceptibility(mode: ModeModel, omega: Any) -> np.ndarray:
    """χ(ω) = Ω/(Ω² − ω² − iΩ²φ(ω)). |χ|² S_FF = S_qq."""
    w = np.asarray(omega, dtype=float)
    return mode.omega / (mode.omega ** 2 - w * w - 1j * mode.omega ** 2 * loss_angle(mode, w))


def thermal_force_psd(mode: ModeModel, omega: Any) -> np.ndarray:
    """S_FF^th = 2(n_th + 1/2) Ω² φ(ω)/ω (zero-point 포함)."""
    w = np.asarray(omega, dtype=float)
    return 2.0 * (mode.n_th + 0.5) * mode.omega ** 2 * _phi_over_omega(mode, w)


def backaction_force_psd(mode: ModeModel) -> float:
    return 2.0 * mode.mu


def _response_sq(mode: ModeModel, w: np.ndarray) -> np.ndarray:
    om2 = mode.omega ** 2
    phi = loss_angle(mode, w)
    return om2 / ((w * w - om2) ** 2 + om2 * om2 * phi * phi)


def position_psd_values(mode: ModeModel, omega: Any, backaction: bool = False) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if mode.damping is Damping.STRUCTURAL and not mode.omega_c > 0:
        raise ModelError("structural position PSD diverges at DC without omega_c > 0")
    force = thermal_force_psd(mode, w)
    if backaction:
        force = force + backaction_force_psd(mode)
    return _response_sq(mode, w) * force


def position_psd(mode: ModeModel, grid: FrequencyGrid) -> SampledSpectrum:
    """열적 + 영점 변위 PSD. 점성 감쇠에서 ∫ dω/2π = n_th + 1/2."""
    return SampledSpectrum(grid, position_psd_values(mode, grid.omega))


def total_position_psd(mode: ModeModel, grid: FrequencyGrid) -> SampledSpectrum:
    """측정 backaction(평탄 힘 PSD 2μ) 포함. 점성 감쇠에서 적분 = n_th + C + 1/2."""
    return SampledSpectrum(grid, position_psd_values(mode, grid.omega, backaction=True))


def momentum_psd(mode: ModeModel, grid: FrequencyGrid) -> SampledSpectrum:
    w = grid.omega
    return SampledSpectrum(grid, (w / mode.omega) ** 2 * position_psd_values(mode, w))


def occupancy_integral(mode: ModeModel) -> float:
    """∫ S_qq dω/2π 를 적응 구적으로 (격자 무관). calibrate_omega_c 에서 사용."""
    om, g = mode.omega, mode.gamma
    f = lambda w: float(position_psd_values(mode, w))
    lo, hi = max(om - 20 * g, 0.0), om + 20 * g
    edges = [0.0]
    if mode.damping is Damping.STRUCTURAL and mode.omega_c < lo:
        edges.append(mode.omega_c)
    edges += [lo, om, hi]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        if b > a:
            total += integrate.quad(f, a, b, limit=400, epsabs=0.0, epsrel=1e-10)[0]
    total += integrate.quad(f, hi, np.inf, limit=400, epsabs=0.0, epsrel=1e-10)[0]
    # 양측 적분 = 2 × 단측
    return 2.0 * total / (2 * math.pi)


def calibrate_omega_c(
    mode: ModeModel,
    tolerance: float,
    omega_c_min: Optional[float] = None,
    omega_c_max: Optional[float] = None,
    n_scan: int = 41,
) -> Tuple[float, float]:
    """등분배(∫S_qq dω/2π = n_th + 1/2)를 tolerance 안에서 만족하는 ω_c 의 연속 구간."""
    if mode.damping is not Damping.STRUCTURAL:
        raise ModelError("calibrate_omega_c applies to structurally damped modes only")
    # 상한 1.0: 허용 오차를 넓혀 구간 끝을 보는 진단 호출도 받는다 (보정 용도로는 0.1 이하를 쓴다)
    if not 0 < tolerance <= 1.0:
        raise ModelError(f"tolerance must be in (0, 1], got {tolerance}")
    lo_c = omega_c_min if omega_c_min is not None else mode.omega * 1e-4
    hi_c = omega_c_max if omega_c_max is not None else mode.omega
    target = mode.n_th + 0.5

    def excess(wc: float) -> float:
        return abs(occupancy_integral(mode.with_(omega_c=wc)) - target) / target - tolerance

    scan = np.geomspace(lo_c, hi_c, n_scan)
    ok = [excess(wc) <= 0 for wc in scan]
    if not any(ok):
        raise ModelError(f"no admissible omega_c within tolerance {tolerance} on [{lo_c:.4g}, {hi_c:.4g}] rad/s")
    # 가장 긴 연속 구간
    best: Tuple[int, int] = (0, -1)
    start = None
    for i, flag in enumerate(ok + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - 1 - start > best[1] - best[0]:
                best = (start, i - 1)
            start = None
    i0, i1 = best
    left = scan[i0] if i0 == 0 else optimize.brentq(excess, scan[i0 - 1], scan[i0], xtol=1e-6 * scan[i0])
    right = scan[i1] if i1 == len(scan) - 1 else optimize.brentq(excess, scan[i1], scan[i1 + 1], xtol=1e-6 * scan[i1])
    _logger.info(
        "omega_c calibrated",
        extra={"mode": mode.label, "tolerance": tolerance, "omegaCLow": left, "omegaCHigh": right},
    )
    return float(left), float(right)


# --- measurement noise and photocurrent ---------------------------------------------------


def noise_psd_values(component: NoiseComponent, omega: Any, eta: float = 1.0) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if component.kind is NoiseKind.SHOT_FLOOR:
        return np.full(w.shape, component.level)
    if component.kind is NoiseKind.LORENTZIAN_PEAK:
        hw2 = (component.width / 2) ** 2
        return component.height * (hw2 / ((w - component.center) ** 2 + hw2) + hw2 / ((w + component.center) ** 2 + hw2))
    if component.kind is NoiseKind.STRUCTURAL_PEAK:
        m = component.mode
        return 4.0 * eta * m.mu * position_psd_values(m, w, backaction=True)
    tab_w = np.asarray(component.table_omega)
    tab_v = np.asarray(component.table_value)
    return np.interp(np.abs(w), tab_w, tab_v)


def noise_psd(component: NoiseComponent, grid: FrequencyGrid, eta: float = 1.0) -> SampledSpectrum:
    return SampledSpectrum(grid, noise_psd_values(component, grid.omega, eta))


def _require_shot_floor(meas: MeasurementModel) -> None:
    if not any(c.kind is NoiseKind.SHOT_FLOOR for c in meas.noise_components):
        raise ModelError("measurement model has no shot-floor component; photocurrent PSD would not be strictly positive")


def photocurrent_psd_values(meas: MeasurementModel, omega: Any) -> np.ndarray:
    _require_shot_floor(meas)
    w = np.asarray(omega, dtype=float)
    total = np.zeros(w.shape)
    for m in meas.signal_modes:
        if m.mu > 0:
            total += 4.0 * meas.eta * m.mu * position_psd_values(m, w, backaction=True)
    for c in meas.noise_components:
        total += noise_psd_values(c, w, meas.eta)
    return total


def photocurrent_psd(meas: MeasurementModel, grid: FrequencyGrid) -> SampledSpectrum:
    """평활(이상화) 광전류 PSD S_YY = 4η Σ μ_j S_{q_j q_j} + S_NN."""
    return SampledSpectrum(grid, photocurrent_psd_values(meas, grid.omega))


def measurement_noise_psd(meas: MeasurementModel, subset: Sequence[int], grid: FrequencyGrid) -> SampledSpectrum:
    """조건화하지 않는 신호 모드까지 포함한 S_NN."""
    idx = set(meas.check_subset(subset))
    w = grid.omega
    total = np.zeros(w.shape)
    for j, m in enumerate(meas.signal_modes):
        if j not in idx and m.mu > 0:
            total += 4.0 * meas.eta * m.mu * position_psd_values(m, w, backaction=True)
    for c in meas.noise_components:
        total += noise_psd_values(c, w, meas.eta)
    return SampledSpectrum(grid, total)


# --- collective coordinates ---------------------------------------------------------------


def collective_rate(meas: MeasurementModel, subset: Sequence[int]) -> float:
    return sum(meas.signal_modes[j].mu for j in meas.check_subset(subset))


def collective_weights(meas: MeasurementModel, subset: Sequence[int]) -> np.ndarray:
    """w_j = √(μ_j/μ^(N)). μ^(N)=0 이면 균등 가중치."""
    idx = meas.check_subset(subset)
    mus = np.array([meas.signal_modes[j].mu for j in idx])
    total = mus.sum()
    if total <= 0:
        return np.full(len(idx), 1.0 / math.sqrt(len(idx)))
    return np.sqrt(mus / total)


def differential_weights(n_modes: int) -> np.ndarray:
    """(+1, −1, +1, …)/√N. 짝수 N 의 차동 집단 모드."""
    if n_modes < 2 or n_modes % 2:
        raise ModelError("differential collective mode needs an even number of modes")
    return np.array([(-1.0) ** j for j in range(n_modes)]) / math.sqrt(n_modes)


def momentum_factor(meas: MeasurementModel, mode: ModeModel, omega: np.ndarray) -> np.ndarray:
    """p_j(ω) = factor · q_j(ω)."""
    if meas.momentum_convention is MomentumConvention.LITERAL:
        return -1j * omega
    return -1j * omega / mode.omega


@dataclass(frozen=True, eq=False)
class CollectiveSpectra:
    """집단 모드의 자기/교차 스펙트럼 묶음."""

    s_qq: SampledSpectrum
    s_pp: SampledSpectrum
    s_qp: SampledSpectrum
    s_qy: SampledSpectrum
    s_py: SampledSpectrum
    weights: np.ndarray = field(repr=False)


def collective_spectra(meas: MeasurementModel, subset: Sequence[int], grid: FrequencyGrid) -> CollectiveSpectra:
    idx = meas.check_subset(subset)
    wts = collective_weights(meas, idx)
    w = grid.omega
    s_qq = np.zeros(w.shape)
    s_pp = np.zeros(w.shape)
    s_qp = np.zeros(w.shape, dtype=complex)
    s_qy = np.zeros(w.shape)
    s_py = np.zeros(w.shape, dtype=complex)
    for wt, j in zip(wts, idx):
        m = meas.signal_modes[j]
        s_jj = position_psd_values(m, w, backaction=True)
        f = momentum_factor(meas, m, w)
        s_qq += wt * wt * s_jj
        s_pp += wt * wt * np.abs(f) ** 2 * s_jj
        s_qp += wt * wt * np.conj(f) * s_jj
        g = 2.0 * math.sqrt(meas.eta * m.mu) * wt * s_jj
        s_qy += g
        s_py += f * g
    return CollectiveSpectra(
        s_qq=SampledSpectrum(grid, s_qq),
        s_pp=SampledSpectrum(grid, s_pp),
        s_qp=SampledSpectrum(grid, s_qp),
        s_qy=SampledSpectrum(grid, s_qy),
        s_py=SampledSpectrum(grid, s_py),
        weights=wts,
    )


def collective_cross_spectra(
    meas: MeasurementModel, subset: Sequence[int], grid: FrequencyGrid
) -> Tuple[SampledSpectrum, SampledSpectrum]:
    """(S_qY, S_pY). S_qY = 2√η Σ w_j √μ_j S_{q_j q_j}, S_pY 는 momentum_convention 에 따라."""
    spectra = collective_spectra(meas, subset, grid)
    return spectra.s_qy, spectra.s_py


# --- grid construction --------------------------------------------------------------------


def broadened_frequency(mode: ModeModel, eta: float) -> float:
    """Ω′ = (16ηΓ²C n_tot Ω² + Ω⁴)^{1/4}. 측정으로 넓어진 필터 대역."""
    return (16 * eta * mode.gamma ** 2 * mode.C * mode.n_tot * mode.omega ** 2 + mode.omega ** 4) ** 0.25


def _feature_scales(meas: MeasurementModel) -> Tuple[List[float], List[float]]:
    """(선폭 목록, 대역 중심 목록). 중심에는 측정으로 넓어진 Ω′_j 가 들어간다."""
    widths: List[float] = []
    centers: List[float] = []
    for m in meas.signal_modes:
        widths.append(m.gamma)
        centers.append(broadened_frequency(m, meas.eta))
        if m.damping is Damping.STRUCTURAL:
            widths.append(m.omega_c)
    for c in meas.noise_components:
        if c.kind is NoiseKind.LORENTZIAN_PEAK:
            widths.append(c.width)
            centers.append(c.center)
        elif c.kind is NoiseKind.STRUCTURAL_PEAK:
            widths.append(c.mode.gamma)
            centers.append(c.mode.omega)
    return widths, centers


def _capped_points(needed: Callable[[int], int], bins_per_width: int) -> int:
    """bins_per_width 로 필요한 점 개수. MAX_GRID_POINTS 를 넘으면 MIN_BINS_PER_WIDTH 까지 낮춰 본다."""
    n = needed(bins_per_width)
    if n <= MAX_GRID_POINTS:
        return n
    coarse = needed(min(bins_per_width, MIN_BINS_PER_WIDTH))
    if coarse > MAX_GRID_POINTS:
        raise ModelError(
            f"grid needs {coarse} points even at {MIN_BINS_PER_WIDTH} bins per linewidth; "
            f"limit is MECHCOND_MAX_GRID_POINTS={MAX_GRID_POINTS}"
        )
    _logger.warning(
        "grid resolution reduced to fit point limit",
        extra={"nPoints": coarse, "requested": n, "binsPerWidth": MIN_BINS_PER_WIDTH, "limit": MAX_GRID_POINTS},
    )
    return coarse


def make_grid(
    meas: MeasurementModel,
    n_points: Optional[int] = None,
    bins_per_width: int = BINS_PER_WIDTH,
    band_margin: float = BAND_MARGIN,
) -> FrequencyGrid:
    """가장 좁은 특징(min Γ_j, 최소 피크 폭, ω_c)이 bins_per_width 이상 bin 을 차지하고
    max|ω| ≥ band_margin·max(Ω′_j, 잡음 피크 중심), 또 ≥ 8·max Ω_j 인 최소 2의 거듭제곱 격자.

    격자는 −n/2 … n/2−1 이라 양끝이 대칭이 아니다. dω = 2·span/(n−2) 로 잡아
    양의 끝 (n/2−1)·dω 도 span 이상이 되고, 음의 끝은 그보다 dω 만큼 더 나간다.
    점 개수는 MAX_GRID_POINTS 로 제한된다 (_capped_points).
    """
    widths, centers = _feature_scales(meas)
    span = max(band_margin * max(centers), BAND_MARGIN * max(m.omega for m in meas.signal_modes))

    def needed(bins: int) -> int:
        return max(MIN_GRID_POINTS, 1 << math.ceil(math.log2(2 * span * bins / min(widths) + 2)))

    n = n_points or GRID_POINTS or _capped_points(needed, bins_per_width)
    grid = FrequencyGrid(n, 2 * span / (n - 2))
    d_max = min(widths) / bins_per_width
    if grid.d_omega > d_max * (1 + 1e-9):
        _logger.warning(
            "grid under-resolves narrowest feature",
            extra={"nPoints": n, "dOmega": grid.d_omega, "required": d_max},
        )
    return grid


def sampling_grid(
    meas: MeasurementModel,
    dt: float,
    n_points: Optional[int] = None,
    bins_per_width: int = BINS_PER_WIDTH,
) -> FrequencyGrid:
    """샘플 주기 dt 에 맞춘 필터 격자 (Nyquist = π/dt). 점 개수는 가장 좁은 선폭이 bins_per_width 이상 bin 이 되는 최소 2의 거듭제곱.
    Nyquist 가 넓어진 대역 Ω′ 의 BAND_MARGIN 배보다 낮으면 경고 (조건부 분산의 고주파 꼬리가 커진다)."""
    widths, centers = _feature_scales(meas)
    n = n_points or GRID_POINTS
    if not n:
        n = _capped_points(
            lambda bins: max(MIN_GRID_POINTS, 1 << math.ceil(math.log2(2 * math.pi * bins / (min(widths) * dt)))),
            bins_per_width,
        )
    grid = FrequencyGrid.for_sampling(n, dt)
    grid.check_covers(m.omega for m in meas.signal_modes)
    if grid.omega_max < BAND_MARGIN * max(centers):
        _logger.warning(
            "sampling rate is low for the broadened filter band",
            extra={"omegaMax": grid.omega_max, "broadenedBand": max(centers)},
        )
    return grid
