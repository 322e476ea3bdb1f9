"""
측정 기록 입력과 모델 피팅.

- TraceFile: 바이너리(MECHCOND_TRACE01) 또는 CSV(`t_s,y`) 기록. 길이 2^16 이상.
- welch_psd: Hann 창, density 스케일 단측 추정을 중심 양측 격자로 옮김 (분산 σ² 백색 → σ²·dt).
- fit_psd: 로그 PSD 잔차의 최소제곱 (trf, 양수 파라미터는 로그 변수). ω_c 는 피팅하지 않는다.
- model_export: 피팅 결과를 model 설정 JSON 으로.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, signal

from mechcond.config import ModelConfig, dump_config, from_measurement_model
from mechcond.errors import FitError, ModelError, TraceError
from mechcond.fileio import TRACE_MAGIC, read_container, read_trace_csv, write_container, write_trace_csv
from mechcond.model import (
    Damping,
    FrequencyGrid,
    MIN_GRID_POINTS,
    MeasurementModel,
    NoiseComponent,
    NoiseKind,
    SampledSpectrum,
    photocurrent_psd_values,
)

MIN_TRACE_LEN = 2 ** 16
MAX_NFEV = 500
PEAK_PROMINENCE_DB = 6.0
PEAK_SEARCH_FRACTION = 0.1
MU_FLOOR = 1e-9

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TraceFile:
    samples: np.ndarray
    dt: float
    calibration: float = 1.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if not self.dt > 0:
            raise TraceError(f"dt must be positive, got {self.dt}")
        if s.ndim != 1 or s.shape[0] < MIN_TRACE_LEN:
            raise TraceError(f"trace needs at least {MIN_TRACE_LEN} samples, got {s.shape[0] if s.ndim == 1 else s.shape}")
        if not np.all(np.isfinite(s)):
            raise TraceError("trace contains non-finite samples")

    @property
    def y(self) -> np.ndarray:
        """보정 계수를 곱한 정규화 광전류."""
        return self.samples * self.calibration


def load_trace(path: Union[str, Path]) -> TraceFile:
    p = Path(path)
    if not p.is_file():
        raise TraceError(f"trace not found: {p}")
    with open(p, "rb") as f:
        head = f.read(len(TRACE_MAGIC))
    if head == TRACE_MAGIC:
        header, samples = read_container(p, TRACE_MAGIC)
        if "dt" not in header:
            raise TraceError(f"{p}: header has no dt")
        meta = {k: v for k, v in header.items() if k not in ("dt", "calibration")}
        return TraceFile(samples, float(header["dt"]), float(header.get("calibration", 1.0)), meta)
    y, dt = read_trace_csv(p)
    return TraceFile(y, dt)


def save_trace(trace: TraceFile, path: Union[str, Path]) -> None:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        write_trace_csv(p, trace.y, trace.dt)
        return
    header = {"units": "normalized", "channel": "Y", **trace.metadata, "dt": trace.dt, "calibration": trace.calibration}
    write_container(p, TRACE_MAGIC, header, trace.samples)


# --- PSD estimation -------------------------------------------------------------------------


def welch_psd(trace: TraceFile, segment_length: int = 2 ** 14, overlap_fraction: float = 0.5) -> SampledSpectrum:
    n = trace.samples.shape[0]
    if segment_length > n:
        raise TraceError(f"segment_length {segment_length} exceeds trace length {n}")
    if segment_length < MIN_GRID_POINTS or segment_length & (segment_length - 1):
        raise TraceError(f"segment_length must be a power of two >= {MIN_GRID_POINTS}")
    if not 0 <= overlap_fraction <= 0.9:
        raise TraceError(f"overlap_fraction must be in [0, 0.9], got {overlap_fraction}")
    _, one_sided = signal.welch(
        trace.y,
        fs=1.0 / trace.dt,
        window="hann",
        nperseg=segment_length,
        noverlap=int(overlap_fraction * segment_length),
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    # 단측 → 양측: DC, Nyquist 는 scipy 가 두 배로 하지 않는다
    two_sided = one_sided / 2.0
    two_sided[0] = one_sided[0]
    two_sided[-1] = one_sided[-1]
    half = segment_length // 2
    values = np.empty(segment_length)
    values[half:] = two_sided[:half]
    values[:half] = two_sided[half:0:-1]
    grid = FrequencyGrid.for_sampling(segment_length, trace.dt)
    _logger.info("welch psd estimated", extra={"segments": n // segment_length, "nPoints": segment_length})
    return SampledSpectrum(grid, values)


# --- fitting --------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FitResult:
    meas: MeasurementModel
    params: Dict[str, float]
    stderr: Dict[str, float]
    residual: float
    converged: bool
    nfev: int
    message: str = ""
    diagnostics: Dict[str, Any] = field(default_factory=dict)


class _Layout:
    """피팅 변수 (모두 로그) ↔ MeasurementModel."""

    def __init__(self, template: MeasurementModel, band: Tuple[float, float], d_omega: float) -> None:
        self.template = template
        self.names: List[str] = []
        self.x0: List[float] = []
        self.lower: List[float] = []
        self.upper: List[float] = []
        lo_w, hi_w = math.log(band[0]), math.log(band[1])
        for j, m in enumerate(template.signal_modes):
            self._add(f"mode{j + 1}.omega", m.omega, lo_w, hi_w)
            self._add(f"mode{j + 1}.gamma", m.gamma, math.log(d_omega / 10), math.log(m.omega / 2))
            self._add(f"mode{j + 1}.mu", max(m.mu, MU_FLOOR * m.gamma))
        for c, comp in enumerate(template.noise_components):
            key = f"noise{c + 1}"
            if comp.kind is NoiseKind.SHOT_FLOOR:
                self._add(f"{key}.level", comp.level)
            elif comp.kind is NoiseKind.LORENTZIAN_PEAK:
                self._add(f"{key}.center", comp.center, lo_w, hi_w)
                self._add(f"{key}.width", comp.width, math.log(d_omega / 10), math.log(comp.center))
                self._add(f"{key}.height", max(comp.height, MU_FLOOR))
            elif comp.kind is NoiseKind.STRUCTURAL_PEAK:
                m = comp.mode
                self._add(f"{key}.omega", m.omega, lo_w, hi_w)
                self._add(f"{key}.gamma", m.gamma, math.log(d_omega / 10), math.log(m.omega / 2))
                self._add(f"{key}.mu", max(m.mu, MU_FLOOR * m.gamma))

    def _add(self, name: str, value: float, lo: float = -np.inf, hi: float = np.inf) -> None:
        x = math.log(value)
        self.names.append(name)
        self.x0.append(min(max(x, lo + 1e-9), hi - 1e-9) if np.isfinite(lo) and np.isfinite(hi) else x)
        self.lower.append(lo)
        self.upper.append(hi)

    def values(self, theta: np.ndarray) -> Dict[str, float]:
        return {n: float(math.exp(t)) for n, t in zip(self.names, theta)}

    def build(self, theta: np.ndarray) -> MeasurementModel:
        v = self.values(theta)
        modes = tuple(
            m.with_(omega=v[f"mode{j + 1}.omega"], gamma=v[f"mode{j + 1}.gamma"], mu=v[f"mode{j + 1}.mu"])
            for j, m in enumerate(self.template.signal_modes)
        )
        comps = []
        for c, comp in enumerate(self.template.noise_components):
            key = f"noise{c + 1}"
            if comp.kind is NoiseKind.SHOT_FLOOR:
                comps.append(NoiseComponent.shot_floor(v[f"{key}.level"]))
            elif comp.kind is NoiseKind.LORENTZIAN_PEAK:
                comps.append(NoiseComponent.lorentzian(v[f"{key}.center"], v[f"{key}.width"], v[f"{key}.height"]))
            elif comp.kind is NoiseKind.STRUCTURAL_PEAK:
                mode = comp.mode.with_(omega=v[f"{key}.omega"], gamma=v[f"{key}.gamma"], mu=v[f"{key}.mu"])
                comps.append(NoiseComponent.structural(mode))
            else:
                comps.append(comp)
        return MeasurementModel(self.template.eta, modes, tuple(comps), self.template.momentum_convention)


def _fit_bins(psd: SampledSpectrum, mask: Sequence[Tuple[float, float]]) -> np.ndarray:
    w = psd.omega
    keep = (w > 0) & np.isfinite(psd.real) & (psd.real > 0)
    for lo, hi in mask:
        keep &= ~((w >= lo) & (w <= hi))
    return keep


def initial_guess(psd: SampledSpectrum, template: MeasurementModel, mask: Sequence[Tuple[float, float]] = ()) -> MeasurementModel:
    """피크 검출(로컬 대비 6 dB)로 템플릿의 Ω, Γ, μ, 잡음 피크, shot floor 초기값을 다듬는다."""
    keep = _fit_bins(psd, mask)
    w = psd.omega[keep]
    s = psd.real[keep]
    d_omega = psd.grid.d_omega
    floor = float(np.median(s))
    peaks, _ = signal.find_peaks(10 * np.log10(s), prominence=PEAK_PROMINENCE_DB)
    widths = signal.peak_widths(s, peaks, rel_height=0.5)[0] * d_omega if peaks.size else np.array([])

    def nearest(center: float) -> Optional[int]:
        if not peaks.size:
            return None
        k = int(np.argmin(np.abs(w[peaks] - center)))
        return k if abs(w[peaks[k]] - center) <= PEAK_SEARCH_FRACTION * center else None

    eta = template.eta
    modes = []
    for m in template.signal_modes:
        k = nearest(m.omega)
        if k is None:
            modes.append(m)
            continue
        omega0 = float(w[peaks[k]])
        gamma0 = min(max(float(widths[k]), d_omega), omega0 / 4)
        mu0 = max(float(s[peaks[k]]) - floor, 0.0) * gamma0 / (8.0 * eta * (m.n_th + 0.5))
        modes.append(m.with_(omega=omega0, gamma=gamma0, mu=max(mu0, MU_FLOOR * gamma0)))
    comps = []
    for comp in template.noise_components:
        if comp.kind is NoiseKind.SHOT_FLOOR:
            comps.append(NoiseComponent.shot_floor(floor))
            continue
        if comp.kind is NoiseKind.LORENTZIAN_PEAK:
            k = nearest(comp.center)
            if k is not None:
                comps.append(
                    NoiseComponent.lorentzian(
                        float(w[peaks[k]]), max(float(widths[k]), d_omega), max(float(s[peaks[k]]) - floor, MU_FLOOR)
                    )
                )
                continue
        comps.append(comp)
    return MeasurementModel(eta, tuple(modes), tuple(comps), template.momentum_convention)


def fit_psd(
    psd: SampledSpectrum,
    template: MeasurementModel,
    mask: Sequence[Tuple[float, float]] = (),
    initial: str = "peaks",
) -> FitResult:
    """로그 PSD 최소제곱 (가중치는 로그 공간에서 균일). mask 범위의 bin 은 목적함수에서 빠진다."""
    if not template.signal_modes:
        raise ModelError("fit template needs at least one mode")
    keep = _fit_bins(psd, mask)
    if np.count_nonzero(keep) < 8:
        raise FitError("too few unmasked positive bins to fit")
    w = psd.omega[keep]
    log_data = np.log(psd.real[keep])
    start = initial_guess(psd, template, mask) if initial == "peaks" else template
    band = (float(w[0]), float(w[-1]))
    layout = _Layout(start, band, psd.grid.d_omega)

    def residuals(theta: np.ndarray) -> np.ndarray:
        try:
            model = photocurrent_psd_values(layout.build(theta), w)
        except ModelError:
            return np.full(w.shape, 1e3)
        return np.log(np.maximum(model, 1e-300)) - log_data

    res = optimize.least_squares(
        residuals,
        np.array(layout.x0),
        bounds=(np.array(layout.lower), np.array(layout.upper)),
        method="trf",
        max_nfev=MAX_NFEV,
    )
    n_bins, n_par = w.shape[0], len(layout.names)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    s2 = 2.0 * res.cost / max(n_bins - n_par, 1)
    cov = np.linalg.pinv(res.jac.T @ res.jac) * s2
    values = layout.values(res.x)
    stderr = {n: values[n] * float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(layout.names)}
    result = FitResult(
        meas=layout.build(res.x),
        params=values,
        stderr=stderr,
        residual=rms,
        converged=bool(res.status > 0),
        nfev=int(res.nfev),
        message=str(res.message),
        diagnostics={"bins": n_bins, "parameters": n_par, "weights": "uniform_log", "status": int(res.status)},
    )
    if not result.converged:
        _logger.warning("psd fit did not converge", extra={"nfev": res.nfev, "residual": rms})
        raise FitError(f"fit did not converge after {res.nfev} evaluations: {res.message}", best=result)
    _logger.info("psd fit converged", extra={"nfev": res.nfev, "residual": rms, "modes": len(template.signal_modes)})
    return result


def compare_damping_fits(
    psd: SampledSpectrum,
    template: MeasurementModel,
    mask: Sequence[Tuple[float, float]] = (),
) -> Dict[Damping, FitResult]:
    """같은 템플릿을 점성/구조 감쇠로 각각 피팅."""
    out = {}
    for damping in (Damping.VISCOUS, Damping.STRUCTURAL):
        modes = tuple(m.with_(damping=damping) for m in template.signal_modes)
        variant = MeasurementModel(template.eta, modes, template.noise_components, template.momentum_convention)
        out[damping] = fit_psd(psd, variant, mask)
    _logger.info(
        "damping models compared",
        extra={"viscousResidual": out[Damping.VISCOUS].residual, "structuralResidual": out[Damping.STRUCTURAL].residual},
    )
    return out


def model_export(
    fit: FitResult,
    path: Optional[Union[str, Path]] = None,
    kappa_hz: Optional[float] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> ModelConfig:
    meta = dict(metadata or {})
    meta.setdefault("fit_residual", float(f"{fit.residual:.12g}"))
    cfg = from_measurement_model(fit.meas, kappa_hz=kappa_hz, metadata=meta)
    if path is not None:
        dump_config(cfg, path)
    return cfg
