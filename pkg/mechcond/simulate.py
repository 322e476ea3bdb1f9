"""
주파수 영역 궤적 합성과 Monte Carlo 조건화 리포트, (C, n_th) 격자 스윕.

합성: 백색 Gaussian 을 rfft → √S_FF 로 성형 → 감수율 → irfft.
원 길이의 2배 이상을 만들고 앞쪽만 남겨 순환 합성곱의 감김을 피한다.
난수: Philox, (seed, trial, role, index) 로 스트림을 나눠 모드를 추가해도 다른 스트림은 그대로.

필요 환경변수:
  MECHCOND_THREADS: Monte Carlo trial 병렬 워커 수. 기본 1
"""
import hashlib
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from mechcond.condition import (
    ConditioningReport,
    apply_filters,
    conditional_spectra,
    conditional_variances,
    conversion_factors,
    gaussian_purity,
    relative_estimate_stats,
)
from mechcond.criteria import RegimeInput, quantum_squeezing_threshold
from mechcond.errors import ModelError
from mechcond.model import (
    BAND_MARGIN,
    BINS_PER_WIDTH,
    MIN_BINS_PER_WIDTH,
    Damping,
    FrequencyGrid,
    MeasurementModel,
    ModeModel,
    backaction_force_psd,
    collective_weights,
    make_grid,
    momentum_factor,
    noise_psd_values,
    sampling_grid,
    susceptibility,
    thermal_force_psd,
)
from mechcond.wiener import synthesize_filters

THREADS = int(os.environ.get("MECHCOND_THREADS", "1"))
STATIONARY_LIFETIMES = 100.0
# 스윕 격자: 선폭당 8 bin, max|ω| ≥ 4·Ω′
SWEEP_BINS_PER_WIDTH = MIN_BINS_PER_WIDTH
SWEEP_BAND_MARGIN = 4.0
BRACKET_STEPS = 12

_logger = logging.getLogger(__name__)


class BackactionMode(str, Enum):
    CORRELATED = "correlated"  # 모든 모드가 같은 backaction 힘
    OFF = "off"


class NoiseRole(IntEnum):
    THERMAL = 0
    BACKACTION = 1
    MEASUREMENT = 2


@dataclass(frozen=True)
class SimulationSpec:
    meas: MeasurementModel
    duration: float
    dt: float
    seed: int
    backaction_mode: BackactionMode = BackactionMode.CORRELATED

    def __post_init__(self) -> None:
        object.__setattr__(self, "backaction_mode", BackactionMode(self.backaction_mode))
        if not (self.duration > 0 and self.dt > 0):
            raise ModelError("duration and dt must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ModelError("seed must be a 64-bit unsigned integer")
        min_gamma = min(m.gamma for m in self.meas.signal_modes)
        if self.duration < STATIONARY_LIFETIMES / min_gamma * (1 - 1e-9):
            raise ModelError(
                f"duration {self.duration:.4g} s shorter than {STATIONARY_LIFETIMES:g}/min gamma ({STATIONARY_LIFETIMES / min_gamma:.4g} s)"
            )
        nyquist = math.pi / self.dt
        need = BAND_MARGIN * max(m.omega for m in self.meas.signal_modes)
        if nyquist < need * (1 - 1e-9):
            raise ModelError(f"dt {self.dt:.4g} s: Nyquist {nyquist:.4g} rad/s below {BAND_MARGIN:g}x max resonance ({need:.4g})")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt))

    def spec_hash(self) -> str:
        text = repr((self.meas, self.duration, self.dt, self.backaction_mode.value))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    y: np.ndarray
    q_true: np.ndarray  # (모드, 샘플)
    p_true: np.ndarray
    f_thermal: np.ndarray
    f_backaction: np.ndarray
    dt: float
    seed: int
    trial: int
    spec_hash: str
    labels: Tuple[str, ...] = field(default=())

    def columns(self) -> Dict[str, np.ndarray]:
        out = {"y": self.y}
        for j, label in enumerate(self.labels or [str(j + 1) for j in range(self.q_true.shape[0])]):
            out[f"q_{label}"] = self.q_true[j]
            out[f"p_{label}"] = self.p_true[j]
        return out

    def collective(self, meas: MeasurementModel, subset: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        idx = meas.check_subset(subset)
        wts = collective_weights(meas, idx)
        return wts @ self.q_true[list(idx)], wts @ self.p_true[list(idx)]


def _generator(seed: int, trial: int, role: NoiseRole, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(role), int(index)))
    return np.random.Generator(np.random.Philox(seq))


def synthesize(spec: SimulationSpec, trial: int = 0) -> TrajectoryBundle:
    """q_j = χ_j·(F_th,j + F_ba,j), Y = Σ 2√(ημ_j) q_j + 측정 잡음.
    numpy FFT 는 e^{−iωt} 규약이라 응답 함수에는 켤레를 곱한다."""
    meas = spec.meas
    n_keep = spec.n_samples
    n_sim = 1 << math.ceil(math.log2(2 * n_keep))
    w = 2 * math.pi * np.fft.rfftfreq(n_sim, spec.dt)
    norm = 1.0 / math.sqrt(spec.dt)

    def white(role: NoiseRole, index: int) -> np.ndarray:
        rng = _generator(spec.seed, trial, role, index)
        return np.fft.rfft(rng.standard_normal(n_sim) * norm)

    def to_time(x: np.ndarray) -> np.ndarray:
        return np.fft.irfft(x, n=n_sim)[:n_keep]

    n_modes = len(meas.signal_modes)
    q = np.zeros((n_modes, n_keep))
    p = np.zeros((n_modes, n_keep))
    f_th = np.zeros((n_modes, n_keep))
    f_ba = np.zeros((n_modes, n_keep))
    y_hat = np.zeros(w.shape, dtype=complex)
    xi_ba = white(NoiseRole.BACKACTION, 0) if spec.backaction_mode is BackactionMode.CORRELATED else None

    for j, mode in enumerate(meas.signal_modes):
        force = white(NoiseRole.THERMAL, j) * np.sqrt(thermal_force_psd(mode, w))
        f_th[j] = to_time(force)
        if xi_ba is not None and mode.mu > 0:
            ba = xi_ba * math.sqrt(backaction_force_psd(mode))
            f_ba[j] = to_time(ba)
            force = force + ba
        q_hat = np.conj(susceptibility(mode, w)) * force
        q[j] = to_time(q_hat)
        p[j] = to_time(np.conj(momentum_factor(meas, mode, w)) * q_hat)
        if mode.mu > 0:
            y_hat += 2.0 * math.sqrt(meas.eta * mode.mu) * q_hat

    for c, comp in enumerate(meas.noise_components):
        y_hat += white(NoiseRole.MEASUREMENT, c) * np.sqrt(noise_psd_values(comp, w, meas.eta))

    return TrajectoryBundle(
        y=to_time(y_hat),
        q_true=q,
        p_true=p,
        f_thermal=f_th,
        f_backaction=f_ba,
        dt=spec.dt,
        seed=spec.seed,
        trial=trial,
        spec_hash=spec.spec_hash(),
        labels=tuple(m.label or str(j + 1) for j, m in enumerate(meas.signal_modes)),
    )


# --- Monte Carlo -----------------------------------------------------------------------------


def filter_grid(spec: SimulationSpec, n_points: Optional[int] = None, bins_per_width: int = BINS_PER_WIDTH) -> FrequencyGrid:
    return sampling_grid(spec.meas, spec.dt, n_points, bins_per_width)


@dataclass(frozen=True)
class _TrialStats:
    v_dq: float
    v_dp: float
    c_dqdp: float
    v_rel_q: float
    v_rel_p: float
    c_rel: float
    kurt_q: float
    kurt_p: float


def _mean_and_stderr(values: np.ndarray) -> Tuple[float, Optional[float]]:
    mean = float(np.mean(values))
    if values.shape[0] < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))


def monte_carlo_report(
    spec: SimulationSpec,
    subset: Sequence[int],
    trials: int,
    n_points: Optional[int] = None,
) -> ConditioningReport:
    """trial 마다 합성 → 필터 적용 → 통계. 정답 조건부 분산은 Var(q_coll − q̂⃗)."""
    meas = spec.meas
    idx = meas.check_subset(subset)
    if trials < 1:
        raise ModelError("trials must be >= 1")
    grid = filter_grid(spec, n_points)
    filters = synthesize_filters(meas, idx, grid)

    def run(trial: int) -> _TrialStats:
        bundle = synthesize(spec, trial)
        traces = apply_filters(filters, bundle.y, spec.dt)
        window = traces.window()
        q_c, p_c = bundle.collective(meas, idx)
        err = np.vstack([q_c[window] - traces.q_pred[window], p_c[window] - traces.p_pred[window]])
        cov = np.cov(err)
        rel = relative_estimate_stats(traces)
        _logger.info("trial finished", extra={"trial": trial, "seed": spec.seed, "samples": bundle.y.shape[0]})
        return _TrialStats(
            v_dq=float(cov[0, 0]),
            v_dp=float(cov[1, 1]),
            c_dqdp=float(cov[0, 1]),
            v_rel_q=rel[0],
            v_rel_p=rel[1],
            c_rel=rel[2],
            kurt_q=float(stats.kurtosis(traces.delta_q)),
            kurt_p=float(stats.kurtosis(traces.delta_p)),
        )

    with ThreadPoolExecutor(max_workers=max(1, min(THREADS, trials))) as pool:
        results: List[_TrialStats] = list(pool.map(run, range(trials)))

    table = {name: np.array([getattr(r, name) for r in results]) for name in _TrialStats.__dataclass_fields__}
    means: Dict[str, float] = {}
    stderr: Dict[str, float] = {}
    for name, values in table.items():
        means[name], err = _mean_and_stderr(values)
        if err is not None:
            stderr[name] = err

    f_q, f_p = conversion_factors((means["v_rel_q"], means["v_rel_p"]), (means["v_dq"], means["v_dp"]))
    flags = []
    if spec.backaction_mode is BackactionMode.CORRELATED and any(m.damping is Damping.STRUCTURAL for m in meas.signal_modes):
        flags.append("flat_backaction")
    if spec.backaction_mode is BackactionMode.OFF:
        flags.append("backaction_off")
    names = {"v_dq": "V_dq_dq", "v_dp": "V_dp_dp", "c_dqdp": "C_dq_dp", "v_rel_q": "V_Dq_Dq", "v_rel_p": "V_Dp_Dp", "c_rel": "C_Dq_Dp"}
    report = ConditioningReport(
        V_dq_dq=means["v_dq"],
        V_dp_dp=means["v_dp"],
        C_dq_dp=means["c_dqdp"],
        V_Dq_Dq=means["v_rel_q"],
        V_Dp_Dp=means["v_rel_p"],
        C_Dq_Dp=means["c_rel"],
        F_q=f_q,
        F_p=f_p,
        purity=gaussian_purity(means["v_dq"], means["v_dp"], means["c_dqdp"]),
        squeezing_ratio=means["v_dp"] / means["v_dq"] if means["v_dq"] > 0 else None,
        relative_squeezing_ratio=means["v_rel_p"] / means["v_rel_q"] if means["v_rel_q"] > 0 else None,
        subset=list(idx),
        provenance="simulated",
        stderr={names[k]: v for k, v in stderr.items() if k in names},
        excess_kurtosis={"Dq": means["kurt_q"], "Dp": means["kurt_p"]},
        flags=flags,
        grid={"n_points": grid.n_points, "d_omega": grid.d_omega},
        seed=spec.seed,
        trials=trials,
    )
    _logger.info(
        "monte carlo finished",
        extra={"trials": trials, "seed": spec.seed, "subset": list(idx), "Fq": f_q, "Fp": f_p},
    )
    return report


# --- regime sweeps ---------------------------------------------------------------------------


def regime_variance(
    base: ModeModel,
    cooperativity: float,
    n_th: float,
    n_modes: int = 1,
    eta: float = 1.0,
    bins_per_width: int = SWEEP_BINS_PER_WIDTH,
    band_margin: float = SWEEP_BAND_MARGIN,
) -> float:
    """동일 모드 N 개의 집단 좌표 = C → NC 로 바꾼 단일 모드. 주파수 영역 V_δqδq."""
    mode = base.with_(mu=n_modes * cooperativity * base.gamma, n_th=n_th)
    meas = MeasurementModel(eta, (mode,))
    grid = make_grid(meas, bins_per_width=bins_per_width, band_margin=band_margin)
    filters = synthesize_filters(meas, (0,), grid)
    return conditional_variances(conditional_spectra(meas, filters)).V_dq_dq


def sweep_regimes(
    base: ModeModel,
    c_grid: Sequence[float],
    n_th_grid: Sequence[float],
    n_modes: int = 1,
    eta: float = 1.0,
    bins_per_width: int = SWEEP_BINS_PER_WIDTH,
    band_margin: float = SWEEP_BAND_MARGIN,
) -> Dict[Tuple[float, float], float]:
    if n_modes < 1:
        raise ModelError("number of identical modes must be >= 1")
    values = list(c_grid) + list(n_th_grid)
    if not all(math.isfinite(v) and v >= 0 for v in values):
        raise ModelError("sweep grids must be finite and non-negative")
    out: Dict[Tuple[float, float], float] = {}
    for n_th in n_th_grid:
        for c in c_grid:
            out[(float(c), float(n_th))] = regime_variance(base, c, n_th, n_modes, eta, bins_per_width, band_margin)
    _logger.info("regime sweep finished", extra={"cells": len(out), "damping": base.damping.value, "modes": n_modes})
    return out


def predicted_boundary(base: ModeModel, n_th: float, n_modes: int = 1, eta: float = 1.0) -> float:
    """닫힌 형태 양자 squeezing 임계 C (criteria.quantum_squeezing_threshold)."""
    inp = RegimeInput(C=0.0, Q=base.Q, n_th=n_th, eta=eta, N=n_modes, damping=base.damping)
    return quantum_squeezing_threshold(inp)[0]


def squeezing_boundary(
    base: ModeModel,
    n_th_grid: Sequence[float],
    n_modes: int = 1,
    eta: float = 1.0,
    c_bounds: Optional[Tuple[float, float]] = None,
    bins_per_width: int = SWEEP_BINS_PER_WIDTH,
    band_margin: float = SWEEP_BAND_MARGIN,
    max_steps: int = BRACKET_STEPS,
) -> Dict[float, float]:
    """n_th 마다 V_δqδq = 1/2 가 되는 C.

    닫힌 형태 임계값에서 시작해 C 를 2배씩 옮기며 부호가 바뀌는 구간을 찾고 brentq (log C, xtol 1e-2).
    c_bounds 가 있으면 그 안에서만 찾는다. 구간을 못 찾으면 nan.
    """
    x_lo = math.log(c_bounds[0]) if c_bounds and c_bounds[0] > 0 else -math.inf
    x_hi = math.log(c_bounds[1]) if c_bounds and math.isfinite(c_bounds[1]) else math.inf
    step = math.log(2.0)
    out: Dict[float, float] = {}
    for n_th in n_th_grid:
        cache: Dict[float, float] = {}

        def excess(log_c: float) -> float:
            if log_c not in cache:
                v = regime_variance(base, math.exp(log_c), n_th, n_modes, eta, bins_per_width, band_margin)
                cache[log_c] = math.log(v / 0.5)
            return cache[log_c]

        x_prev = min(max(math.log(predicted_boundary(base, n_th, n_modes, eta)), x_lo), x_hi)
        f_prev = excess(x_prev)
        # V > 1/2 이면 C 를 키운다
        direction = 1.0 if f_prev > 0 else -1.0
        bracket: Optional[Tuple[float, float]] = (x_prev, x_prev) if f_prev == 0 else None
        for _ in range(max_steps):
            if bracket is not None:
                break
            x = min(max(x_prev + direction * step, x_lo), x_hi)
            if x == x_prev:
                break
            f = excess(x)
            if f_prev * f <= 0:
                bracket = (min(x, x_prev), max(x, x_prev))
            x_prev, f_prev = x, f
        if bracket is None:
            _logger.warning("no squeezing boundary found", extra={"nTh": n_th, "lastC": math.exp(x_prev)})
            out[float(n_th)] = float("nan")
            continue
        root = bracket[0] if bracket[0] == bracket[1] else optimize.brentq(excess, *bracket, xtol=1e-2)
        out[float(n_th)] = math.exp(root)
        _logger.info(
            "squeezing boundary found",
            extra={"nTh": n_th, "C": out[float(n_th)], "evaluations": len(cache), "damping": base.damping.value},
        )
    return out
