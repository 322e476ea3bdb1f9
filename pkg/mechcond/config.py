"""
JSON 모델 설정 스키마 (pydantic). 디스크는 Hz, 메모리(MeasurementModel)는 rad/s.
내보낼 때 Hz 값은 유효숫자 12자리로 반올림해 export → import → export 가 바이트 단위로 같다.

필요 환경변수:
  MECHCOND_TEMPERATURE_K: n_th, temperature_k 둘 다 없는 모드의 온도 (model 모듈에서 읽음)
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mechcond.errors import ModelError
from mechcond.model import (
    DEFAULT_OMEGA_C,
    SHOT_FLOOR_LEVEL,
    TEMPERATURE_K,
    Damping,
    MeasurementModel,
    ModeModel,
    MomentumConvention,
    NoiseComponent,
    NoiseKind,
    thermal_occupancy,
)

TWO_PI = 2 * math.pi


def _round12(x: float) -> float:
    return float(f"{x:.12g}")


def _hz(omega: float) -> float:
    return _round12(omega / TWO_PI)


class ModeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str = ""
    f_hz: float = Field(gt=0)
    gamma_hz: float = Field(gt=0)
    mu_hz: float = Field(default=0.0, ge=0)
    damping: Damping = Damping.STRUCTURAL
    f_c_hz: Optional[float] = Field(default=None, gt=0)
    n_th: Optional[float] = Field(default=None, ge=0)
    temperature_k: Optional[float] = Field(default=None, gt=0)
    # 장치 메타데이터. 추정에는 쓰지 않는다
    g_hz: Optional[float] = None
    m_eff_kg: Optional[float] = None

    def to_mode(self) -> ModeModel:
        omega = TWO_PI * self.f_hz
        n_th = self.n_th
        if n_th is None:
            n_th = thermal_occupancy(omega, self.temperature_k or TEMPERATURE_K)
        omega_c = TWO_PI * self.f_c_hz if self.f_c_hz is not None else DEFAULT_OMEGA_C
        return ModeModel(
            omega=omega,
            gamma=TWO_PI * self.gamma_hz,
            mu=TWO_PI * self.mu_hz,
            n_th=n_th,
            damping=self.damping,
            omega_c=omega_c,
            label=self.label,
        )

    @classmethod
    def from_mode(cls, mode: ModeModel) -> "ModeConfig":
        return cls(
            label=mode.label,
            f_hz=_hz(mode.omega),
            gamma_hz=_hz(mode.gamma),
            mu_hz=_hz(mode.mu),
            damping=mode.damping,
            f_c_hz=_hz(mode.omega_c) if mode.damping is Damping.STRUCTURAL else None,
            n_th=_round12(mode.n_th),
        )


class NoiseConfig(BaseModel):
    """kind 별 필드: shot_floor(level), lorentzian_peak(f_hz, width_hz, height),
    structural_peak(f_hz, gamma_hz, mu_hz, f_c_hz?, n_th?), tabulated(f_hz[], value[])."""

    model_config = ConfigDict(extra="forbid")

    kind: NoiseKind
    level: Optional[float] = None
    f_hz: Optional[Union[float, List[float]]] = None
    width_hz: Optional[float] = None
    height: Optional[float] = None
    gamma_hz: Optional[float] = None
    mu_hz: Optional[float] = None
    f_c_hz: Optional[float] = None
    n_th: Optional[float] = None
    value: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "NoiseConfig":
        required = {
            NoiseKind.SHOT_FLOOR: (),
            NoiseKind.LORENTZIAN_PEAK: ("f_hz", "width_hz", "height"),
            NoiseKind.STRUCTURAL_PEAK: ("f_hz", "gamma_hz", "mu_hz"),
            NoiseKind.TABULATED: ("f_hz", "value"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} noise needs {', '.join(missing)}")
        if self.kind is NoiseKind.TABULATED and not isinstance(self.f_hz, list):
            raise ValueError("tabulated noise needs a list of f_hz values")
        if self.kind is not NoiseKind.TABULATED and isinstance(self.f_hz, list):
            raise ValueError(f"{self.kind.value} noise takes a single f_hz")
        return self

    def to_component(self) -> NoiseComponent:
        if self.kind is NoiseKind.SHOT_FLOOR:
            return NoiseComponent.shot_floor(self.level if self.level is not None else SHOT_FLOOR_LEVEL)
        if self.kind is NoiseKind.LORENTZIAN_PEAK:
            return NoiseComponent.lorentzian(TWO_PI * self.f_hz, TWO_PI * self.width_hz, self.height)
        if self.kind is NoiseKind.STRUCTURAL_PEAK:
            mode = ModeConfig(
                label="noise",
                f_hz=self.f_hz,
                gamma_hz=self.gamma_hz,
                mu_hz=self.mu_hz,
                f_c_hz=self.f_c_hz,
                n_th=self.n_th,
            ).to_mode()
            return NoiseComponent.structural(mode)
        return NoiseComponent.tabulated([TWO_PI * f for f in self.f_hz], self.value)

    @classmethod
    def from_component(cls, comp: NoiseComponent) -> "NoiseConfig":
        if comp.kind is NoiseKind.SHOT_FLOOR:
            return cls(kind=comp.kind, level=_round12(comp.level))
        if comp.kind is NoiseKind.LORENTZIAN_PEAK:
            return cls(kind=comp.kind, f_hz=_hz(comp.center), width_hz=_hz(comp.width), height=_round12(comp.height))
        if comp.kind is NoiseKind.STRUCTURAL_PEAK:
            m = comp.mode
            return cls(
                kind=comp.kind,
                f_hz=_hz(m.omega),
                gamma_hz=_hz(m.gamma),
                mu_hz=_hz(m.mu),
                f_c_hz=_hz(m.omega_c),
                n_th=_round12(m.n_th),
            )
        return cls(
            kind=comp.kind,
            f_hz=[_hz(w) for w in comp.table_omega],
            value=[_round12(v) for v in comp.table_value],
        )


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eta: float = Field(gt=0, le=1)
    momentum_convention: MomentumConvention = MomentumConvention.PER_MODE
    modes: List[ModeConfig] = Field(min_length=1)
    noise: List[NoiseConfig] = Field(default_factory=lambda: [NoiseConfig(kind=NoiseKind.SHOT_FLOOR, level=SHOT_FLOOR_LEVEL)])
    kappa_hz: Optional[float] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)


def to_measurement_model(cfg: ModelConfig) -> MeasurementModel:
    return MeasurementModel(
        eta=cfg.eta,
        signal_modes=tuple(m.to_mode() for m in cfg.modes),
        noise_components=tuple(n.to_component() for n in cfg.noise),
        momentum_convention=cfg.momentum_convention,
    )


def from_measurement_model(
    meas: MeasurementModel,
    kappa_hz: Optional[float] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> ModelConfig:
    return ModelConfig(
        eta=_round12(meas.eta),
        momentum_convention=meas.momentum_convention,
        modes=[ModeConfig.from_mode(m) for m in meas.signal_modes],
        noise=[NoiseConfig.from_component(c) for c in meas.noise_components],
        kappa_hz=kappa_hz,
        metadata=dict(metadata or {}),
    )


def parse_config(text: str, source: str = "<string>") -> ModelConfig:
    try:
        return ModelConfig.model_validate_json(text)
    except ValidationError as e:
        raise ModelError(f"invalid model config {source}: {e}")


def load_config(path: Union[str, Path]) -> ModelConfig:
    p = Path(path)
    if not p.is_file():
        raise ModelError(f"config not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"), str(p))


def load_model(path: Union[str, Path]) -> MeasurementModel:
    return to_measurement_model(load_config(path))


def dumps_config(cfg: ModelConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json", exclude_none=True), indent=2, ensure_ascii=False) + "\n"


def dump_config(cfg: ModelConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
