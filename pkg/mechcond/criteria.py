"""
닫힌 형태 판정식: thermal squeezing, RWA 붕괴, 점근 집단 분산, 순도, 양자 squeezing 임계값,
바닥상태 냉각, 조건부 얽힘. 모든 부등식은 엄격(경계값은 False).

n_tot^(N) = n_th + N·C + 1/2 는 항상 (n_th, C, N) 에서 다시 계산한다.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from mechcond.errors import CriteriaError
from mechcond.model import Damping

_logger = logging.getLogger(__name__)


class RegimeInput(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    C: float = Field(ge=0)
    Q: float = Field(gt=0)
    n_th: float = Field(ge=0)
    eta: float = Field(gt=0, le=1)
    N: int = Field(default=1, ge=1)
    damping: Damping = Damping.VISCOUS

    @property
    def n_tot(self) -> float:
        return self.n_th + self.N * self.C + 0.5


def _n_tot(n_th: float, c: float, n_modes: int) -> float:
    return n_th + n_modes * c + 0.5


def thermal_squeezing_S(mu: float, n_tot: float, gamma: float, omega: float) -> Tuple[float, bool]:
    """S = 16 μ n_tot Γ/Ω². S > 1 이면 thermal squeezing."""
    if mu < 0 or n_tot < 0 or not (gamma > 0 and omega > 0):
        raise CriteriaError("mu, n_tot must be non-negative and gamma, omega positive")
    s = 16.0 * mu * n_tot * gamma / omega ** 2
    return s, s > 1.0


def rwa_breakdown(inp: RegimeInput) -> bool:
    """C > Q²/(Nη n_tot)."""
    return inp.C > inp.Q ** 2 / (inp.N * inp.eta * inp.n_tot)


def asymptotic_collective_variance(inp: RegimeInput) -> float:
    """[Q² n_tot/(64(ηNC)³)]^{1/4}. RWA 가 깨진 자유질량 극한에서만 유효."""
    if inp.C <= 0:
        raise CriteriaError("asymptotic variance needs C > 0")
    return (inp.Q ** 2 * inp.n_tot / (64.0 * (inp.eta * inp.N * inp.C) ** 3)) ** 0.25


def purity(inp: RegimeInput) -> float:
    """√(ηNC/n_tot)."""
    return math.sqrt(inp.eta * inp.N * inp.C / inp.n_tot)


def _solve_self_consistent(required: Callable[[float], float]) -> float:
    """C = required(C) 의 근. required 는 C 에 대해 준선형 이하로 증가."""
    f = lambda c: c - required(c)
    hi = max(required(0.0), 1.0)
    while f(hi) <= 0:
        hi *= 2.0
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-12, rtol=1e-12))


def structural_squeezing_cooperativity(n_tot: float, q: float, n_modes: int = 1) -> float:
    """n_tot^{1/4} Q^{3/4}/N, n_tot 고정. η = 1 식이며 η 에 의존하지 않는다."""
    return n_tot ** 0.25 * q ** 0.75 / n_modes


def viscous_squeezing_cooperativity(n_tot: float, q: float, n_modes: int = 1, eta: float = 1.0) -> float:
    """점근 분산을 1/2 로 둔 (ηNC)³ = Q² n_tot/4, n_tot 고정."""
    return (q ** 2 * n_tot / 4.0) ** (1.0 / 3.0) / (eta * n_modes)


def viscous_squeezing_threshold(inp: RegimeInput) -> Tuple[float, bool]:
    c_req = _solve_self_consistent(
        lambda c: viscous_squeezing_cooperativity(_n_tot(inp.n_th, c, inp.N), inp.Q, inp.N, inp.eta)
    )
    return c_req, inp.C > c_req


def quantum_squeezing_threshold(inp: RegimeInput) -> Tuple[float, bool]:
    """(필요 C, 만족 여부). n_tot 가 C 를 포함하므로 자기무모순으로 푼다."""
    if inp.damping is Damping.VISCOUS:
        _logger.info("viscous squeezing threshold from the free-mass asymptotic variance", extra={"N": inp.N})
        return viscous_squeezing_threshold(inp)
    c_req = _solve_self_consistent(
        lambda c: structural_squeezing_cooperativity(_n_tot(inp.n_th, c, inp.N), inp.Q, inp.N)
    )
    return c_req, inp.C > c_req


def ground_state_condition(inp: RegimeInput) -> bool:
    return inp.C > inp.n_th / inp.N


def entanglement_condition(inp: RegimeInput) -> bool:
    """V^(N)_δq · V^(N−)_δp < 1/4 의 충분조건 C > n_th² Q/2N. 짝수 N 만."""
    if inp.N % 2:
        raise CriteriaError(f"entanglement criterion needs an even number of modes, got N={inp.N}")
    return inp.C > inp.n_th ** 2 * inp.Q / (2.0 * inp.N)


def structural_relaxation_factor(q: float, n_th: float) -> float:
    """구조/점성 임계값 비의 스케일 (Q/n_th)^{1/12}."""
    if not (q > 0 and n_th > 0):
        raise CriteriaError("Q and n_th must be positive")
    return (q / n_th) ** (1.0 / 12.0)


@dataclass(frozen=True)
class PhotonChain:
    """g = g₀√n_cav, μ = 4g²/κ, C = μ/Γ (모두 rad/s)."""

    g0: float
    n_cav: float
    kappa: float
    gamma: float
    g: float
    mu: float
    C: float


def photon_cooperativity(g0: float, n_cav: float, kappa: float, gamma: float) -> PhotonChain:
    if not (g0 > 0 and kappa > 0 and gamma > 0) or n_cav < 0:
        raise CriteriaError("g0, kappa, gamma must be positive and n_cav non-negative")
    g = g0 * math.sqrt(n_cav)
    mu = 4.0 * g * g / kappa
    return PhotonChain(g0=g0, n_cav=n_cav, kappa=kappa, gamma=gamma, g=g, mu=mu, C=mu / gamma)


def photons_for_squeezing(
    g0: float,
    kappa: float,
    gamma: float,
    omega: float,
    n_th: float,
    eta: float,
    n_modes: int = 1,
    damping: Damping = Damping.STRUCTURAL,
) -> Tuple[float, PhotonChain]:
    """양자 squeezing 임계 C 에 필요한 공진기 광자 수와 그 변환 사슬.
    구조 감쇠 임계식은 η = 1 식이라 검출 효율은 광자 예산에서 검출된 협력도 ηC 로 반영한다."""
    inp = RegimeInput(C=0.0, Q=omega / gamma, n_th=n_th, eta=eta, N=n_modes, damping=damping)
    c_req, _ = quantum_squeezing_threshold(inp)
    c_needed = c_req if inp.damping is Damping.VISCOUS else c_req / eta
    n_cav = c_needed * gamma * kappa / (4.0 * g0 * g0)
    chain = photon_cooperativity(g0, n_cav, kappa, gamma)
    _logger.info("photon budget for squeezing", extra={"Crequired": c_req, "Cneeded": c_needed, "eta": eta, "nCav": n_cav})
    return n_cav, chain


def evaluate_all(inp: RegimeInput) -> Dict[str, Any]:
    """criteria 하위 명령이 출력하는 JSON 블록."""
    c_req, squeezed = quantum_squeezing_threshold(inp)
    out: Dict[str, Any] = {
        "input": inp.model_dump(mode="json"),
        "n_tot": inp.n_tot,
        "thermal_squeezing_S": 16.0 * inp.C * inp.n_tot / inp.Q ** 2,
        "rwa_breakdown": rwa_breakdown(inp),
        "purity": purity(inp),
        "quantum_squeezing": {"C_required": c_req, "satisfied": squeezed, "damping": inp.damping.value},
        "ground_state": {"C_required": inp.n_th / inp.N, "satisfied": ground_state_condition(inp)},
        "asymptotic_collective_variance": asymptotic_collective_variance(inp) if inp.C > 0 else None,
        "entanglement": None,
    }
    if inp.N % 2 == 0:
        out["entanglement"] = {
            "C_required": inp.n_th ** 2 * inp.Q / (2.0 * inp.N),
            "satisfied": entanglement_condition(inp),
        }
    if inp.n_th > 0:
        out["structural_relaxation_factor"] = structural_relaxation_factor(inp.Q, inp.n_th)
    return out


def chain_as_dict(chain: PhotonChain) -> Dict[str, float]:
    return asdict(chain)
