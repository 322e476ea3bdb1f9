"""
mechcond 예외 계층.
HTTPException(status_code, detail) 와 같은 모양: 각 예외는 CLI 종료 코드(status)와 사용자 메시지(detail)를 갖는다.
"""
from typing import Any, Optional, Sequence


class MechCondError(Exception):
    status = 1

    def __init__(self, detail: str, status: Optional[int] = None) -> None:
        super().__init__(detail)
        self.detail = detail
        if status is not None:
            self.status = status


class ModelError(MechCondError, ValueError):
    """파라미터/전제조건 위반 (음수 선폭, 빈 subset, 구조 감쇠인데 ω_c=0 등)."""

    status = 2


class FactorizationError(MechCondError):
    """스펙트럼 인수분해 실패. bad_bins 에 문제 bin 인덱스."""

    def __init__(self, detail: str, bad_bins: Sequence[int] = ()) -> None:
        shown = list(bad_bins[:10])
        suffix = f" (bins {shown}{'...' if len(bad_bins) > 10 else ''})" if len(bad_bins) else ""
        super().__init__(detail + suffix)
        self.bad_bins = list(bad_bins)


class QuadratureError(MechCondError):
    """음수 분산 등 격자 설정 오류로 보이는 적분 결과."""


class TraceError(MechCondError, ValueError):
    status = 2


class FitError(MechCondError):
    """수렴 실패. best 에 지금까지의 최선 결과(FitResult)."""

    def __init__(self, detail: str, best: Any = None) -> None:
        super().__init__(detail)
        self.best = best


class CriteriaError(MechCondError, ValueError):
    status = 2
