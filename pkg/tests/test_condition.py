#!/usr/bin/env python3
"""
mechcond.condition 단위 테스트.

시간 영역 필터 적용(인과성, 정렬), 조건부 분산, 닫힌 형태와의 비교, 변환 계수, 상관, 위상공간 출력.
"""
import math
import unittest
from pathlib import Path

import numpy as np

from mechcond.condition import (
    ConditioningReport,
    EstimateTraces,
    apply_filters,
    collective_correlations,
    conditional_spectra,
    conditional_variances,
    conversion_factors,
    covariance_matrix,
    gaussian_purity,
    infer_conditional_from_relative,
    model_report,
    phase_space_points,
    relative_estimate_stats,
    relative_variances,
    thermal_squeezing_ratio,
    thermal_std,
)
from mechcond.config import load_model
from mechcond.errors import ModelError, QuadratureError, TraceError
from mechcond.model import (
    Damping,
    FrequencyGrid,
    MeasurementModel,
    ModeModel,
    NoiseComponent,
    collective_spectra,
    make_grid,
)
from mechcond.specfact import impulse_response
from mechcond.wiener import analytic_viscous_filters, synthesize_filters, viscous_relative_variances

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _viscous_mode(c: float, gamma: float = 0.01, n_th: float = 10.0, omega: float = 1.0) -> ModeModel:
    return ModeModel(omega=omega, gamma=gamma, mu=c * gamma, n_th=n_th, damping=Damping.VISCOUS)


def _wide_grid() -> FrequencyGrid:
    """max|ω| = 64, dω < Γ/16 (Γ = 0.01)."""
    return FrequencyGrid(1 << 18, 128.0 / (1 << 18))


def _traces(q_pred, p_pred, q_retro, p_retro, dt: float = 1.0) -> EstimateTraces:
    """배열 네 개로 전 구간이 유효한 EstimateTraces."""
    arrs = [np.asarray(a, dtype=float) for a in (q_pred, p_pred, q_retro, p_retro)]
    return EstimateTraces(*arrs, dt=dt, valid_range=(0, arrs[0].shape[0]))


class TestApplyFilters(unittest.TestCase):
    """apply_filters 의 인과성, 정렬, 입력 검증."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.meas = MeasurementModel(eta=1.0, signal_modes=(_viscous_mode(1.0, gamma=0.05),))
        cls.grid = make_grid(cls.meas)
        cls.filters = synthesize_filters(cls.meas, (0,), cls.grid)
        cls.n = 4 * cls.grid.n_points

    def test_zero_input(self) -> None:
        tr = apply_filters(self.filters, np.zeros(self.n), self.grid.dt)
        for arr in (tr.q_pred, tr.p_pred, tr.q_retro, tr.p_retro):
            self.assertEqual(float(np.max(np.abs(arr))), 0.0)
        self.assertEqual(tr.valid_range, (self.grid.n_points // 2, self.n - self.grid.n_points // 2))

    def test_prediction_uses_past_only(self) -> None:
        k0 = self.n // 2
        y = np.zeros(self.n)
        y[k0] = 1.0
        tr = apply_filters(self.filters, y, self.grid.dt)
        scale = np.max(np.abs(tr.q_pred))
        self.assertLess(np.max(np.abs(tr.q_pred[:k0])), 1e-9 * scale, "예측이 미래 샘플에 반응")
        self.assertLess(np.max(np.abs(tr.q_retro[k0:])), 1e-9 * np.max(np.abs(tr.q_retro)), "역추정이 현재/과거 샘플에 반응")

    def test_output_aligned_with_taps(self) -> None:
        k0 = self.n // 2
        y = np.zeros(self.n)
        y[k0] = 1.0
        tr = apply_filters(self.filters, y, self.grid.dt)
        _, taps = impulse_response(self.filters.h_q_causal)
        half = self.grid.n_points // 2
        np.testing.assert_allclose(tr.q_pred[k0 : k0 + 100], taps[half : half + 100], atol=1e-12 * np.max(np.abs(taps)))

    def test_rejects_short_trace(self) -> None:
        with self.assertRaises(TraceError):
            apply_filters(self.filters, np.zeros(self.n - 1), self.grid.dt)

    def test_rejects_wrong_sample_period(self) -> None:
        with self.assertRaises(TraceError):
            apply_filters(self.filters, np.zeros(self.n), 1.01 * self.grid.dt)

    def test_rejects_non_finite(self) -> None:
        y = np.zeros(self.n)
        y[3] = np.inf
        with self.assertRaises(TraceError):
            apply_filters(self.filters, y, self.grid.dt)


class TestConditionalVariances(unittest.TestCase):
    """스펙트럼 기반 조건부 분산."""

    def test_zero_filter_gives_thermal_variance(self) -> None:
        meas = MeasurementModel(eta=1.0, signal_modes=(_viscous_mode(0.0, n_th=100.0),))
        grid = make_grid(meas)
        filters = synthesize_filters(meas, (0,), grid)
        spectra = conditional_spectra(meas, filters)
        np.testing.assert_allclose(spectra.s_dq_dq.values, collective_spectra(meas, (0,), grid).s_qq.values)
        v = conditional_variances(spectra)
        self.assertAlmostEqual(v.V_dq_dq / 100.5, 1.0, delta=1e-2)
        self.assertTrue(v.richardson_ok)

    def test_noiseless_limit(self) -> None:
        mode = _viscous_mode(1.0)
        meas = MeasurementModel(eta=1.0, signal_modes=(mode,), noise_components=(NoiseComponent.shot_floor(1e-9),))
        grid = make_grid(meas)
        v = conditional_variances(conditional_spectra(meas, synthesize_filters(meas, (0,), grid)))
        self.assertLess(v.V_dq_dq, 1e-2 * mode.n_tot, "잡음 없는 측정은 위치를 완전히 결정")

    def test_numerical_matches_analytic_filters(self) -> None:
        mode = _viscous_mode(1.0)
        meas = MeasurementModel(eta=1.0, signal_modes=(mode,))
        grid = _wide_grid()
        num = conditional_variances(conditional_spectra(meas, synthesize_filters(meas, (0,), grid)))
        ana = conditional_variances(conditional_spectra(meas, analytic_viscous_filters(mode, 1.0, grid)))
        self.assertAlmostEqual(num.V_dq_dq / ana.V_dq_dq, 1.0, delta=1e-2)
        self.assertAlmostEqual(num.V_dp_dp / ana.V_dp_dp, 1.0, delta=1e-2)

    def test_relative_variances_match_closed_form(self) -> None:
        mode = _viscous_mode(1.0)
        meas = MeasurementModel(eta=1.0, signal_modes=(mode,))
        v_q, v_p, c_qp = relative_variances(meas, synthesize_filters(meas, (0,), _wide_grid()))
        e_q, e_p, _ = viscous_relative_variances(mode, 1.0)
        self.assertAlmostEqual(v_q / e_q, 1.0, delta=2e-2)
        self.assertAlmostEqual(v_p / e_p, 1.0, delta=2e-2)
        self.assertLess(abs(c_qp), 2e-2 * math.sqrt(v_q * v_p))

    def test_bad_direction(self) -> None:
        meas = MeasurementModel(eta=1.0, signal_modes=(_viscous_mode(1.0, gamma=0.05),))
        filters = synthesize_filters(meas, (0,), make_grid(meas))
        with self.assertRaises(ModelError):
            conditional_spectra(meas, filters, direction="sideways")

    def test_covariance_matrix_checks(self) -> None:
        np.testing.assert_array_equal(covariance_matrix(1.0, 2.0, 0.5), [[1.0, 0.5], [0.5, 2.0]])
        with self.assertRaises(QuadratureError):
            covariance_matrix(1.0, 1.0, 2.0)

    def test_gaussian_purity(self) -> None:
        self.assertAlmostEqual(gaussian_purity(0.5, 0.5, 0.0), 1.0)
        self.assertAlmostEqual(gaussian_purity(1.0, 1.0, 0.0), 0.5)
        self.assertTrue(math.isnan(gaussian_purity(1.0, 1.0, 1.0)))


class TestModelReport(unittest.TestCase):
    """model_report 의 내용과 flag."""

    @classmethod
    def setUpClass(cls) -> None:
        cls.mode = _viscous_mode(10.0)
        cls.meas = MeasurementModel(eta=1.0, signal_modes=(cls.mode,))
        cls.wide = model_report(cls.meas, (0,), _wide_grid())

    def test_report_fields(self) -> None:
        r = self.wide
        self.assertIsInstance(r, ConditioningReport)
        self.assertEqual(r.provenance, "analytic")
        self.assertEqual(r.subset, [0])
        self.assertNotIn("richardson", r.flags)
        self.assertNotIn("factorization_residual", r.flags)
        self.assertGreater(r.purity, 0.0)
        self.assertLessEqual(r.purity, 1.0)
        self.assertEqual(set(r.retrodicted), {"V_dq_dq", "V_dp_dp", "C_dq_dp"})
        self.assertEqual(r.grid["n_points"], 1 << 18)

    def test_conversion_factors_small_in_rotating_wave_regime(self) -> None:
        r = self.wide
        self.assertLess(abs(r.F_q), 0.1)
        self.assertLess(abs(r.F_p), 0.1)

    def test_prediction_retrodiction_symmetric(self) -> None:
        """V⃖ = V⃗, C⃖ = −C⃗ 를 반올림 오차 수준에서."""
        r = self.wide
        self.assertLessEqual(r.symmetry_residual, 1e-6)
        self.assertNotIn("symmetry", r.flags)
        self.assertAlmostEqual(r.retrodicted["V_dq_dq"] / r.V_dq_dq, 1.0, places=9)
        self.assertAlmostEqual(r.retrodicted["V_dp_dp"] / r.V_dp_dp, 1.0, places=9)
        self.assertLessEqual(abs(r.retrodicted["C_dq_dp"] + r.C_dq_dp), 1e-9 * max(r.V_dq_dq, r.V_dp_dp))

    def test_bundled_configs_symmetric(self) -> None:
        for name, subset in (("viscous_single.json", (0,)), ("device_two_mode.json", (0, 1))):
            with self.subTest(config=name):
                meas = load_model(CONFIGS / name)
                r = model_report(meas, subset, make_grid(meas))
                self.assertLessEqual(r.symmetry_residual, 1e-6)
                self.assertNotIn("symmetry", r.flags)

    def test_discrete_projection_flags_asymmetry(self) -> None:
        with self.assertLogs("mechcond.condition", level="WARNING"):
            r = model_report(self.meas, (0,), make_grid(self.meas), projection="discrete")
        self.assertIn("symmetry", r.flags)
        self.assertGreater(r.symmetry_residual, 1e-6)

    def test_squeezing_ratios(self) -> None:
        cond, rel = thermal_squeezing_ratio(self.wide)
        self.assertAlmostEqual(cond, self.wide.V_dp_dp / self.wide.V_dq_dq)
        self.assertAlmostEqual(rel, self.wide.V_Dp_Dp / self.wide.V_Dq_Dq)

    def test_more_strongly_measured_mode_lowers_variance(self) -> None:
        weak = _viscous_mode(1.0, gamma=0.05)
        strong = _viscous_mode(20.0, gamma=0.05, omega=1.3)
        meas = MeasurementModel(eta=1.0, signal_modes=(weak, strong))
        grid = make_grid(meas)
        one = model_report(meas, (0,), grid)
        both = model_report(meas, (0, 1), grid)
        self.assertLess(both.V_dq_dq, one.V_dq_dq)


class TestNineModeCollective(unittest.TestCase):
    """같은 진동수의 동일한 모드 9개: Y 는 9-모드 집단 좌표만 본다."""

    @classmethod
    def setUpClass(cls) -> None:
        mode = _viscous_mode(2.0, gamma=0.05, n_th=100.0)
        cls.meas = MeasurementModel(eta=0.5, signal_modes=(mode,) * 9)
        cls.grid = make_grid(cls.meas)
        cls.n_tot = mode.n_tot

    def _v_dq(self, n: int) -> float:
        filters = synthesize_filters(self.meas, tuple(range(n)), self.grid)
        return conditional_variances(conditional_spectra(self.meas, filters)).V_dq_dq

    def test_variance_decreases_with_subset(self) -> None:
        v = [self._v_dq(n) for n in range(1, 10)]
        for n in range(1, 9):
            self.assertLess(v[n], v[n - 1], f"N={n + 1}")
        # 측정되지 않는 직교 성분: V_N = n_tot − (N/9)(n_tot − V_9)
        gain = self.n_tot - v[8]
        self.assertGreater(gain, 0.0)
        for n in (1, 4):
            self.assertAlmostEqual(v[n - 1] / (self.n_tot - n / 9 * gain), 1.0, delta=1e-2)

    def test_disjoint_collectives_fully_correlated(self) -> None:
        a = synthesize_filters(self.meas, (0, 1), self.grid)
        b = synthesize_filters(self.meas, (2, 3, 4), self.grid)
        y = np.random.default_rng(5).standard_normal(4 * self.grid.n_points)
        rho_q, rho_p = collective_correlations(
            apply_filters(a, y, self.grid.dt), apply_filters(b, y, self.grid.dt)
        )
        self.assertAlmostEqual(rho_q, 1.0, places=9)
        self.assertAlmostEqual(rho_p, 1.0, places=9)



class TestRelativeEstimates(unittest.TestCase):
    """상대 추정 통계와 변환 계수."""

    def test_identical_pred_retro(self) -> None:
        rng = np.random.default_rng(0)
        q, p = rng.standard_normal(1000), rng.standard_normal(1000)
        self.assertEqual(relative_estimate_stats(_traces(q, p, q, p)), (0.0, 0.0, 0.0))

    def test_sample_covariance(self) -> None:
        rng = np.random.default_rng(1)
        n = 200_000
        dq, dp = 2.0 * rng.standard_normal(n), rng.standard_normal(n)
        zeros = np.zeros(n)
        v_q, v_p, c = relative_estimate_stats(_traces(dq, dp, zeros, zeros))
        self.assertAlmostEqual(v_q, 4.0, delta=0.05)
        self.assertAlmostEqual(v_p, 1.0, delta=0.02)
        self.assertLess(abs(c), 3 * 2.0 / math.sqrt(n))

    def test_empty_valid_range(self) -> None:
        z = np.zeros(10)
        with self.assertRaises(TraceError):
            relative_estimate_stats(EstimateTraces(z, z, z, z, dt=1.0, valid_range=(5, 5)))

    def test_conversion_factor_definition(self) -> None:
        f_q, f_p = conversion_factors((1.0, 3.0), (1.0, 1.0))
        self.assertAlmostEqual(f_q, 0.5)
        self.assertAlmostEqual(f_p, -0.5)
        with self.assertRaises(ModelError):
            conversion_factors((1.0, 1.0), (0.0, 1.0))

    def test_infer_table_rows(self) -> None:
        self.assertAlmostEqual(infer_conditional_from_relative(2 * 1.8e5, 0.26) / 2.43e5, 1.0, delta=5e-3)
        self.assertAlmostEqual(infer_conditional_from_relative(2 * 6.6e4, 0.24) / 8.7e4, 1.0, delta=5e-3)
        self.assertAlmostEqual(infer_conditional_from_relative(3.0, 0.0), 1.5)
        with self.assertRaises(ModelError):
            infer_conditional_from_relative(1.0, 1.0)

    def test_closure(self) -> None:
        v_rel, v_cond = (3.7, 2.2), (2.5, 1.4)
        f_q, f_p = conversion_factors(v_rel, v_cond)
        self.assertAlmostEqual(infer_conditional_from_relative(v_rel[0], f_q), v_cond[0], places=12)
        self.assertAlmostEqual(infer_conditional_from_relative(v_rel[1], f_p), v_cond[1], places=12)


class TestCorrelations(unittest.TestCase):
    """두 집단 모드 상대 추정 간 상관."""

    def test_identical_traces(self) -> None:
        rng = np.random.default_rng(2)
        a = _traces(*(rng.standard_normal(5000) for _ in range(4)))
        rho_q, rho_p = collective_correlations(a, a)
        self.assertAlmostEqual(rho_q, 1.0, places=12)
        self.assertAlmostEqual(rho_p, 1.0, places=12)

    def test_independent_traces(self) -> None:
        rng = np.random.default_rng(3)
        n = 100_000
        a = _traces(*(rng.standard_normal(n) for _ in range(4)))
        b = _traces(*(rng.standard_normal(n) for _ in range(4)))
        for rho in collective_correlations(a, b):
            self.assertLess(abs(rho), 3 / math.sqrt(n))

    def test_zero_variance_rejected(self) -> None:
        z = np.zeros(100)
        rng = np.random.default_rng(4)
        a = _traces(z, z, z, z)
        b = _traces(*(rng.standard_normal(100) for _ in range(4)))
        with self.assertRaises(ModelError):
            collective_correlations(a, b)

    def test_time_base_mismatch(self) -> None:
        a = _traces(*(np.arange(100.0) for _ in range(4)))
        b = _traces(*(np.arange(100.0) for _ in range(4)), dt=2.0)
        with self.assertRaises(TraceError):
            collective_correlations(a, b)


class TestPhaseSpace(unittest.TestCase):
    def test_thermal_std(self) -> None:
        meas = MeasurementModel(eta=1.0, signal_modes=(_viscous_mode(0.0, n_th=100.0),))
        q_th, p_th = thermal_std(meas, (0,), make_grid(meas))
        self.assertAlmostEqual(q_th / math.sqrt(100.5), 1.0, delta=1e-2)
        self.assertAlmostEqual(p_th / math.sqrt(100.5), 1.0, delta=1e-2)

    def test_points_normalized(self) -> None:
        q = np.arange(10.0)
        tr = EstimateTraces(q, 2 * q, q / 2, q, dt=1.0, valid_range=(2, 8))
        pts = phase_space_points(tr, 2.0, 4.0)
        self.assertEqual(set(pts), {"prediction", "retrodiction", "relative"})
        self.assertEqual(pts["prediction"].shape, (6, 2))
        np.testing.assert_allclose(pts["prediction"][0], [1.0, 1.0])
        np.testing.assert_allclose(pts["relative"][0], [0.5, 0.5])


if __name__ == "__main__":
    unittest.main()
