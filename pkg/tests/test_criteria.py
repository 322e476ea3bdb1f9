#!/usr/bin/env python3
"""
mechcond.criteria 단위 테스트.

닫힌 형태 판정식의 산술, 경계값(엄격 부등식), 자기무모순 임계값, 광자 수 사슬.
"""
import math
import unittest

from pydantic import ValidationError

from mechcond.criteria import (
    RegimeInput,
    asymptotic_collective_variance,
    entanglement_condition,
    evaluate_all,
    ground_state_condition,
    photon_cooperativity,
    photons_for_squeezing,
    purity,
    quantum_squeezing_threshold,
    rwa_breakdown,
    structural_relaxation_factor,
    structural_squeezing_cooperativity,
    thermal_squeezing_S,
    viscous_squeezing_cooperativity,
    viscous_squeezing_threshold,
)
from mechcond.errors import CriteriaError
from mechcond.model import Damping, thermal_occupancy

TWO_PI = 2 * math.pi


def _device(**changes) -> RegimeInput:
    """측정 장치 단일 모드 값 (C≈1.07, Q≈354, n_th≈2.5e7, η=0.3)."""
    values = dict(C=1.07, Q=354.0, n_th=2.5e7, eta=0.3, N=1, damping=Damping.STRUCTURAL)
    values.update(changes)
    return RegimeInput(**values)


class TestRegimeInput(unittest.TestCase):
    def test_validation(self) -> None:
        with self.assertRaises(ValidationError):
            _device(eta=0.0)
        with self.assertRaises(ValidationError):
            _device(N=0)
        with self.assertRaises(ValidationError):
            RegimeInput(C=1.0, Q=1.0, n_th=1.0, eta=1.0, extra=1)

    def test_n_tot_recomputed(self) -> None:
        self.assertEqual(_device(C=2.0, N=3, n_th=10.0).n_tot, 16.5)


class TestThermalSqueezing(unittest.TestCase):
    """S = 16 μ n_tot Γ/Ω²."""

    def test_device_mode(self) -> None:
        omega = TWO_PI * 244e3
        s, flag = thermal_squeezing_S(TWO_PI * 740, thermal_occupancy(omega), TWO_PI * 690, omega)
        self.assertAlmostEqual(s / 3.5e3, 1.0, delta=0.03)
        self.assertTrue(flag)

    def test_no_measurement(self) -> None:
        self.assertEqual(thermal_squeezing_S(0.0, 100.0, 1.0, 1.0), (0.0, False))

    def test_boundary_is_strict(self) -> None:
        s, flag = thermal_squeezing_S(1.0, 1.0, 0.0625, 1.0)
        self.assertEqual(s, 1.0)
        self.assertFalse(flag)

    def test_rejects_bad_input(self) -> None:
        with self.assertRaises(CriteriaError):
            thermal_squeezing_S(-1.0, 1.0, 1.0, 1.0)
        with self.assertRaises(CriteriaError):
            thermal_squeezing_S(1.0, 1.0, 1.0, 0.0)


class TestRegimePredicates(unittest.TestCase):
    """RWA 붕괴, 바닥상태, 얽힘."""

    def test_rwa_breakdown(self) -> None:
        self.assertTrue(rwa_breakdown(_device()))
        self.assertFalse(rwa_breakdown(_device(C=0.0)))
        inp = RegimeInput(C=1.0, Q=2.0, n_th=1.0, eta=1.0)
        # Q²/(Nη n_tot) = 4/2.5 = 1.6
        self.assertFalse(rwa_breakdown(inp))
        self.assertTrue(rwa_breakdown(inp.model_copy(update={"C": 1.7})))

    def test_ground_state(self) -> None:
        self.assertFalse(ground_state_condition(RegimeInput(C=10.0, Q=100.0, n_th=10.0, eta=1.0)))
        self.assertTrue(ground_state_condition(RegimeInput(C=10.0, Q=100.0, n_th=10.0, eta=1.0, N=2)))
        self.assertFalse(ground_state_condition(_device()))

    def test_entanglement(self) -> None:
        base = dict(Q=100.0, n_th=10.0, eta=1.0, N=2)
        self.assertFalse(entanglement_condition(RegimeInput(C=2500.0, **base)))
        self.assertTrue(entanglement_condition(RegimeInput(C=2500.1, **base)))
        with self.assertRaises(CriteriaError):
            entanglement_condition(RegimeInput(C=1.0, Q=100.0, n_th=10.0, eta=1.0, N=3))


class TestVariancesAndPurity(unittest.TestCase):
    def test_asymptotic_variance_scaling(self) -> None:
        one = asymptotic_collective_variance(RegimeInput(C=1.0, Q=100.0, n_th=1e6, eta=1.0))
        two = asymptotic_collective_variance(RegimeInput(C=1.0, Q=100.0, n_th=1e6, eta=1.0, N=2))
        self.assertAlmostEqual(one / two, 2 ** 0.75, places=5)
        expected = (100.0 ** 2 * (1e6 + 1.5) / 64.0) ** 0.25
        self.assertAlmostEqual(one / expected, 1.0, places=12)
        with self.assertRaises(CriteriaError):
            asymptotic_collective_variance(RegimeInput(C=0.0, Q=100.0, n_th=1.0, eta=1.0))

    def test_purity_limits(self) -> None:
        self.assertEqual(purity(RegimeInput(C=0.0, Q=10.0, n_th=5.0, eta=1.0)), 0.0)
        saturated = purity(RegimeInput(C=1e9, Q=10.0, n_th=0.0, eta=0.25))
        self.assertAlmostEqual(saturated, 0.5, places=6)


class TestSqueezingThresholds(unittest.TestCase):
    """양자 squeezing 임계 협력도."""

    def test_structural_arithmetic(self) -> None:
        self.assertAlmostEqual(structural_squeezing_cooperativity(1e6, 1e4) / 10 ** 4.5, 1.0, places=12)
        self.assertAlmostEqual(structural_squeezing_cooperativity(1e6, 1e4, n_modes=10), 10 ** 3.5, delta=1e-6)

    def test_self_consistent_structural(self) -> None:
        inp = _device()
        c_req, satisfied = quantum_squeezing_threshold(inp)
        again = structural_squeezing_cooperativity(inp.n_th + c_req + 0.5, inp.Q, 1)
        self.assertAlmostEqual(c_req / again, 1.0, places=9)
        self.assertFalse(satisfied)

    def test_structural_threshold_ignores_efficiency(self) -> None:
        """구조 감쇠 임계값은 η 와 무관하다."""
        lossy, _ = quantum_squeezing_threshold(_device(eta=0.3))
        ideal, _ = quantum_squeezing_threshold(_device(eta=1.0))
        self.assertEqual(lossy, ideal)

    def test_self_consistent_viscous(self) -> None:
        inp = RegimeInput(C=1.0, Q=1e4, n_th=1e3, eta=1.0)
        c_req, satisfied = viscous_squeezing_threshold(inp)
        again = viscous_squeezing_cooperativity(inp.n_th + c_req + 0.5, inp.Q)
        self.assertAlmostEqual(c_req / again, 1.0, places=9)
        self.assertFalse(satisfied)
        self.assertEqual(quantum_squeezing_threshold(inp), (c_req, satisfied))

    def test_more_modes_lower_threshold(self) -> None:
        one, _ = quantum_squeezing_threshold(_device())
        ten, _ = quantum_squeezing_threshold(_device(N=10))
        self.assertLess(ten, one / 5)

    def test_relaxation_factor(self) -> None:
        self.assertEqual(structural_relaxation_factor(5.0, 5.0), 1.0)
        self.assertAlmostEqual(structural_relaxation_factor(2 ** 12, 1.0), 2.0)
        with self.assertRaises(CriteriaError):
            structural_relaxation_factor(1.0, 0.0)


class TestPhotonBudget(unittest.TestCase):
    """광자 수 → 협력도 사슬 (3 MHz, Q = 3e4, 상온, η = 0.5)."""

    G0 = TWO_PI * 1.2e6
    KAPPA = TWO_PI * 50e6
    GAMMA = TWO_PI * 100.0
    OMEGA = TWO_PI * 3e6

    def test_chain(self) -> None:
        chain = photon_cooperativity(self.G0, 160.0, self.KAPPA, self.GAMMA)
        self.assertAlmostEqual(chain.g, self.G0 * math.sqrt(160.0))
        self.assertAlmostEqual(chain.mu, 4 * chain.g ** 2 / self.KAPPA)
        # 4g₀²/(κΓ) = 1152 per photon
        self.assertAlmostEqual(chain.C / 184320.0, 1.0, places=9)
        with self.assertRaises(CriteriaError):
            photon_cooperativity(0.0, 1.0, 1.0, 1.0)
        with self.assertRaises(CriteriaError):
            photon_cooperativity(1.0, -1.0, 1.0, 1.0)

    def test_photons_for_squeezing(self) -> None:
        n_th = thermal_occupancy(self.OMEGA)
        n_cav, chain = photons_for_squeezing(self.G0, self.KAPPA, self.GAMMA, self.OMEGA, n_th, 0.5)
        self.assertGreater(n_cav, 140.0)
        self.assertLess(n_cav, 160.0, "160 광자면 충분")
        self.assertAlmostEqual(chain.n_cav, n_cav)

    def test_zipper_config_satisfied(self) -> None:
        inp = RegimeInput(C=184320.0, Q=3e4, n_th=2.0494e6, eta=0.5, damping=Damping.STRUCTURAL)
        c_req, satisfied = quantum_squeezing_threshold(inp)
        self.assertAlmostEqual(c_req / 8.715e4, 1.0, delta=0.01)
        self.assertTrue(satisfied)


class TestEvaluateAll(unittest.TestCase):
    def test_block(self) -> None:
        out = evaluate_all(_device())
        self.assertIsNone(out["entanglement"])
        self.assertTrue(out["rwa_breakdown"])
        self.assertFalse(out["ground_state"]["satisfied"])
        self.assertEqual(out["input"]["damping"], "structural")
        self.assertIn("structural_relaxation_factor", out)

    def test_even_modes_report_entanglement(self) -> None:
        out = evaluate_all(_device(N=2))
        self.assertFalse(out["entanglement"]["satisfied"])

    def test_zero_cooperativity(self) -> None:
        self.assertIsNone(evaluate_all(_device(C=0.0))["asymptotic_collective_variance"])


if __name__ == "__main__":
    unittest.main()
