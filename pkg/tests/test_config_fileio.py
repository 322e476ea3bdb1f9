#!/usr/bin/env python3
"""
mechcond.config / mechcond.fileio 단위 테스트.

설정 JSON 의 Hz ↔ rad/s 변환과 바이트 안정성, 바이너리 컨테이너, 필터 파일, manifest.
"""
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from mechcond.config import (
    dumps_config,
    from_measurement_model,
    load_config,
    load_model,
    parse_config,
    to_measurement_model,
)
from mechcond.errors import ModelError, TraceError
from mechcond.fileio import (
    MANIFEST_NAME,
    TRACE_MAGIC,
    read_bundle_binary,
    read_container,
    read_filters_binary,
    read_spectrum_csv,
    write_bundle_binary,
    write_container,
    write_filters_binary,
    write_manifest,
    write_spectrum_csv,
)
from mechcond.model import Damping, FrequencyGrid, MeasurementModel, ModeModel, NoiseKind, SampledSpectrum, make_grid
from mechcond.wiener import synthesize_filters

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestModelConfig(unittest.TestCase):
    """설정 스키마."""

    def test_bundled_configs_load(self) -> None:
        for name in ("device_two_mode.json", "device_nine_mode.json", "viscous_single.json"):
            with self.subTest(config=name):
                meas = load_model(CONFIGS / name)
                self.assertGreaterEqual(len(meas.signal_modes), 1)

    def test_units_converted(self) -> None:
        meas = load_model(CONFIGS / "device_two_mode.json")
        m = meas.signal_modes[0]
        self.assertAlmostEqual(m.omega, 2 * math.pi * 244e3)
        self.assertAlmostEqual(m.gamma, 2 * math.pi * 690)
        self.assertAlmostEqual(m.omega_c, 2 * math.pi * 1e4)
        self.assertIs(m.damping, Damping.STRUCTURAL)
        # n_th 는 295 K 에서 계산
        self.assertAlmostEqual(m.n_th / 2.52e7, 1.0, delta=1e-2)

    def test_export_is_byte_stable(self) -> None:
        for name in ("device_two_mode.json", "device_nine_mode.json", "viscous_single.json"):
            with self.subTest(config=name):
                cfg = load_config(CONFIGS / name)
                first = dumps_config(from_measurement_model(to_measurement_model(cfg), cfg.kappa_hz, cfg.metadata))
                again = parse_config(first)
                second = dumps_config(from_measurement_model(to_measurement_model(again), again.kappa_hz, again.metadata))
                self.assertEqual(first, second)

    def test_invalid_configs(self) -> None:
        with self.assertRaises(ModelError):
            parse_config('{"eta": 1.5, "modes": [{"f_hz": 1.0, "gamma_hz": 0.1}]}')
        with self.assertRaises(ModelError):
            parse_config('{"eta": 1.0, "modes": []}')
        with self.assertRaises(ModelError):
            parse_config('{"eta": 1.0, "modes": [{"f_hz": 1.0, "gamma_hz": 0.1}], "noise": [{"kind": "lorentzian_peak"}]}')
        with self.assertRaises(ModelError):
            parse_config('{"eta": 1.0, "modes": [{"f_hz": 1.0, "gamma_hz": 0.1, "colour": "red"}]}')
        with self.assertRaises(ModelError):
            load_config(CONFIGS / "missing.json")

    def test_default_noise_is_shot_floor(self) -> None:
        meas = to_measurement_model(parse_config('{"eta": 1.0, "modes": [{"f_hz": 1.0, "gamma_hz": 0.1, "n_th": 1.0}]}'))
        self.assertEqual([c.kind for c in meas.noise_components], [NoiseKind.SHOT_FLOOR])
        self.assertEqual(meas.noise_components[0].level, 0.5)


class TestContainers(unittest.TestCase):
    """바이너리 컨테이너와 CSV."""

    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_container(self) -> None:
        path = self.dir / "x.bin"
        data = np.linspace(-1.0, 1.0, 11)
        write_container(path, TRACE_MAGIC, {"dt": 0.5}, data)
        header, back = read_container(path, TRACE_MAGIC)
        self.assertEqual(header, {"dt": 0.5})
        np.testing.assert_array_equal(back, data)

    def test_wrong_magic(self) -> None:
        path = self.dir / "x.bin"
        path.write_bytes(b"NOT_A_TRACE_FILE" + b"\x00" * 8)
        with self.assertRaises(TraceError):
            read_container(path, TRACE_MAGIC)

    def test_ragged_data(self) -> None:
        path = self.dir / "x.bin"
        write_container(path, TRACE_MAGIC, {}, np.zeros(2))
        path.write_bytes(path.read_bytes() + b"\x01")
        with self.assertRaises(TraceError):
            read_container(path, TRACE_MAGIC)

    def test_bundle_columns(self) -> None:
        path = self.dir / "b.bin"
        cols = {"y": np.arange(5.0), "q_1": -np.arange(5.0)}
        write_bundle_binary(path, cols, {"seed": 3})
        header, back = read_bundle_binary(path)
        self.assertEqual(header["columns"], ["y", "q_1"])
        self.assertEqual(header["seed"], 3)
        np.testing.assert_array_equal(back["q_1"], cols["q_1"])
        with self.assertRaises(TraceError):
            write_bundle_binary(path, {"y": np.zeros(3), "q": np.zeros(4)}, {})

    def test_spectrum_csv(self) -> None:
        grid = FrequencyGrid(1024, 0.01)
        s = SampledSpectrum(grid, 1.0 / (1.0 + grid.omega ** 2))
        path = self.dir / "s.csv"
        write_spectrum_csv(path, s)
        back = read_spectrum_csv(path)
        self.assertEqual(back.grid.n_points, 1024)
        np.testing.assert_array_equal(back.values, s.values)

    def test_filters_binary(self) -> None:
        mode = ModeModel(omega=1.0, gamma=0.05, mu=0.05, n_th=10.0, damping=Damping.VISCOUS)
        meas = MeasurementModel(eta=1.0, signal_modes=(mode,))
        filters = synthesize_filters(meas, (0,), make_grid(meas))
        path = self.dir / "f.bin"
        write_filters_binary(path, filters)
        back = read_filters_binary(path)
        self.assertEqual(back.subset, (0,))
        self.assertEqual(back.meta["model"], filters.meta["model"])
        np.testing.assert_array_equal(back.h_p_anticausal.values, filters.h_p_anticausal.values)


class TestManifest(unittest.TestCase):
    def test_hashes_outputs(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp)
            (out / "report.json").write_text("{}\n", encoding="utf-8")
            first = write_manifest(out, "condition", {"subset": [1]}, config=CONFIGS / "viscous_single.json", seeds=[7])
            self.assertEqual(set(first.outputs), {"report.json"})
            self.assertEqual(first.seeds, [7])
            text = (out / MANIFEST_NAME).read_text(encoding="utf-8")
            write_manifest(out, "condition", {"subset": [1]}, config=CONFIGS / "viscous_single.json", seeds=[7])
            self.assertEqual((out / MANIFEST_NAME).read_text(encoding="utf-8"), text)


if __name__ == "__main__":
    unittest.main()
