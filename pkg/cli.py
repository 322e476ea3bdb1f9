#!/usr/bin/env python3
"""
mechcond 명령행 도구. 시뮬레이션 → 필터 합성 → 조건화 → 리포트, 그리고 스윕/피팅/인수분해/판정식.
출력은 CSV/JSON 뿐이고, 출력 디렉터리마다 manifest.json 하나를 남긴다.

사용:
  python cli.py simulate  --config configs/viscous_single.json --out out/sim --seed 7
  python cli.py condition --config configs/viscous_single.json --trace out/sim/trace.bin --subset 1 --out out/cond
  python cli.py sweep     --config configs/viscous_single.json --c-range 1:1e4:9 --n-range 10:1e6:3 --out out/sweep
  python cli.py fit       --config configs/device_two_mode.json --trace out/sim/trace.bin --out out/fit
  python cli.py factorize --config configs/device_two_mode.json --out out/fact
  python cli.py criteria  --regime configs/regime_zipper.json

환경변수 (.env 가능):
  MECHCOND_THREADS, MECHCOND_GRID_POINTS, MECHCOND_MAX_GRID_POINTS, MECHCOND_LOG_LEVEL, MECHCOND_TEMPERATURE_K, MECHCOND_RICHARDSON_TOL, MECHCOND_SYMMETRY_TOL
"""
from pathlib import Path
from dotenv import load_dotenv

# 프로젝트 루트 .env 로드 (mechcond 모듈이 import 시점에 환경변수를 읽으므로 먼저)
_env_path = Path(__file__).resolve().parent / ".env"
load_dotenv(_env_path)

import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from mechcond.errors import MechCondError, ModelError

LOG_LEVEL = os.environ.get("MECHCOND_LOG_LEVEL", "INFO").upper()
# 이 플래그가 리포트에 있으면 산출물은 쓰되 종료 코드 1
FAILING_FLAGS = {"richardson", "factorization_residual", "symmetry"}

_logger = logging.getLogger("mechcond.cli")


def parse_subset(text: str) -> Tuple[int, ...]:
    """'1,2,5' (1부터) → (0, 1, 4)."""
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ModelError("--subset is empty")
    try:
        idx = tuple(int(s) - 1 for s in items)
    except ValueError:
        raise ModelError(f"--subset must be comma-separated mode numbers, got {text!r}")
    if any(i < 0 for i in idx):
        raise ModelError("--subset mode numbers start at 1")
    return idx


def parse_range(text: str) -> np.ndarray:
    """'lo:hi:n' → 로그 간격 n 점. 'a,b,c' 는 그대로."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.geomspace(float(lo), float(hi), int(n))
        return np.array([float(s) for s in text.split(",") if s.strip()])
    except ValueError:
        raise ModelError(f"bad range {text!r}: expected lo:hi:n or comma-separated values")


def parse_mask(text: Optional[str]) -> List[Tuple[float, float]]:
    """'lo:hi,lo:hi' (Hz) → rad/s 범위 목록."""
    if not text:
        return []
    out = []
    for part in text.split(","):
        try:
            lo, hi = (float(x) for x in part.split(":"))
        except ValueError:
            raise ModelError(f"bad mask range {part!r}: expected lo_hz:hi_hz")
        out.append((2 * math.pi * lo, 2 * math.pi * hi))
    return out


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _args_dict(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


# --- subcommands ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    from mechcond.config import load_model
    from mechcond.fileio import TRACE_MAGIC, write_bundle_binary, write_bundle_csv, write_container, write_manifest
    from mechcond.model import BAND_MARGIN
    from mechcond.simulate import SimulationSpec, synthesize

    meas = load_model(args.config)
    dt = args.dt or math.pi / (BAND_MARGIN * max(m.omega for m in meas.signal_modes))
    duration = args.duration or 1e3 / min(m.gamma for m in meas.signal_modes)
    spec = SimulationSpec(meas, duration, dt, args.seed, args.backaction)
    bundle = synthesize(spec, args.trial)
    out = _out_dir(args.out)
    header = {
        "dt": dt,
        "seed": args.seed,
        "trial": args.trial,
        "duration": duration,
        "spec_hash": bundle.spec_hash,
        "backaction_mode": spec.backaction_mode.value,
        "model": meas.fingerprint(),
    }
    write_bundle_binary(out / "bundle.bin", bundle.columns(), header)
    write_container(out / "trace.bin", TRACE_MAGIC, {"dt": dt, "calibration": 1.0, "units": "normalized", "channel": "Y"}, bundle.y)
    if args.csv:
        write_bundle_csv(out / "bundle.csv", bundle.columns(), dt)
    write_manifest(out, "simulate", _args_dict(args), inputs=[args.config], config=args.config, seeds=[args.seed])
    print(f"simulated {bundle.y.shape[0]} samples (dt={dt:.6g} s) -> {out}")
    return 0


def cmd_condition(args: argparse.Namespace) -> int:
    from mechcond.condition import (
        ConditioningReport,
        apply_filters,
        gaussian_purity,
        infer_conditional_from_relative,
        model_report,
        phase_space_points,
        relative_estimate_stats,
        thermal_std,
    )
    from mechcond.config import load_model
    from mechcond.fileio import write_filters_binary, write_filters_csv, write_json, write_manifest, write_phase_space_csv
    from mechcond.ingest import load_trace
    from mechcond.model import sampling_grid
    from mechcond.simulate import SimulationSpec, monte_carlo_report
    from mechcond.wiener import synthesize_filters

    meas = load_model(args.config)
    subset = meas.check_subset(parse_subset(args.subset))
    trace = load_trace(args.trace)
    grid = sampling_grid(meas, trace.dt, args.grid_points)
    filters = synthesize_filters(meas, subset, grid)
    traces = apply_filters(filters, trace.y, trace.dt)
    rel_q, rel_p, rel_qp = relative_estimate_stats(traces)

    # 변환 계수는 모델(또는 시뮬레이션)에서만 얻는다
    if args.trials:
        if args.seed is None:
            raise ModelError("--trials needs --seed")
        spec = SimulationSpec(meas, args.duration or trace.samples.shape[0] * trace.dt, trace.dt, args.seed)
        reference = monte_carlo_report(spec, subset, args.trials, grid.n_points)
    else:
        reference = model_report(meas, subset, grid)
    f_q, f_p = reference.F_q, reference.F_p
    v_q = infer_conditional_from_relative(rel_q, f_q)
    v_p = infer_conditional_from_relative(rel_p, f_p)
    # 공분산도 같은 비율로: C_δ = C_Δ · (C_δ/C_Δ)_model
    c_qp = rel_qp * reference.C_dq_dp / reference.C_Dq_Dp if reference.C_Dq_Dp else rel_qp / 2.0
    report = ConditioningReport(
        V_dq_dq=v_q,
        V_dp_dp=v_p,
        C_dq_dp=c_qp,
        V_Dq_Dq=rel_q,
        V_Dp_Dp=rel_p,
        C_Dq_Dp=rel_qp,
        F_q=f_q,
        F_p=f_p,
        purity=gaussian_purity(v_q, v_p, c_qp),
        squeezing_ratio=v_p / v_q if v_q > 0 else None,
        relative_squeezing_ratio=rel_p / rel_q if rel_q > 0 else None,
        subset=list(subset),
        provenance="inferred-from-data",
        flags=list(reference.flags),
        grid={"n_points": grid.n_points, "d_omega": grid.d_omega},
        seed=args.seed if args.trials else None,
        trials=args.trials or None,
    )

    out = _out_dir(args.out)
    write_json(out / "report.json", report)
    write_json(out / "reference_report.json", reference)
    q_th, p_th = thermal_std(meas, subset, grid)
    write_phase_space_csv(out / "phase_space.csv", phase_space_points(traces, q_th, p_th))
    write_filters_csv(out / "filters.csv", filters)
    write_filters_binary(out / "filters.bin", filters)
    write_manifest(
        out,
        "condition",
        _args_dict(args),
        inputs=[args.config, args.trace],
        config=args.config,
        seeds=[args.seed] if args.trials else [],
        flags=report.flags,
    )
    print(json.dumps(report.model_dump(mode="json"), indent=2))
    return 1 if FAILING_FLAGS & set(report.flags) else 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from mechcond.config import load_model
    from mechcond.criteria import RegimeInput, quantum_squeezing_threshold
    from mechcond.fileio import write_manifest, write_table_csv
    from mechcond.simulate import sweep_regimes

    meas = load_model(args.config)
    base = meas.signal_modes[0]
    eta = args.eta or meas.eta
    c_grid = parse_range(args.c_range)
    n_grid = parse_range(args.n_range)
    table = sweep_regimes(base, c_grid, n_grid, args.N, eta, args.bins_per_width)
    rows = []
    for (c, n_th), v in table.items():
        inp = RegimeInput(C=c, Q=base.Q, n_th=n_th, eta=eta, N=args.N, damping=base.damping)
        _, predicted = quantum_squeezing_threshold(inp)
        rows.append([c, n_th, v, int(v < 0.5), int(predicted)])
    out = _out_dir(args.out)
    write_table_csv(out / "sweep.csv", ["C", "n_th", "V_dq_dq", "squeezed", "predicted_squeezed"], rows)
    write_manifest(out, "sweep", _args_dict(args), inputs=[args.config], config=args.config)
    print(f"swept {len(rows)} cells -> {out / 'sweep.csv'}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    from mechcond.config import load_model
    from mechcond.errors import FitError
    from mechcond.fileio import write_json, write_manifest, write_spectrum_csv
    from mechcond.ingest import compare_damping_fits, fit_psd, load_trace, model_export, welch_psd

    template = load_model(args.config)
    trace = load_trace(args.trace)
    psd = welch_psd(trace, args.segment_length, args.overlap)
    mask = parse_mask(args.mask)
    out = _out_dir(args.out)
    write_spectrum_csv(out / "psd.csv", psd)
    status = 0
    try:
        if args.compare_damping:
            fits = compare_damping_fits(psd, template, mask)
            summary = {d.value: {"residual": f.residual, "params": f.params, "stderr": f.stderr} for d, f in fits.items()}
            write_json(out / "damping_comparison.json", summary)
            fit = min(fits.values(), key=lambda f: f.residual)
        else:
            fit = fit_psd(psd, template, mask)
    except FitError as e:
        print(e.detail, file=sys.stderr)
        if e.best is None:
            raise
        fit, status = e.best, e.status
    model_export(fit, out / "fit_model.json")
    write_json(
        out / "fit.json",
        {"params": fit.params, "stderr": fit.stderr, "residual": fit.residual, "converged": fit.converged, "nfev": fit.nfev, "diagnostics": fit.diagnostics},
    )
    write_manifest(out, "fit", _args_dict(args), inputs=[args.config, args.trace], config=args.config)
    print(f"fit residual {fit.residual:.4g} (converged={fit.converged}) -> {out}")
    return status


def cmd_factorize(args: argparse.Namespace) -> int:
    from mechcond.config import load_model
    from mechcond.fileio import read_spectrum_csv, write_json, write_manifest, write_spectrum_csv
    from mechcond.model import make_grid, photocurrent_psd
    from mechcond.specfact import RESIDUAL_TOL, spectral_factorize

    if args.psd:
        s = read_spectrum_csv(args.psd)
        inputs = [args.psd]
    elif args.config:
        meas = load_model(args.config)
        s = photocurrent_psd(meas, make_grid(meas, args.grid_points))
        inputs = [args.config]
    else:
        raise ModelError("factorize needs --config or --psd")
    factor = spectral_factorize(s)
    out = _out_dir(args.out)
    write_spectrum_csv(out / "source.csv", s)
    write_spectrum_csv(out / "factor.csv", factor.m)
    write_json(out / "factor.json", {"residual": factor.residual, "anticausal_fraction": factor.anticausal_fraction, "n_points": s.grid.n_points})
    flags = ["factorization_residual"] if factor.residual > RESIDUAL_TOL else []
    write_manifest(out, "factorize", _args_dict(args), inputs=inputs, config=args.config, flags=flags)
    print(f"factorization residual {factor.residual:.3g} -> {out}")
    return 1 if flags else 0


def cmd_criteria(args: argparse.Namespace) -> int:
    from pydantic import ValidationError

    from mechcond.criteria import RegimeInput, evaluate_all
    from mechcond.fileio import write_json, write_manifest

    try:
        if args.regime:
            inp = RegimeInput.model_validate_json(Path(args.regime).read_text(encoding="utf-8"))
        else:
            inp = RegimeInput(C=args.C, Q=args.Q, n_th=args.n_th, eta=args.eta, N=args.N, damping=args.damping)
    except (ValidationError, OSError) as e:
        raise ModelError(f"invalid regime input: {e}")
    result = evaluate_all(inp)
    print(json.dumps(result, indent=2))
    if args.out:
        out = _out_dir(args.out)
        write_json(out / "criteria.json", result)
        write_manifest(out, "criteria", _args_dict(args), inputs=[args.regime] if args.regime else [])
    return 0


# --- argument parsing -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="측정 기반 기계 공진기 조건부 상태 준비")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="궤적 합성 (TrajectoryBundle + trace)")
    p.add_argument("--config", required=True, help="모델 설정 JSON")
    p.add_argument("--out", required=True, help="출력 디렉터리")
    p.add_argument("--seed", type=int, required=True, help="64비트 시드 (필수)")
    p.add_argument("--duration", type=float, help="기록 길이 [s] (기본 1000/min Γ)")
    p.add_argument("--dt", type=float, help="샘플 주기 [s] (기본 π/(8·max Ω))")
    p.add_argument("--trial", type=int, default=0, help="trial 번호 (난수 스트림 키)")
    p.add_argument("--backaction", choices=["correlated", "off"], default="correlated")
    p.add_argument("--csv", action="store_true", help="bundle.csv 도 쓴다 (짧은 기록용)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("condition", help="기록에 필터 적용 → 조건부 리포트")
    p.add_argument("--config", required=True)
    p.add_argument("--trace", required=True, help="trace .bin 또는 t_s,y CSV")
    p.add_argument("--subset", default="1", help="조건화할 모드 (1부터, 쉼표 구분)")
    p.add_argument("--out", required=True)
    p.add_argument("--grid-points", type=int, help="필터 격자 점 개수 (2의 거듭제곱)")
    p.add_argument("--trials", type=int, default=0, help=">0 이면 변환 계수를 Monte Carlo 로")
    p.add_argument("--seed", type=int, help="--trials 사용 시 필수")
    p.add_argument("--duration", type=float, help="Monte Carlo 기록 길이 [s] (기본: trace 길이)")
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("sweep", help="(C, n_th) 격자 조건부 분산")
    p.add_argument("--config", required=True, help="첫 모드를 기준 모드로 사용")
    p.add_argument("--c-range", required=True, help="lo:hi:n (로그 간격) 또는 a,b,c")
    p.add_argument("--n-range", required=True, help="lo:hi:n (로그 간격) 또는 a,b,c")
    p.add_argument("--N", type=int, default=1, help="동일 모드 수 (C → NC)")
    p.add_argument("--eta", type=float, help="검출 효율 (기본: 설정 파일)")
    p.add_argument("--bins-per-width", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="Welch PSD → 모델 피팅 → 설정 JSON")
    p.add_argument("--config", required=True, help="초기 템플릿 모델")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segment-length", type=int, default=2 ** 14)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--mask", help="제외 대역 lo_hz:hi_hz[,lo_hz:hi_hz...]")
    p.add_argument("--compare-damping", action="store_true", help="점성/구조 감쇠 둘 다 피팅")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("factorize", help="S_YY 스펙트럼 인수분해")
    p.add_argument("--config", help="모델 설정 (S_YY 를 계산)")
    p.add_argument("--psd", help="스펙트럼 CSV (omega_rad_s,value_re,value_im)")
    p.add_argument("--grid-points", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("criteria", help="판정식 JSON 출력")
    p.add_argument("--regime", help="RegimeInput JSON")
    p.add_argument("--C", type=float, default=0.0)
    p.add_argument("--Q", type=float, default=1.0)
    p.add_argument("--n-th", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--damping", choices=["viscous", "structural"], default="viscous")
    p.add_argument("--out", help="criteria.json 을 쓸 디렉터리")
    p.set_defaults(func=cmd_criteria)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        status = args.func(args)
    except MechCondError as e:
        print(e.detail, file=sys.stderr)
        status = e.status
    _logger.info("command finished", extra={"command": args.command, "status": status})
    return status


if __name__ == "__main__":
    sys.exit(main())
