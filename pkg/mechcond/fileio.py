"""
파일 형식.

- 바이너리 컨테이너: 16바이트 magic, JSON 헤더 길이(u32 little-endian), JSON 헤더, little-endian f64 데이터.
  trace(MECHCOND_TRACE01), 궤적 묶음(MECHCOND_BUNDLE1, 열 우선), 필터(MECHCOND_FILTER1, re/im 교차).
- CSV: 스펙트럼 `omega_rad_s,value_re,value_im`, 필터 (omega, |H|, arg H), 위상공간 (kind,q,p), trace `t_s,y`.
- RunManifest: 입력/출력 SHA-256, 도구 버전, 시드. 시각 정보는 넣지 않는다 (재실행 시 바이트 동일).
"""
import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from mechcond.errors import TraceError
from mechcond.model import FrequencyGrid, SampledSpectrum
from mechcond.wiener import WienerFilterSet

TOOL_VERSION = "mechcond 1.0"
MAGIC_LEN = 16
TRACE_MAGIC = b"MECHCOND_TRACE01"
BUNDLE_MAGIC = b"MECHCOND_BUNDLE1"
FILTER_MAGIC = b"MECHCOND_FILTER1"
FILTER_NAMES = ("h_q_causal", "h_p_causal", "h_q_anticausal", "h_p_anticausal")

PathLike = Union[str, Path]


# --- binary container ----------------------------------------------------------------------


def write_container(path: PathLike, magic: bytes, header: Dict[str, Any], data: np.ndarray) -> None:
    if len(magic) != MAGIC_LEN:
        raise ValueError("magic must be 16 bytes")
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = np.ascontiguousarray(data, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        f.write(body)


def read_container(path: PathLike, magic: bytes) -> Tuple[Dict[str, Any], np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:MAGIC_LEN] != magic:
        raise TraceError(f"{path}: not a {magic.decode()} file")
    if len(raw) < MAGIC_LEN + 4:
        raise TraceError(f"{path}: truncated header")
    (n_head,) = struct.unpack("<I", raw[MAGIC_LEN : MAGIC_LEN + 4])
    start = MAGIC_LEN + 4 + n_head
    try:
        header = json.loads(raw[MAGIC_LEN + 4 : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TraceError(f"{path}: bad JSON header: {e}")
    body = raw[start:]
    if len(body) % 8:
        raise TraceError(f"{path}: data section is not a whole number of f64 values")
    return header, np.frombuffer(body, dtype="<f8").astype(float)


# --- spectra -------------------------------------------------------------------------------


def write_spectrum_csv(path: PathLike, s: SampledSpectrum) -> None:
    vals = np.asarray(s.values)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["omega_rad_s", "value_re", "value_im"])
        for om, v in zip(s.omega, vals):
            w.writerow([repr(float(om)), repr(float(np.real(v))), repr(float(np.imag(v)))])


def read_spectrum_csv(path: PathLike) -> SampledSpectrum:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["omega_rad_s", "value_re", "value_im"]:
        raise TraceError(f"{path}: expected header omega_rad_s,value_re,value_im")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r])
    n = data.shape[0]
    if n < 2:
        raise TraceError(f"{path}: spectrum needs at least two rows")
    grid = FrequencyGrid(n, float(data[1, 0] - data[0, 0]))
    if not np.allclose(data[:, 0], grid.omega, rtol=1e-9, atol=1e-9 * grid.d_omega):
        raise TraceError(f"{path}: omega column is not a centered uniform grid")
    values = data[:, 1] + 1j * data[:, 2] if np.any(data[:, 2]) else data[:, 1]
    return SampledSpectrum(grid, values)


# --- filters --------------------------------------------------------------------------------


def write_filters_csv(path: PathLike, filters: WienerFilterSet) -> None:
    """ω > 0 영역만. 각 필터마다 |H|, arg H 두 열."""
    w = filters.grid.omega
    pos = w > 0
    cols = filters.as_dict()
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f)
        out.writerow(["omega_rad_s"] + [f"{n}_{part}" for n in FILTER_NAMES for part in ("abs", "arg")])
        mags = {n: np.abs(cols[n].values[pos]) for n in FILTER_NAMES}
        args = {n: np.angle(cols[n].values[pos]) for n in FILTER_NAMES}
        for i, om in enumerate(w[pos]):
            row = [repr(float(om))]
            for n in FILTER_NAMES:
                row += [repr(float(mags[n][i])), repr(float(args[n][i]))]
            out.writerow(row)


def write_filters_binary(path: PathLike, filters: WienerFilterSet) -> None:
    grid = filters.grid
    cols = filters.as_dict()
    data = np.concatenate([np.column_stack([cols[n].values.real, cols[n].values.imag]).ravel() for n in FILTER_NAMES])
    meta = {k: v for k, v in filters.meta.items() if isinstance(v, (str, int, float, dict, list))}
    header = {
        "n_points": grid.n_points,
        "d_omega": grid.d_omega,
        "subset": list(filters.subset),
        "filters": list(FILTER_NAMES),
        "meta": meta,
    }
    write_container(path, FILTER_MAGIC, header, data)


def read_filters_binary(path: PathLike) -> WienerFilterSet:
    header, data = read_container(path, FILTER_MAGIC)
    grid = FrequencyGrid(int(header["n_points"]), float(header["d_omega"]))
    n = grid.n_points
    if data.shape[0] != 2 * n * len(FILTER_NAMES):
        raise TraceError(f"{path}: filter data length does not match header")
    parts = data.reshape(len(FILTER_NAMES), n, 2)
    spectra = {name: SampledSpectrum(grid, parts[k, :, 0] + 1j * parts[k, :, 1]) for k, name in enumerate(FILTER_NAMES)}
    return WienerFilterSet(subset=tuple(header["subset"]), meta=header.get("meta", {}), **spectra)


# --- traces and bundles ---------------------------------------------------------------------


def write_trace_csv(path: PathLike, y: np.ndarray, dt: float) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t_s", "y"])
        for i, v in enumerate(y):
            w.writerow([repr(i * dt), repr(float(v))])


def read_trace_csv(path: PathLike) -> Tuple[np.ndarray, float]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:2] != ["t_s", "y"]:
        raise TraceError(f"{path}: expected header t_s,y")
    data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r])
    if data.shape[0] < 2:
        raise TraceError(f"{path}: trace needs at least two samples")
    steps = np.diff(data[:, 0])
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-6):
        raise TraceError(f"{path}: t_s column is not uniformly sampled")
    return data[:, 1], dt


def write_bundle_binary(path: PathLike, columns: Dict[str, np.ndarray], header: Dict[str, Any]) -> None:
    names = list(columns)
    lengths = {columns[n].shape[0] for n in names}
    if len(lengths) != 1:
        raise TraceError("bundle columns must have equal length")
    head = dict(header, columns=names, n_samples=lengths.pop())
    data = np.concatenate([np.asarray(columns[n], dtype=float) for n in names])
    write_container(path, BUNDLE_MAGIC, head, data)


def read_bundle_binary(path: PathLike) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    header, data = read_container(path, BUNDLE_MAGIC)
    names = header.get("columns", [])
    n = int(header.get("n_samples", 0))
    if data.shape[0] != n * len(names):
        raise TraceError(f"{path}: bundle data length does not match header")
    return header, {name: data[k * n : (k + 1) * n] for k, name in enumerate(names)}


def write_bundle_csv(path: PathLike, columns: Dict[str, np.ndarray], dt: float) -> None:
    names = list(columns)
    n = columns[names[0]].shape[0]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t_s"] + names)
        for i in range(n):
            w.writerow([repr(i * dt)] + [repr(float(columns[c][i])) for c in names])


# --- reports -------------------------------------------------------------------------------


def write_json(path: PathLike, payload: Any) -> None:
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_phase_space_csv(path: PathLike, points: Dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["kind", "q", "p"])
        for kind, arr in points.items():
            for q, p in arr:
                w.writerow([kind, repr(float(q)), repr(float(p))])


def write_table_csv(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(list(header))
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


# --- manifest ------------------------------------------------------------------------------


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest(BaseModel):
    tool_version: str = TOOL_VERSION
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict)
    config: Optional[str] = None
    seeds: List[int] = Field(default_factory=list)
    output_dir: str
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)


MANIFEST_NAME = "manifest.json"


def write_manifest(
    out_dir: PathLike,
    command: str,
    arguments: Dict[str, Any],
    inputs: Sequence[PathLike] = (),
    config: Optional[PathLike] = None,
    seeds: Sequence[int] = (),
    flags: Sequence[str] = (),
) -> RunManifest:
    """out_dir 의 모든 산출물 해시를 담은 manifest.json 을 쓴다 (디렉터리당 하나)."""
    out = Path(out_dir)
    outputs = {p.name: sha256_file(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST_NAME}
    manifest = RunManifest(
        command=command,
        arguments=arguments,
        config=str(config) if config is not None else None,
        seeds=[int(s) for s in seeds],
        output_dir=str(out),
        inputs={str(p): sha256_file(p) for p in inputs},
        outputs=outputs,
        flags=list(flags),
    )
    write_json(out / MANIFEST_NAME, manifest)
    return manifest
