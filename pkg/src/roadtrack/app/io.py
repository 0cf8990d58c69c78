"""File formats at the package boundary.

Point-cloud frames live in a directory, one file per frame, named
``<index>_<stamp_us>.bin`` (binary) or ``<index>_<stamp_us>.txt`` (ASCII),
where ``stamp_us`` is the stamp in integer microseconds.

Binary layout, little-endian::

    uint32  n
    float32 x, y, z, intensity   (repeated n times)

ASCII layout: optional ``# stamp <seconds>`` header line, then one
``x y z [intensity]`` row per point. A header stamp overrides the file name.

Object lists are JSON Lines, one frame per line::

    {"stamp": s, "objects": [...], "timing": {"total_ms": ..., "stages_ms": {...}}}

Ground truth is JSON Lines as well: ``{"stamp": s, "actors": [...]}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from roadtrack.app.pipeline import ExportedTrack, FrameResult
from roadtrack.model import ModelError, PointCloud
from roadtrack.sim.render import GroundTruth

_NAME = re.compile(r"^(\d+)_(-?\d+)\.(bin|txt)$")
_DTYPE = np.dtype("<f4")


class DataError(ModelError):
    """Malformed or unreadable input data."""


# -- point clouds -------------------------------------------------------------------


def frame_name(index: int, stamp: float, ascii: bool = False) -> str:
    return f"{index:06d}_{round(stamp * 1e6)}.{'txt' if ascii else 'bin'}"


def encode_binary(cloud: PointCloud) -> bytes:
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    body = np.column_stack([cloud.xyz, inten]).astype(_DTYPE)
    return np.uint32(len(cloud)).astype("<u4").tobytes() + body.tobytes()


def decode_binary(data: bytes, stamp: float = 0.0, frame: str = "sensor") -> PointCloud:
    if len(data) < 4:
        raise DataError("binary frame shorter than its header")
    n = int(np.frombuffer(data[:4], "<u4")[0])
    if len(data) != 4 + 16 * n:
        raise DataError(f"binary frame announces {n} points but holds {(len(data) - 4) / 16:g}")
    arr = np.frombuffer(data[4:], _DTYPE).reshape(n, 4).astype(float)
    return PointCloud(arr[:, :3], frame, stamp, arr[:, 3])


def encode_ascii(cloud: PointCloud) -> str:
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    buf = io.StringIO()
    buf.write(f"# stamp {cloud.stamp!r}\n")
    np.savetxt(buf, np.column_stack([cloud.xyz, inten]), fmt="%.6f")
    return buf.getvalue()


def decode_ascii(text: str, stamp: float = 0.0, frame: str = "sensor") -> PointCloud:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "stamp":
                stamp = _float(parts[1], lineno)
            continue
        vals = [_float(v, lineno) for v in line.replace(",", " ").split()]
        if len(vals) == 3:
            vals.append(0.0)
        if len(vals) != 4:
            raise DataError(f"line {lineno}: expected 3 or 4 values")
        rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    try:
        return PointCloud(arr[:, :3], frame, stamp, arr[:, 3])
    except ModelError as exc:
        raise DataError(str(exc)) from exc


def _float(s: str, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise DataError(f"line {lineno}: not a number: {s!r}") from None


def write_frame(directory: str | Path, index: int, cloud: PointCloud, ascii: bool = False) -> Path:
    path = Path(directory) / frame_name(index, cloud.stamp, ascii)
    if ascii:
        path.write_text(encode_ascii(cloud), "utf-8")
    else:
        path.write_bytes(encode_binary(cloud))
    return path


def read_frame(path: str | Path) -> PointCloud:
    path = Path(path)
    m = _NAME.match(path.name)
    if not m:
        raise DataError(f"unexpected frame file name: {path.name}")
    stamp = int(m.group(2)) / 1e6
    try:
        if m.group(3) == "bin":
            return decode_binary(path.read_bytes(), stamp)
        return decode_ascii(path.read_text("utf-8"), stamp)
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


def list_frames(directory: str | Path) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    files = [p for p in d.iterdir() if _NAME.match(p.name)]
    return sorted(files, key=lambda p: int(_NAME.match(p.name).group(1)))


def read_frames(directory: str | Path) -> Iterator[PointCloud]:
    for p in list_frames(directory):
        yield read_frame(p)


# -- conversion from common formats ---------------------------------------------------


def read_kitti_bin(path: str | Path, stamp: float = 0.0) -> PointCloud:
    """KITTI-style ``.bin``: packed float32 ``x y z intensity`` without a header."""
    data = Path(path).read_bytes()
    if len(data) % 16:
        raise DataError(f"{path}: size is not a multiple of 16 bytes")
    arr = np.frombuffer(data, _DTYPE).reshape(-1, 4).astype(float)
    return PointCloud(arr[:, :3], "sensor", stamp, np.abs(arr[:, 3]))


def read_pcd(path: str | Path, stamp: float = 0.0) -> PointCloud:
    """PCD files with ``DATA ascii`` or ``DATA binary`` and float fields."""
    raw = Path(path).read_bytes()
    header, pos = {}, 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise DataError(f"{path}: truncated PCD header")
        line = raw[pos:end].decode("ascii", "replace").strip()
        pos = end + 1
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        header[key.upper()] = vals
        if key.upper() == "DATA":
            break
    fields = header.get("FIELDS", [])
    sizes = [int(v) for v in header.get("SIZE", [])]
    types = header.get("TYPE", [])
    counts = [int(v) for v in header.get("COUNT", ["1"] * len(fields))]
    n = int(header.get("POINTS", header.get("WIDTH", ["0"]))[0])
    if not {"x", "y", "z"} <= set(fields) or len(sizes) != len(fields) or len(types) != len(fields):
        raise DataError(f"{path}: PCD needs x, y, z fields with SIZE and TYPE")
    kind = header["DATA"][0].lower()
    if kind == "ascii":
        rows = np.loadtxt(io.StringIO(raw[pos:].decode("ascii")), ndmin=2)
        cols = np.cumsum([0] + counts)
        table = {f: rows[:, cols[i]] for i, f in enumerate(fields)}
    elif kind == "binary":
        codes = {("F", 4): "<f4", ("F", 8): "<f8", ("U", 1): "u1", ("U", 2): "<u2", ("U", 4): "<u4",
                 ("I", 1): "i1", ("I", 2): "<i2", ("I", 4): "<i4"}
        try:
            dt = np.dtype([(f, codes[(t.upper(), s)], (c,)) for f, t, s, c in zip(fields, types, sizes, counts)])
        except KeyError as exc:
            raise DataError(f"{path}: unsupported PCD field type {exc}") from None
        rec = np.frombuffer(raw[pos : pos + n * dt.itemsize], dt)
        table = {f: rec[f][:, 0].astype(float) for f in fields}
    else:
        raise DataError(f"{path}: unsupported PCD DATA kind {kind!r}")
    xyz = np.column_stack([table["x"], table["y"], table["z"]])
    keep = np.all(np.isfinite(xyz), axis=1)
    inten = table.get("intensity")
    return PointCloud(xyz[keep], "sensor", stamp, None if inten is None else np.abs(inten[keep]))


def read_csv_cloud(path: str | Path, stamp: float = 0.0) -> PointCloud:
    """CSV with a header containing ``x,y,z`` and optionally ``intensity``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y", "z"} <= set(reader.fieldnames):
            raise DataError(f"{path}: CSV header must name x, y, z")
        rows = [(float(r["x"]), float(r["y"]), float(r["z"]), float(r.get("intensity") or 0.0)) for r in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return PointCloud(arr[:, :3], "sensor", stamp, arr[:, 3])


CONVERTERS = {".bin": read_kitti_bin, ".pcd": read_pcd, ".csv": read_csv_cloud}


def convert_files(paths: Iterable[str | Path], out_dir: str | Path, rate: float = 10.0, start: float = 0.0) -> int:
    """Convert foreign point-cloud files, in the given order, to frames
    stamped ``start + k / rate``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for k, p in enumerate(paths):
        reader = CONVERTERS.get(Path(p).suffix.lower())
        if reader is None:
            raise DataError(f"no converter for {p}")
        write_frame(out, k, reader(p, start + k / rate))
        n += 1
    return n


# -- object lists --------------------------------------------------------------------


def result_to_json(res: FrameResult, timing: bool = True) -> dict:
    d = res.to_json()
    if timing:
        d["timing"] = {"total_ms": res.total_ms, "stages_ms": dict(res.timings)}
    return d


def result_from_json(d: dict) -> FrameResult:
    try:
        timing = d.get("timing") or {}
        return FrameResult(
            stamp=float(d["stamp"]),
            tracks=tuple(ExportedTrack.from_json(o) for o in d["objects"]),
            timings={k: float(v) for k, v in (timing.get("stages_ms") or {}).items()},
            total_ms=float(timing.get("total_ms", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid object-list record: {exc}") from exc


def write_results(path: str | Path, results: Iterable[FrameResult], timing: bool = True) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(result_to_json(r, timing)) + "\n")
            n += 1
    return n


def _jsonl(path: str | Path) -> Iterator[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise DataError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_results(path: str | Path) -> list[FrameResult]:
    return [result_from_json(d) for d in _jsonl(path)]


# -- ground truth --------------------------------------------------------------------


def truth_to_json(stamp: float, truth: Iterable[GroundTruth]) -> dict:
    return {
        "stamp": stamp,
        "actors": [
            {
                "name": g.name,
                "label": g.label,
                "x": g.x,
                "y": g.y,
                "yaw_deg": math.degrees(g.yaw),
                "vx": g.vx,
                "vy": g.vy,
                "yaw_rate_deg": math.degrees(g.yaw_rate),
                "length": g.dims[0],
                "width": g.dims[1],
                "height": g.dims[2],
                "n_points": g.n_points,
                "dynamic": g.dynamic,
            }
            for g in truth
        ],
    }


def truth_from_json(d: dict) -> tuple[float, tuple[GroundTruth, ...]]:
    try:
        return float(d["stamp"]), tuple(
            GroundTruth(
                a["name"],
                a["label"],
                float(a["x"]),
                float(a["y"]),
                math.radians(a["yaw_deg"]),
                float(a["vx"]),
                float(a["vy"]),
                math.radians(a["yaw_rate_deg"]),
                (float(a["length"]), float(a["width"]), float(a["height"])),
                int(a["n_points"]),
                bool(a["dynamic"]),
            )
            for a in d["actors"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid ground-truth record: {exc}") from exc


def write_truth(path: str | Path, frames: Iterable[tuple[float, Iterable[GroundTruth]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stamp, truth in frames:
            fh.write(json.dumps(truth_to_json(stamp, truth)) + "\n")


def read_truth(path: str | Path) -> list[tuple[float, tuple[GroundTruth, ...]]]:
    return [truth_from_json(d) for d in _jsonl(path)]


# -- metrics --------------------------------------------------------------------------


def metrics_csv(metrics: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in metrics.items():
        w.writerow([k, v])
    return buf.getvalue()
