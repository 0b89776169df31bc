"""Binary and text file formats: SMAP rasters, SPXM checkpoints, CSV reports.

SMAP (little-endian)::

    b"SMAP" | u32 version=1 | u32 H | u32 W | u32 method_id | u64 seed | f32[H*W] row-major

SPXM (little-endian)::

    b"SPXM" | u32 version=1 | u32 len | config JSON (utf-8, len bytes) | f64 blocks in layer order
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .explain import METHOD_IDS, METHOD_NAMES, SaliencyMap
from .net import Model, ModelConfig, init_params, param_order

SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
_SMAP_HEADER = struct.Struct("<4sIIIIQ")

SPXM_MAGIC = b"SPXM"
SPXM_VERSION = 1


def write_smap(m: SaliencyMap, path) -> None:
    h, w = m.values.shape
    if h >= 2**32 or w >= 2**32:
        raise FormatError("raster dimensions overflow u32")
    with open(path, "wb") as f:
        f.write(_SMAP_HEADER.pack(SMAP_MAGIC, SMAP_VERSION, h, w, m.method_id, int(m.seed) & (2**64 - 1)))
        f.write(m.values.astype("<f4").tobytes())


def read_smap(path) -> SaliencyMap:
    raw = Path(path).read_bytes()
    if len(raw) < _SMAP_HEADER.size:
        raise FormatError(f"{path}: truncated SMAP header")
    magic, version, h, w, method_id, seed = _SMAP_HEADER.unpack_from(raw)
    if magic != SMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SMAP_VERSION:
        raise FormatError(f"{path}: unsupported SMAP version {version}")
    if method_id not in METHOD_NAMES:
        raise FormatError(f"{path}: unknown method id {method_id}")
    need = h * w * 4
    body = raw[_SMAP_HEADER.size:]
    if h * w > 2**31 or len(body) != need:
        raise FormatError(f"{path}: payload is {len(body)} bytes, header implies {need}")
    vals = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(h, w)
    return SaliencyMap(vals, METHOD_NAMES[method_id], "", -1, seed)


def save_model(model: Model, path) -> None:
    cfg_bytes = model.cfg.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(SPXM_MAGIC)
        f.write(struct.pack("<II", SPXM_VERSION, len(cfg_bytes)))
        f.write(cfg_bytes)
        for k in param_order(model.cfg, model.params):
            f.write(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())


def load_model(path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != SPXM_MAGIC:
        raise FormatError(f"{path}: not an SPXM checkpoint")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != SPXM_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) < 12 + n:
        raise FormatError(f"{path}: truncated config block")
    cfg = ModelConfig.from_dict(json.loads(raw[12:12 + n].decode("utf-8")))
    template = init_params(cfg, 0)
    off, params = 12 + n, {}
    for k in param_order(cfg, template):
        shape = template[k].shape
        size = int(np.prod(shape)) * 8
        if off + size > len(raw):
            raise FormatError(f"{path}: truncated parameter block {k}")
        params[k] = np.frombuffer(raw, dtype="<f8", count=size // 8, offset=off).astype(np.float64).reshape(shape)
        off += size
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return Model(cfg, params)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return format(v, ".10g")
    return str(v)


def write_report(rows: Sequence[dict], path, columns: Sequence[str] | None = None, comment: str | None = None) -> None:
    """CSV with header, RFC-4180 quoting, LF endings, floats at 10 significant digits.

    ``comment`` becomes a leading ``# ...`` line when given.
    """
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("columns are required for an empty report")
        columns = list(rows[0].keys())
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    wr = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    wr.writerow(columns)
    for r in rows:
        wr.writerow([format_value(r.get(c, "")) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_report(path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines(keepends=True) if not ln.startswith("#")]
    return list(csv.DictReader(lines))
