"""On-disk formats: datasets (``meta.json`` + ``data.bin``), model checkpoints and CSV.

``data.bin`` layout (all little-endian)::

    b"NHDS" | u32 version | u64 N | u64 m | f64 t[m] | f64 V[N*m] | f64 q[N*m] | f64 p[N*m]

Checkpoint layout::

    b"NHDO" | u32 version | u64 m | u64 l | u32 nb | u64 branch_widths[nb]
            | u32 nt | u64 trunk_widths[nt] | f64 parameters...

Parameters follow the model's declaration order (branch weights and biases layer by
layer, then trunk, then the m x 2 output bias), each tensor row-major.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .deeponet import DeepONetModel
from .errors import FormatError, InvariantViolation, IoFailure, NonFiniteValue, SizeMismatch

__all__ = [
    "FORMAT_VERSION",
    "DATASET_MAGIC",
    "CHECKPOINT_MAGIC",
    "CSV_SCHEMAS",
    "write_dataset",
    "read_dataset",
    "dataset_nbytes",
    "write_checkpoint",
    "read_checkpoint",
    "export_csv",
    "read_csv",
]

FORMAT_VERSION = 1
DATASET_MAGIC = b"NHDS"
CHECKPOINT_MAGIC = b"NHDO"
_F8 = np.dtype("<f8")

CSV_SCHEMAS = {
    "potential": ("q", "V"),
    "trajectory": ("t", "q", "p"),
    "metrics": ("sample_id", "l_q", "l_p", "l_tot", "time_s"),
    "loss_history": ("epoch", "train_loss", "val_loss", "lr"),
}
_INT_COLUMNS = {"sample_id", "epoch"}


def dataset_nbytes(N, m):
    return 4 + 4 + 16 + 8 * (m + 3 * N * m)


def _atomic_write(path, payload, mode="wb"):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, mode) as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _check_header(buf, magic, what):
    if len(buf) < 8:
        raise FormatError(f"{what}: file too short for a header ({len(buf)} bytes)")
    if buf[:4] != magic:
        raise FormatError(f"{what}: bad magic {buf[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported format version {version} (this reader handles {FORMAT_VERSION})")


def write_dataset(path, meta, arrays):
    """Write ``arrays`` (``t``, ``V``, ``q``, ``p``) and ``meta`` into directory ``path``."""
    t = np.asarray(arrays["t"], dtype=float)
    V, q, p = (np.atleast_2d(np.asarray(arrays[k], dtype=float)) for k in ("V", "q", "p"))
    m = t.shape[0]
    N = V.shape[0]
    if t.ndim != 1 or any(a.shape != (N, m) for a in (V, q, p)):
        raise InvariantViolation(f"inconsistent shapes t{t.shape} V{V.shape} q{q.shape} p{p.shape}")
    if not all(np.isfinite(a).all() for a in (t, V, q, p)):
        raise InvariantViolation("dataset contains non-finite values")
    meta = dict(meta)
    meta.update(N=int(N), m=int(m), version=FORMAT_VERSION)
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    header = DATASET_MAGIC + struct.pack("<IQQ", FORMAT_VERSION, N, m)
    body = b"".join(a.astype(_F8).tobytes() for a in (t, V, q, p))
    _atomic_write(out / "data.bin", header + body)
    _atomic_write(out / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n", mode="w")


def read_dataset(path):
    """Inverse of :func:`write_dataset`; returns ``(meta, {"t", "V", "q", "p"})``."""
    root = Path(path)
    buf = _read_bytes(root / "data.bin")
    _check_header(buf, DATASET_MAGIC, "dataset")
    if len(buf) < 24:
        raise SizeMismatch(f"dataset: header truncated ({len(buf)} bytes)")
    N, m = struct.unpack_from("<QQ", buf, 8)
    if m < 1:
        raise FormatError("dataset: header declares zero sensors")
    if len(buf) != dataset_nbytes(N, m):
        raise SizeMismatch(f"dataset: {len(buf)} bytes on disk, header implies {dataset_nbytes(N, m)}")
    flat = np.frombuffer(buf, dtype=_F8, offset=24).astype(float)
    if not np.isfinite(flat).all():
        raise NonFiniteValue("dataset payload contains non-finite values")
    t = flat[:m]
    V, q, p = (flat[m + k * N * m : m + (k + 1) * N * m].reshape(N, m) for k in range(3))
    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {root / 'meta.json'}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"meta.json is not valid JSON: {exc}") from exc
    if meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"meta.json declares unsupported version {meta.get('version')}")
    if meta.get("N") != N or meta.get("m") != m:
        raise SizeMismatch(f"meta.json says N={meta.get('N')}, m={meta.get('m')}; data.bin says N={N}, m={m}")
    return meta, {"t": t, "V": V, "q": q, "p": p}


def write_checkpoint(path, model):
    bw, tw = model.widths()
    header = CHECKPOINT_MAGIC + struct.pack("<IQQ", FORMAT_VERSION, model.m, model.l)
    header += struct.pack(f"<I{len(bw)}Q", len(bw), *bw)
    header += struct.pack(f"<I{len(tw)}Q", len(tw), *tw)
    body = b"".join(np.ascontiguousarray(a, dtype=_F8).tobytes() for a in model.parameters())
    _atomic_write(path, header + body)


def read_checkpoint(path):
    """Rebuild a :class:`DeepONetModel` from a checkpoint file."""
    buf = _read_bytes(path)
    _check_header(buf, CHECKPOINT_MAGIC, "checkpoint")
    try:
        m, l = struct.unpack_from("<QQ", buf, 8)
        off = 24
        widths = []
        for _ in range(2):
            (n,) = struct.unpack_from("<I", buf, off)
            if not 2 <= n <= 64:
                raise FormatError(f"checkpoint: implausible layer count {n}")
            widths.append(list(struct.unpack_from(f"<{n}Q", buf, off + 4)))
            off += 4 + 8 * n
    except struct.error as exc:
        raise SizeMismatch(f"checkpoint: header truncated ({exc})") from exc
    bw, tw = widths
    hidden = bw[1:-1]
    if (
        bw[0] != m or tw[0] != 1 or bw[-1] != 2 * l or tw[-1] != 2 * l
        or hidden != tw[1:-1] or len(set(hidden)) > 1 or not hidden
    ):
        raise FormatError(f"checkpoint: unsupported architecture branch={bw} trunk={tw} (m={m}, l={l})")
    model = DeepONetModel(m, l, hidden[0], len(hidden), rng=0)
    params = model.parameters()
    need = sum(p.size for p in params) * 8
    if len(buf) - off != need:
        raise SizeMismatch(f"checkpoint: {len(buf) - off} payload bytes, architecture needs {need}")
    flat = np.frombuffer(buf, dtype=_F8, offset=off)
    if not np.isfinite(flat).all():
        raise NonFiniteValue("checkpoint contains non-finite parameters")
    pos = 0
    for p in params:
        p[...] = flat[pos : pos + p.size].reshape(p.shape)
        pos += p.size
    return model


def _fmt(col, value):
    if col in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def export_csv(arrays, path, what):
    """Write the columns of ``arrays`` (a mapping or row sequence) under a fixed schema."""
    if what not in CSV_SCHEMAS:
        raise ValueError(f"unknown CSV schema {what!r}; choose from {', '.join(CSV_SCHEMAS)}")
    cols = CSV_SCHEMAS[what]
    if isinstance(arrays, dict):
        data = [np.ravel(np.asarray(arrays[c])) for c in cols]
        n = {len(d) for d in data}
        if len(n) > 1:
            raise InvariantViolation(f"columns have different lengths {sorted(n)}")
        rows = list(zip(*data))
    else:
        rows = [tuple(r[c] for c in cols) if isinstance(r, dict) else tuple(r) for r in arrays]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(cols)
            for r in rows:
                if len(r) != len(cols):
                    raise InvariantViolation(f"row {r} does not match schema {cols}")
                w.writerow([_fmt(c, v) for c, v in zip(cols, r)])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    """Columns of a CSV written by :func:`export_csv` as float arrays keyed by header."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    cols = list(zip(*rows)) if rows else [()] * len(header)
    return {h: np.array([float(x) for x in c]) for h, c in zip(header, cols)}
