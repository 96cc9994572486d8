"""Config, dataset, checkpoint and metrics file formats.

Dataset (``EQD1``), all integers little-endian::

    magic  b"EQD1"
    u8     tag length, tag (ascii)
    u32    d
    u32    split count, then per split: u8 name length, name, u32 sample count
    u32    field count, then per field: u8 name length, name, u8 ndim, u32 dims...
    f64    per split, per field: samples x prod(dims) values

Checkpoint (``EQM1``)::

    magic  b"EQM1"
    u32    entry count, then per entry:
           u8 name length, name, u8 kind (b"f" float64, b"i" int64, b"s" utf-8),
           u8 ndim, u32 dims..., payload
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "load_checkpoint",
    "load_config",
    "parse_config",
    "read_dataset",
    "read_metrics",
    "save_checkpoint",
    "write_dataset",
    "write_metrics",
]

DATASET_MAGIC = b"EQD1"
CHECKPOINT_MAGIC = b"EQM1"


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); None means "experiment default"
_SCHEMA: dict[str, tuple[Any, Any]] = {
    "experiment": (str, None),
    "model": (str, None),
    "group": (str, "o3"),
    "scheme": (str, "BR"),
    "covariance": (str, "random"),
    "n": (int, None),
    "d": (int, None),
    "epsilon": (float, 0.25),
    "seed": (int, 0),
    "widths": (_int_list, None),
    "lr": (float, None),
    "epochs": (int, None),
    "batch": (int, None),
    "augment": (int, 0),
    "sizes": (_int_list, None),
    "patience": (int, 0),
    "weight_decay": (float, 1e-2),
    "degree": (int, 5),
    "depth": (int, 3),
    "lam": (float, 1.0),
    "mu": (float, 0.5),
    "eta": (float, 0.1),
    "activation": (str, None),
    "dedup": (_bool, False),
}

EXPERIMENTS = ("signature", "stress", "sparse")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "signature": dict(model="equivariant", n=10, d=3, widths=(32, 32, 32), lr=5e-4, epochs=200,
                      batch=32, sizes=(1024, 256, 256), activation="gelu"),
    "stress": dict(model="equivariant", n=1, d=3, widths=(23, 23, 23), lr=2e-3, epochs=300,
                   batch=256, sizes=(2000, 500, 500), activation="gelu"),
    "sparse": dict(model="full", n=100, d=5, widths=(128, 128, 128), lr=3e-4, epochs=40,
                   batch=100, sizes=(2000, 500, 500), patience=20, activation="relu"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    explicit: frozenset = frozenset()

    def __getattr__(self, key: str):
        try:
            return self.values[key]
        except KeyError as exc:
            raise AttributeError(key) from exc

    def replace(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if k not in _SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = v
        return ExperimentConfig(vals, self.explicit | frozenset(kw))

    def dumps(self) -> str:
        lines = []
        for key in _SCHEMA:
            v = self.values[key]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    values: dict[str, Any] = {}
    for key, value in raw.items():
        try:
            values[key] = _SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    for key, value in (overrides or {}).items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    explicit = frozenset(values)
    exp = values.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"'experiment' must be one of {EXPERIMENTS}, got {exp!r}")
    for key, (_, default) in _SCHEMA.items():
        if key not in values:
            values[key] = _DEFAULTS[exp].get(key, default)
    _validate(values)
    return ExperimentConfig(values, explicit)


def _validate(v: dict) -> None:
    if len(v["sizes"]) != 3 or min(v["sizes"]) < 1:
        raise ConfigError("'sizes' needs three positive counts (train, val, test)")
    for key in ("n", "d", "epochs", "batch"):
        if v[key] < 1:
            raise ConfigError(f"{key!r} must be positive")
    if v["lr"] <= 0:
        raise ConfigError("'lr' must be positive")
    if v["augment"] < 0:
        raise ConfigError("'augment' must be non-negative")
    if v["experiment"] == "sparse":
        from .sparse import COVARIANCES, SCHEMES

        if v["scheme"] not in SCHEMES:
            raise ConfigError(f"'scheme' must be one of {SCHEMES}")
        if v["covariance"] not in COVARIANCES:
            raise ConfigError(f"'covariance' must be one of {COVARIANCES}")
        if not 0 < v["epsilon"] <= 1:
            raise ConfigError("'epsilon' must lie in (0, 1]")
        if v["d"] >= v["n"]:
            raise ConfigError("sparse recovery needs d < n")
    if v["experiment"] == "signature" and v["group"] not in ("o3", "lorentz"):
        raise ConfigError("signature experiments support group o3 or lorentz")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


@dataclass
class Dataset:
    tag: str
    d: int
    splits: dict[str, dict[str, np.ndarray]]

    def split(self, name: str) -> dict[str, np.ndarray]:
        return self.splits[name]


def _pstr(buf: io.BytesIO, s: str) -> None:
    b = s.encode()
    if len(b) > 255:
        raise ValueError("name too long")
    buf.write(struct.pack("<B", len(b)))
    buf.write(b)


def _rstr(view: memoryview, pos: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<B", view, pos)
    pos += 1
    return bytes(view[pos : pos + length]).decode(), pos + length


def dataset_bytes(ds: Dataset) -> bytes:
    split_names = list(ds.splits)
    fields = list(ds.splits[split_names[0]])
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    _pstr(buf, ds.tag)
    buf.write(struct.pack("<I", ds.d))
    buf.write(struct.pack("<I", len(split_names)))
    for s in split_names:
        _pstr(buf, s)
        buf.write(struct.pack("<I", ds.splits[s][fields[0]].shape[0]))
    buf.write(struct.pack("<I", len(fields)))
    for f in fields:
        shape = ds.splits[split_names[0]][f].shape[1:]
        _pstr(buf, f)
        buf.write(struct.pack("<B", len(shape)))
        buf.write(struct.pack(f"<{len(shape)}I", *shape))
    for s in split_names:
        for f in fields:
            buf.write(np.ascontiguousarray(ds.splits[s][f], dtype="<f8").tobytes())
    return buf.getvalue()


def write_dataset(path, ds: Dataset) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def read_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    view = memoryview(data)
    if data[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not an EQD1 dataset")
    pos = 4
    tag, pos = _rstr(view, pos)
    (d, n_splits), pos = struct.unpack_from("<II", view, pos), pos + 8
    splits = []
    for _ in range(n_splits):
        name, pos = _rstr(view, pos)
        (count,) = struct.unpack_from("<I", view, pos)
        pos += 4
        splits.append((name, count))
    (n_fields,) = struct.unpack_from("<I", view, pos)
    pos += 4
    fields = []
    for _ in range(n_fields):
        name, pos = _rstr(view, pos)
        (ndim,) = struct.unpack_from("<B", view, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        fields.append((name, tuple(shape)))
    out: dict[str, dict[str, np.ndarray]] = {}
    for sname, count in splits:
        out[sname] = {}
        for fname, shape in fields:
            size = count * int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).astype(np.float64)
            out[sname][fname] = arr.reshape((count,) + shape)
            pos += 8 * size
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return Dataset(tag, d, out)


def checkpoint_bytes(entries: dict[str, Any]) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(entries)))
    for name, value in entries.items():
        _pstr(buf, name)
        if isinstance(value, str):
            payload = value.encode()
            buf.write(b"s" + struct.pack("<BI", 1, len(payload)) + payload)
            continue
        arr = np.asarray(value)
        kind = b"i" if np.issubdtype(arr.dtype, np.integer) else b"f"
        buf.write(kind + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<i8" if kind == b"i" else "<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path, entries: dict[str, Any]) -> None:
    Path(path).write_bytes(checkpoint_bytes(entries))


def load_checkpoint(path) -> dict[str, Any]:
    data = Path(path).read_bytes()
    view = memoryview(data)
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an EQM1 checkpoint")
    (count,) = struct.unpack_from("<I", view, 4)
    pos = 8
    out: dict[str, Any] = {}
    for _ in range(count):
        name, pos = _rstr(view, pos)
        kind = bytes(view[pos : pos + 1])
        (ndim,) = struct.unpack_from("<B", view, pos + 1)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        if kind == b"s":
            out[name] = bytes(view[pos : pos + shape[0]]).decode()
            pos += shape[0]
            continue
        size = int(np.prod(shape, dtype=np.int64))
        dtype = "<i8" if kind == b"i" else "<f8"
        arr = np.frombuffer(data, dtype=dtype, count=size, offset=pos).reshape(shape)
        out[name] = arr.astype(np.int64 if kind == b"i" else np.float64)
        pos += 8 * size
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return out


METRIC_COLUMNS = ("epoch", "split", "metric", "value")


def write_metrics(path, rows) -> None:
    """Rows of ``(epoch, split, metric, value)``; values are written with ``repr``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for epoch, split, metric, value in rows:
            w.writerow([epoch, split, metric, repr(float(value))])


def read_metrics(path) -> list[tuple[int, str, str, float]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(int(e), s, m, float(v)) for e, s, m, v in r]
