"""Tensor data files, chain archives and small CSV/JSON writers.

A tensor file is a key-value header followed by ``---`` and the payload in
storage order (first index fastest)::

    #TENSORFILE 1
    dims: 2 3
    modes: row col
    missing: 1
    encoding: text
    ---
    0.5
    NA
    ...

``encoding: f64le`` switches the payload to packed little-endian doubles
with NaN marking missing cells. Optional ``labels.<mode>:`` lines name the
levels of a mode.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .bayes import Chain
from .tensor import unvec, vec

__all__ = ["DataError", "TensorFile", "read_tensor", "write_tensor", "save_chain",
           "load_chain", "write_npz", "read_npz", "write_csv", "write_json",
           "config_hash", "MAGIC", "MISSING_TOKEN"]

MAGIC = "#TENSORFILE 1"
MISSING_TOKEN = "NA"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class DataError(ValueError):
    """Malformed or inconsistent data file."""


@dataclass
class TensorFile:
    values: NDArray
    mask: NDArray | None = None
    modes: list[str] = field(default_factory=list)
    labels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.mask is None:
            self.mask = np.isnan(self.values)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise DataError("mask and values have different dims")
        if not self.modes:
            self.modes = [f"mode{k + 1}" for k in range(self.values.ndim)]
        if len(self.modes) != self.values.ndim:
            raise DataError(f"{len(self.modes)} mode names for an order-{self.values.ndim} array")
        if len(set(self.modes)) != len(self.modes):
            raise DataError("mode names must be distinct")
        for name, labs in self.labels.items():
            if name not in self.modes:
                raise DataError(f"labels given for unknown mode {name!r}")
            if len(labs) != self.values.shape[self.modes.index(name)]:
                raise DataError(f"mode {name!r} has {len(labs)} labels for "
                                f"{self.values.shape[self.modes.index(name)]} levels")
        self.values = np.where(self.mask, np.nan, self.values)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    def level_labels(self, k: int) -> list[str]:
        name = self.modes[k]
        return self.labels.get(name) or [f"{name}_{i + 1}" for i in range(self.dims[k])]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_tensor(path: str | Path, tf: TensorFile, encoding: str = "text") -> None:
    if encoding not in ("text", "f64le"):
        raise ValueError(f"unknown encoding {encoding!r}")
    head = [MAGIC,
            "dims: " + " ".join(str(d) for d in tf.dims),
            "modes: " + " ".join(tf.modes)]
    for name in tf.modes:
        if name in tf.labels:
            head.append(f"labels.{name}: " + " ".join(tf.labels[name]))
    head += [f"missing: {tf.n_missing}", f"encoding: {encoding}", "---"]
    v = vec(tf.values)
    m = vec(tf.mask)
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode())
        if encoding == "text":
            body = "".join((MISSING_TOKEN if miss else _fmt(x)) + "\n" for x, miss in zip(v, m))
            fh.write(body.encode())
        else:
            fh.write(np.where(m, np.nan, v).astype("<f8").tobytes())


def read_tensor(path: str | Path) -> TensorFile:
    raw = Path(path).read_bytes()
    sep = raw.find(b"\n---\n")
    if not raw.startswith(MAGIC.encode()) or sep < 0:
        raise DataError(f"{path}: not a tensor file (missing header or separator)")
    header = {}
    for line in raw[:sep].decode().splitlines()[1:]:
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        if not _:
            raise DataError(f"{path}: bad header line {line!r}")
        header[key.strip()] = value.strip()
    try:
        dims = tuple(int(d) for d in header["dims"].split())
        modes = header.get("modes", "").split() or None
        declared_missing = int(header.get("missing", "0"))
        encoding = header.get("encoding", "text")
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad header: {exc}") from exc
    if not dims or min(dims) < 1:
        raise DataError(f"{path}: dims must be positive")
    labels = {k[len("labels."):]: v.split() for k, v in header.items() if k.startswith("labels.")}
    payload = raw[sep + 5:]
    size = int(np.prod(dims))
    if encoding == "text":
        tokens = payload.decode().split()
        if len(tokens) != size:
            raise DataError(f"{path}: payload has {len(tokens)} values, dims need {size}")
        miss = np.array([t == MISSING_TOKEN for t in tokens])
        try:
            vals = np.array([np.nan if t == MISSING_TOKEN else float(t) for t in tokens])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    elif encoding == "f64le":
        if len(payload) != 8 * size:
            raise DataError(f"{path}: binary payload has {len(payload)} bytes, expected {8 * size}")
        vals = np.frombuffer(payload, dtype="<f8").astype(float)
        miss = np.isnan(vals)
    else:
        raise DataError(f"{path}: unknown encoding {encoding!r}")
    if np.isnan(vals[~miss]).any():
        raise DataError(f"{path}: NaN outside the missing token")
    if int(miss.sum()) != declared_missing:
        raise DataError(f"{path}: header declares {declared_missing} missing cells, "
                        f"payload has {int(miss.sum())}")
    return TensorFile(unvec(vals, dims), unvec(miss, dims), modes or [], labels)


# --------------------------------------------------------------------------
# deterministic archives

def write_npz(path: str | Path, arrays: dict[str, NDArray], meta: dict | None = None) -> None:
    """Like ``np.savez`` but with fixed timestamps so equal inputs give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_ZIP_DATE), buf.getvalue())
        if meta is not None:
            zf.writestr(zipfile.ZipInfo("meta.json", date_time=_ZIP_DATE), _json_bytes(meta))


def read_npz(path: str | Path) -> tuple[dict[str, NDArray], dict]:
    arrays, meta = {}, {}
    with zipfile.ZipFile(path) as zf:
        for name in zf.namelist():
            data = zf.read(name)
            if name == "meta.json":
                meta = json.loads(data)
            elif name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(data), allow_pickle=False)
    return arrays, meta


def save_chain(path: str | Path, chain: Chain, extra_meta: dict | None = None) -> None:
    arrays = {"M": chain.M, "gamma": chain.gamma, "gamma0": chain.gamma0,
              "gamma_k": chain.gamma_k, "loglik": chain.loglik,
              "dims": np.array(chain.dims), "identity_flags": np.array(chain.identity_flags)}
    for k, draws in chain.Sigma.items():
        arrays[f"Sigma_{k}"] = draws
    if chain.imputed_mean is not None:
        arrays["imputed_mean"] = chain.imputed_mean
        arrays["mask"] = chain.mask
    meta = dict(chain.meta)
    meta.update(extra_meta or {})
    write_npz(path, arrays, meta)


def load_chain(path: str | Path) -> Chain:
    path = Path(path)
    if path.is_dir():
        path = path / "chain.npz"
    try:
        arrays, meta = read_npz(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise DataError(f"{path}: cannot read chain archive: {exc}") from exc
    Sigma = {int(name.split("_")[1]): arr for name, arr in arrays.items()
             if name.startswith("Sigma_")}
    return Chain(M=arrays["M"], Sigma=Sigma, gamma=arrays["gamma"], gamma0=arrays["gamma0"],
                 gamma_k=arrays["gamma_k"], loglik=arrays["loglik"],
                 dims=tuple(int(d) for d in arrays["dims"]),
                 identity_flags=tuple(bool(f) for f in arrays["identity_flags"]),
                 imputed_mean=arrays.get("imputed_mean"), mask=arrays.get("mask"), meta=meta)


# --------------------------------------------------------------------------
# text outputs

def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n").encode()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_bytes(_json_bytes(obj))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=_json_default).encode()).hexdigest()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
