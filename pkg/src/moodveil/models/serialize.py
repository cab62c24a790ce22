"""Self-describing binary container for trained models.

Layout (all integers little-endian)::

    b"MVML" | u16 version | u16 len + kind | u32 len + JSON header
    | float64 payload | u32 CRC-32 of everything before it

The JSON header holds hyperparameters, metadata and the array table
(name, shape) in payload order. Integer arrays are stored as float64 and
restored by the loader.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"MVML"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps(kind: str, hyper: dict, arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    table = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.kind})
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = json.dumps({"hyper": hyper, "meta": meta or {}, "arrays": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    kind_b = kind.encode("utf-8")
    body = b"".join([MAGIC, struct.pack("<H", VERSION), struct.pack("<H", len(kind_b)), kind_b,
                     struct.pack("<I", len(header)), header, *chunks])
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> tuple[str, dict, dict[str, np.ndarray], dict]:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError("not an MVML container")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise FormatError(f"unsupported MVML version {version}")
    (klen,) = struct.unpack_from("<H", body, 6)
    kind = body[8:8 + klen].decode("utf-8")
    off = 8 + klen
    (hlen,) = struct.unpack_from("<I", body, off)
    off += 4
    header = json.loads(body[off:off + hlen])
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(entry["shape"])
        off += 8 * count
        arrays[entry["name"]] = arr.astype(np.int64) if entry["dtype"] in "iub" else arr.copy()
    if off != len(body):
        raise FormatError("trailing bytes after payload")
    return kind, header["hyper"], arrays, header["meta"]


def save(path: str | Path, kind: str, hyper: dict, arrays: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(kind, hyper, arrays, meta))


def load(path: str | Path):
    return loads(Path(path).read_bytes())


def pack_model(model) -> tuple[str, dict, dict, dict]:
    """(kind, hyper, arrays, meta) for a majority, SVM or MLP model."""
    from .majority import MajorityModel
    from .mlp import MlpModel
    from .svm import SvmModel

    if isinstance(model, MajorityModel):
        return "majority", {}, {"label": np.array([model.label])}, dict(model.meta)
    if isinstance(model, MlpModel):
        meta = dict(model.meta, seed=model.seed)
        return "mlp", model.hyper.as_dict(), dict(model.params), meta
    if isinstance(model, SvmModel):
        arrays = {}
        pairs = []
        for c, m in enumerate(model.machines):
            pairs.append([m.positive, m.negative, m.bias, m.n_iter, m.violation])
            arrays[f"pair{c}/support"] = m.support
            arrays[f"pair{c}/support_vectors"] = m.support_vectors
            arrays[f"pair{c}/dual_coef"] = m.dual_coef
        k = model.kernel
        hyper = {"C": model.C, "kernel": k.name, "degree": k.degree, "gamma": k.gamma}
        meta = dict(model.meta, n_features=model.n_features, classes=list(model.classes),
                    pairs=pairs)
        return "svm", hyper, arrays, meta
    raise TypeError(f"cannot serialize {type(model).__name__}")


def unpack_model(kind: str, hyper: dict, arrays: dict, meta: dict):
    from .majority import MajorityModel
    from .mlp import MlpHyper, MlpModel
    from .svm import BinarySvm, Kernel, SvmModel

    if kind == "majority":
        return MajorityModel(int(arrays["label"][0]), dict(meta))
    if kind == "mlp":
        meta = dict(meta)
        seed = meta.pop("seed")
        return MlpModel(dict(arrays), MlpHyper(**hyper), seed, meta)
    if kind == "svm":
        meta = dict(meta)
        kern = Kernel(hyper["kernel"], hyper["degree"], hyper["gamma"])
        model = SvmModel(hyper["C"], kern, meta.pop("n_features"), tuple(meta.pop("classes")))
        for c, (pos, neg, bias, n_iter, viol) in enumerate(meta.pop("pairs")):
            model.machines.append(BinarySvm(
                int(pos), int(neg), arrays[f"pair{c}/support"],
                arrays[f"pair{c}/support_vectors"], arrays[f"pair{c}/dual_coef"],
                float(bias), int(n_iter), float(viol)))
        model.meta = meta
        return model
    raise FormatError(f"unknown model kind {kind!r}")


def save_model(path: str | Path, model, meta: dict | None = None) -> None:
    kind, hyper, arrays, base_meta = pack_model(model)
    save(path, kind, hyper, arrays, dict(base_meta, **(meta or {})))


def load_model(path: str | Path):
    return unpack_model(*load(path))
