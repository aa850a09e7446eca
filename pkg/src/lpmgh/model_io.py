"""On-disk formats for trained models (JSON text) and binary code files.

Model file: a JSON object tagged ``"format": "lpmgh-model"`` and
``"version": 1``. Matrices are stored as row-major nested lists; floats are
written with ``repr`` precision, so a save/load round trip is exact.

Codes file (``.lpmb``)::

    b"LPMB" | version u32 LE | n u64 LE | r u64 LE | n * ceil(r/8) bytes

Bit ``j`` of a row is 1 iff ``B[i, j] = +1``; bits fill each byte from the
least significant end and rows are padded to whole bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .anchor_graph import AnchorSet
from .dataset import NormStats
from .errors import FormatError
from .trainer import HashModel

MODEL_FORMAT = "lpmgh-model"
MODEL_VERSION = 1

CODES_MAGIC = b"LPMB"
CODES_VERSION = 1
_CODES_HEADER = struct.Struct("<4sIQQ")


def model_to_dict(model: HashModel, config: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "r": model.r,
        "M": model.n_views,
        "dims": model.dims,
        "mu": [float(v) for v in model.mu],
        "projections": [W.tolist() for W in model.projections],
        "norm_stats": [{"mean": s.mean.tolist(), "scale": s.scale.tolist()} for s in model.norm_stats],
        "anchors": [{"view_index": a.view_index, "P": a.P, "centers": a.centers.tolist()} for a in model.anchors],
        "config": config or {},
    }


def model_from_dict(doc: dict) -> HashModel:
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"not an {MODEL_FORMAT} document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        Ws = tuple(np.array(W, dtype=np.float64).reshape(d, doc["r"]) for W, d in zip(doc["projections"], doc["dims"]))
        mu = np.array(doc["mu"], dtype=np.float64)
        stats = tuple(
            NormStats(np.array(s["mean"], dtype=np.float64), np.array(s["scale"], dtype=np.float64))
            for s in doc["norm_stats"]
        )
        anchors = tuple(
            AnchorSet(np.array(a["centers"], dtype=np.float64).reshape(a["P"], -1), int(a["view_index"]))
            for a in doc.get("anchors", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc}") from None
    if not (len(Ws) == len(mu) == len(stats) == doc["M"]):
        raise FormatError("model document disagrees on the number of views")
    return HashModel(Ws, mu, stats, anchors)


def save_model(path, model: HashModel, config: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model, config), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> tuple[HashModel, dict]:
    """Return ``(model, config)`` read from ``path``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return model_from_dict(doc), doc.get("config", {})


def codes_to_bytes(B) -> bytes:
    B = np.asarray(B)
    if B.ndim != 2 or not np.all(np.abs(B) == 1):
        raise ValueError("codes must be a 2-D matrix with entries in {-1, +1}")
    n, r = B.shape
    body = np.packbits(B > 0, axis=1, bitorder="little")
    return _CODES_HEADER.pack(CODES_MAGIC, CODES_VERSION, n, r) + body.tobytes()


def codes_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < _CODES_HEADER.size:
        raise FormatError("truncated codes header")
    magic, version, n, r = _CODES_HEADER.unpack_from(raw)
    if magic != CODES_MAGIC:
        raise FormatError(f"bad codes magic {magic!r}")
    if version != CODES_VERSION:
        raise FormatError(f"unsupported codes version {version}")
    row_bytes = (r + 7) // 8
    body = raw[_CODES_HEADER.size:]
    if len(body) != n * row_bytes:
        raise FormatError(f"expected {n * row_bytes} payload bytes, found {len(body)}")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8).reshape(n, row_bytes), axis=1, count=r, bitorder="little")
    return np.where(bits == 1, 1.0, -1.0)


def write_codes(path, B) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(codes_to_bytes(B))


def read_codes(path) -> np.ndarray:
    return codes_from_bytes(Path(path).read_bytes())
