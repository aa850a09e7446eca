"""Hamming ranking over bit-packed codes and retrieval metrics."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class PackedCodes:
    """``n`` codes of ``r`` bits in ``ceil(r/64)`` little-endian uint64 words each.

    ``ids`` travel with the rows; rankings report them and break distance
    ties by ascending id.
    """

    words: np.ndarray
    r: int
    ids: np.ndarray

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def take(self, rows) -> "PackedCodes":
        return PackedCodes(self.words[rows], self.r, self.ids[rows])


@dataclass(frozen=True)
class RankedList:
    query_id: int
    ids: np.ndarray
    distances: np.ndarray


@dataclass(frozen=True)
class PRCurve:
    depth: np.ndarray
    recall: np.ndarray
    precision: np.ndarray

    def downsample(self, max_points: int = 200) -> "PRCurve":
        """At most ``max_points`` evenly spaced depths, always keeping the last."""
        k = self.depth.size
        if k <= max_points:
            return self
        keep = np.unique(np.linspace(0, k - 1, max_points).round().astype(np.int64))
        return PRCurve(self.depth[keep], self.recall[keep], self.precision[keep])


def pack(B, ids=None) -> PackedCodes:
    B = np.asarray(B)
    if B.ndim != 2 or not np.all(np.abs(B) == 1):
        raise ValueError("codes must be a 2-D matrix with entries in {-1, +1}")
    n, r = B.shape
    n_words = (r + 63) // 64
    packed = np.packbits(B > 0, axis=1, bitorder="little")
    buf = np.zeros((n, 8 * n_words), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    words = buf.view("<u8").astype(np.uint64)
    ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if ids.shape != (n,):
        raise ShapeError(f"{ids.size} ids for {n} codes")
    return PackedCodes(words, r, ids)


def unpack(codes: PackedCodes) -> np.ndarray:
    raw = codes.words.astype("<u8").view(np.uint8).reshape(codes.n, -1)
    bits = np.unpackbits(raw, axis=1, count=codes.r, bitorder="little")
    return np.where(bits == 1, 1.0, -1.0)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ShapeError(f"code widths differ: {a.shape} vs {b.shape}")
    return int(np.bitwise_count(a ^ b).sum())


def distances(query: np.ndarray, db: PackedCodes) -> np.ndarray:
    """Hamming distance from one packed query row to every database row."""
    query = np.asarray(query, dtype=np.uint64)
    if query.shape != db.words.shape[1:]:
        raise ShapeError(f"query has {query.shape} words, database rows {db.words.shape[1:]}")
    return np.bitwise_count(db.words ^ query).sum(axis=1, dtype=np.int64)


def _order(dist: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return np.lexsort((ids, dist))


def rank(query: np.ndarray, db: PackedCodes, query_id: int = -1) -> RankedList:
    dist = distances(query, db)
    order = _order(dist, db.ids)
    return RankedList(query_id, db.ids[order], dist[order])


def average_precision(ranking: RankedList, relevant) -> float:
    """Mean of precision@k over the ranks k holding a relevant item; 0 if none."""
    relevant = np.fromiter(relevant, dtype=np.int64)
    return _ap(np.isin(ranking.ids, relevant))


def _ap(rel: np.ndarray) -> float:
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def _check(queries: PackedCodes, db: PackedCodes, labels_q, labels_db):
    labels_q = np.asarray(labels_q)
    labels_db = np.asarray(labels_db)
    if queries.r != db.r:
        raise ShapeError(f"query codes have {queries.r} bits, database {db.r}")
    if labels_q.shape != (queries.n,) or labels_db.shape != (db.n,):
        raise ShapeError("label vectors must align with code rows")
    if db.n == 0:
        raise ShapeError("empty database")
    return labels_q, labels_db


def _relevance_rows(queries, db, labels_q, labels_db, threads):
    """Relevance vector in ranked order for every query."""

    def one(i):
        order = _order(distances(queries.words[i], db), db.ids)
        return labels_db[order] == labels_q[i]

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            yield from pool.map(one, range(queries.n))
    else:
        for i in range(queries.n):
            yield one(i)


def map_score(queries: PackedCodes, db: PackedCodes, labels_q, labels_db, threads: int = 1) -> float:
    """Mean average precision over the full ranking; relevant = same label."""
    labels_q, labels_db = _check(queries, db, labels_q, labels_db)
    if queries.n == 0:
        return 0.0
    aps = [_ap(rel) for rel in _relevance_rows(queries, db, labels_q, labels_db, threads)]
    return float(np.mean(aps))


def pr_curve(queries: PackedCodes, db: PackedCodes, labels_q, labels_db, threads: int = 1) -> PRCurve:
    """Precision and recall at every depth 1..n, averaged over queries.

    A query without relevant items contributes recall 0.
    """
    return evaluate(queries, db, labels_q, labels_db, threads)[1]


def evaluate(queries: PackedCodes, db: PackedCodes, labels_q, labels_db, threads: int = 1):
    """``(map, pr_curve)`` from a single pass over the rankings."""
    labels_q, labels_db = _check(queries, db, labels_q, labels_db)
    depth = np.arange(1, db.n + 1)
    prec = np.zeros(db.n)
    rec = np.zeros(db.n)
    aps = []
    for rel in _relevance_rows(queries, db, labels_q, labels_db, threads):
        aps.append(_ap(rel))
        hits = np.cumsum(rel)
        prec += hits / depth
        if hits[-1] > 0:
            rec += hits / hits[-1]
    nq = max(queries.n, 1)
    return (float(np.mean(aps)) if aps else 0.0), PRCurve(depth, rec / nq, prec / nq)


def write_pr_csv(path, curve: PRCurve) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["depth", "recall", "precision"])
        for k, rc, pr in zip(curve.depth, curve.recall, curve.precision):
            w.writerow([int(k), repr(float(rc)), repr(float(pr))])


def write_metrics(path, map_value: float, n_queries: int, n_db: int, r: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"map": map_value, "n_queries": n_queries, "n_db": n_db, "r": r}
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="ascii")
