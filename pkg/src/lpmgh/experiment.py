"""Holdout evaluation: split, train or encode, rank, score."""

from __future__ import annotations

import numpy as np

from .dataset import MultiviewDataset, SplitSpec, split_indices
from .retrieval import PRCurve, evaluate, pack
from .trainer import HashModel, TrainConfig, encode, train


def _split(ds: MultiviewDataset, query_frac: float, seed: int):
    spec = SplitSpec(1.0 - query_frac, seed, stratified=ds.labels is not None)
    return split_indices(ds.n, spec, ds.labels)


def evaluate_model(model: HashModel, ds: MultiviewDataset, query_frac: float = 0.2, seed: int = 0, threads: int = 1):
    """Score ``model`` by ranking a held-out query split against the rest.

    Both sides are encoded with the model. Returns
    ``(map, pr_curve, n_queries, n_db)``.
    """
    if ds.labels is None:
        raise ValueError("evaluation needs labels")
    db_rows, q_rows = _split(ds, query_frac, seed)
    db = pack(encode(model, [v[db_rows] for v in ds.views]), ds.ids[db_rows])
    q = pack(encode(model, [v[q_rows] for v in ds.views]), ds.ids[q_rows])
    m, curve = evaluate(q, db, ds.labels[q_rows], ds.labels[db_rows], threads)
    return m, curve, q.n, db.n


def holdout_map(ds: MultiviewDataset, cfg: TrainConfig, query_frac: float = 0.2, split_seed: int = 0) -> tuple[float, PRCurve]:
    """Train on the database split only, then retrieve it with unseen queries."""
    db_rows, q_rows = _split(ds, query_frac, split_seed)
    db_ds = ds.take(db_rows)
    model, B, _ = train(db_ds, cfg)
    q_codes = encode(model, [v[q_rows] for v in ds.views])
    m, curve = evaluate(pack(q_codes, ds.ids[q_rows]), pack(B, db_ds.ids), ds.labels[q_rows], db_ds.labels)
    return m, curve
