"""Alternating optimization of the multiview graph-hashing objective.

For views ``X_m`` (normalized), scatter matrices ``S_m = X_m^T A_m X_m``,
orthonormal projections ``W_m``, view weights ``mu_m`` and codes
``B in {-1, +1}^{n x r}`` the trainer minimizes

    sum_m  -Tr(W_m^T S_m W_m) + ||B - X_m W_m||_F^2 / mu_m

by cycling W-step (per view, on the Stiefel manifold), mu-step (closed form)
and B-step (closed form).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import stiefel
from .anchor_graph import AnchorSet, build_factor, scatter_matrix, select_anchors
from .dataset import MultiviewDataset, NormStats, as_feature_matrix, normalize_view
from .errors import ConfigError, DegenerateError, MissingViewError, NumericError, ShapeError

log = logging.getLogger(__name__)

MU_FLOOR = 1e-12


@dataclass(frozen=True)
class HashModel:
    projections: tuple[np.ndarray, ...]
    mu: np.ndarray
    norm_stats: tuple[NormStats, ...]
    anchors: tuple[AnchorSet, ...] = ()

    @property
    def r(self) -> int:
        return self.projections[0].shape[1]

    @property
    def n_views(self) -> int:
        return len(self.projections)

    @property
    def dims(self) -> list[int]:
        return [W.shape[0] for W in self.projections]


@dataclass(frozen=True)
class TrainConfig:
    bits: int = 16
    max_outer_iters: int = 50
    rel_tol: float = 1e-6
    mu_init: float = 0.5
    seed: int = 0
    n_anchors: int | None = None
    anchor_s: int = 3
    bandwidth: float | str = "auto"
    kmeans_iters: int = 20
    stiefel: stiefel.StiefelOptions = field(default_factory=stiefel.StiefelOptions)
    threads: int = 1

    def __post_init__(self):
        if self.bits < 2:
            raise ConfigError(f"code length must be >= 2 bits, got {self.bits}")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        if not self.mu_init > 0:
            raise ConfigError("mu_init must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def anchor_count(self, n: int) -> int:
        return self.n_anchors if self.n_anchors is not None else max(2, min(300, n // 2))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d.pop("threads", None)
        if isinstance(d.get("stiefel"), dict):
            d["stiefel"] = stiefel.StiefelOptions(**d["stiefel"])
        return cls(**d)


@dataclass
class TrainReport:
    """What happened during :func:`train`.

    ``objective_per_iter[0]`` is the value at initialization, entry ``k`` the
    value after outer iteration ``k``. Each ``step_deltas`` entry has the
    objective change of the W-step of every view (``"w"``), the mu-step and
    the B-step. ``mu_gap`` records, per iteration, how far the closed-form
    mu update lands above the best achievable weighted loss on the simplex,
    ``M * sum(l) - (sum sqrt(l))^2``.
    """

    objective_per_iter: list[float] = field(default_factory=list)
    step_deltas: list[dict] = field(default_factory=list)
    mu_history: list[list[float]] = field(default_factory=list)
    mu_gap: list[float] = field(default_factory=list)
    orthonormality: list[float] = field(default_factory=list)
    iters_run: int = 0
    converged: bool = False
    final_mu: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# objective and closed-form steps


def view_terms(x: np.ndarray, S: np.ndarray, W: np.ndarray, B: np.ndarray) -> tuple[float, float]:
    """(``Tr(W^T S W)``, ``||B - X W||_F^2``) for one view."""
    trace = float(np.sum(W * (S @ W)))
    resid = B - x @ W
    return trace, float(np.sum(resid * resid))


def objective(
    projections: Sequence[np.ndarray],
    mu: Sequence[float],
    views: Sequence[np.ndarray],
    scatters: Sequence[np.ndarray],
    B: np.ndarray,
) -> float:
    if not len(projections) == len(mu) == len(views) == len(scatters):
        raise ShapeError("projections, mu, views and scatters must have one entry per view")
    total = 0.0
    for W, m, x, S in zip(projections, mu, views, scatters):
        if x.shape[0] != B.shape[0] or x.shape[1] != W.shape[0] or W.shape[1] != B.shape[1]:
            raise ShapeError(f"inconsistent shapes X{x.shape} W{W.shape} B{B.shape}")
        if not m > 0:
            raise ConfigError(f"view weights must be positive, got {m}")
        trace, quant = view_terms(x, S, W, B)
        total += -trace + quant / m
    if not np.isfinite(total):
        raise NumericError("objective is not finite")
    return float(total)


def _sign(a: np.ndarray) -> np.ndarray:
    # sgn(0) := +1
    return np.where(a >= 0, 1.0, -1.0)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    pivot = np.abs(V).argmax(axis=0)
    signs = np.where(V[pivot, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return V * signs


def init_projections(scatters: Sequence[np.ndarray], r: int) -> list[np.ndarray]:
    """Top-``r`` eigenvectors of each scatter matrix, by descending eigenvalue.

    Each eigenvector is flipped so its largest-magnitude entry is positive.
    """
    out = []
    for m, S in enumerate(scatters):
        d = S.shape[0]
        if r > d:
            raise ConfigError(f"{r} bits exceed the dimension {d} of view {m}")
        _, vecs = np.linalg.eigh(S)
        out.append(_fix_signs(vecs[:, ::-1][:, :r].copy()))
    return out


def init_codes(n: int, r: int) -> np.ndarray:
    return np.ones((n, r))


def update_mu(losses) -> np.ndarray:
    """View weights proportional to each view's quantization loss."""
    l = np.asarray(losses, dtype=np.float64)
    if np.any(l < 0) or not np.all(np.isfinite(l)):
        raise NumericError(f"losses must be finite and non-negative, got {l}")
    if not l.sum() > 0:
        raise DegenerateError("all quantization losses are zero")
    l = np.maximum(l, MU_FLOOR)
    return l / l.sum()


def update_codes(views: Sequence[np.ndarray], projections: Sequence[np.ndarray], mu) -> np.ndarray:
    """``sgn(sum_m X_m W_m / mu_m)`` with ``sgn(0) = +1``."""
    if not len(views) == len(projections) == len(mu):
        raise ShapeError("views, projections and mu must have one entry per view")
    acc = None
    for x, W, m in zip(views, projections, mu):
        if x.shape[1] != W.shape[0]:
            raise ShapeError(f"view with {x.shape[1]} columns vs projection with {W.shape[0]} rows")
        term = (x @ W) / m
        if acc is None:
            acc = term
        elif acc.shape != term.shape:
            raise ShapeError("views disagree on the number of samples")
        else:
            acc = acc + term
    return _sign(acc)


class ProjectionObjective:
    """``f(W) = -Tr(W^T S W) + ||B - X W||_F^2 / mu`` for fixed ``B`` and ``mu``.

    Expanded as ``Tr(W^T Q W) - <L, W> + c`` with ``Q = X^T X / mu - S`` and
    ``L = 2 X^T B / mu`` so that an evaluation costs O(d^2 r), not O(n d r).
    """

    def __init__(self, x, S, B, mu: float, gram: np.ndarray | None = None):
        gram = x.T @ x if gram is None else gram
        self.Q = gram / mu - S
        self.L = 2.0 * (x.T @ B) / mu
        self.c = float(np.sum(B * B)) / mu

    def value(self, W: np.ndarray) -> float:
        return float(np.sum(W * (self.Q @ W)) - np.sum(self.L * W)) + self.c

    def gradient(self, W: np.ndarray) -> np.ndarray:
        return 2.0 * (self.Q @ W) - self.L


def update_projection(
    x: np.ndarray,
    S: np.ndarray,
    B: np.ndarray,
    mu_m: float,
    W_current: np.ndarray,
    opts: stiefel.StiefelOptions | None = None,
    gram: np.ndarray | None = None,
) -> np.ndarray:
    """W-step for one view. Never returns a point worse than ``W_current``."""
    obj = ProjectionObjective(x, S, B, mu_m, gram)
    W_new, _ = stiefel.minimize(obj, W_current, opts)

    def direct(W):
        trace, quant = view_terms(x, S, W, B)
        return -trace + quant / mu_m

    if direct(W_new) > direct(W_current):
        return W_current
    return W_new


# --------------------------------------------------------------------------
# training and encoding


@dataclass(frozen=True)
class _Prepared:
    views: tuple[np.ndarray, ...]
    stats: tuple[NormStats, ...]
    anchors: tuple[AnchorSet, ...]
    scatters: tuple[np.ndarray, ...]
    grams: tuple[np.ndarray, ...]


def prepare(ds: MultiviewDataset, cfg: TrainConfig) -> _Prepared:
    """Normalize every view and build its anchor graph and scatter matrix."""
    P = cfg.anchor_count(ds.n)
    if not 2 <= P <= ds.n:
        raise ConfigError(f"anchor count {P} needs 2 <= P <= n={ds.n}")
    seeds = np.random.SeedSequence(cfg.seed).generate_state(ds.n_views)
    views, stats, anchors, scatters, grams = [], [], [], [], []
    for m, raw in enumerate(ds.views):
        x, st = normalize_view(raw)
        a = select_anchors(x, P, seed=int(seeds[m]), max_iters=cfg.kmeans_iters, view_index=m)
        f = build_factor(x, a, s=min(cfg.anchor_s, P), bandwidth=cfg.bandwidth)
        views.append(x)
        stats.append(st)
        anchors.append(a)
        scatters.append(scatter_matrix(x, f))
        grams.append(x.T @ x)
    return _Prepared(tuple(views), tuple(stats), tuple(anchors), tuple(scatters), tuple(grams))


def train(ds: MultiviewDataset, cfg: TrainConfig | None = None):
    """Learn projections, view weights and codes for ``ds``.

    Returns ``(model, B, report)``; ``B`` are the codes of the training rows
    after the final B-step.
    """
    cfg = cfg or TrainConfig()
    r = cfg.bits
    if r > min(ds.dims):
        raise ConfigError(f"{r} bits exceed the smallest view dimension {min(ds.dims)}")
    prep = prepare(ds, cfg)
    views, scatters, grams = prep.views, prep.scatters, prep.grams
    M = ds.n_views

    Ws = init_projections(scatters, r)
    B = init_codes(ds.n, r)
    mu = np.full(M, float(cfg.mu_init))
    report = TrainReport()
    f_prev = objective(Ws, mu, views, scatters, B)
    report.objective_per_iter.append(f_prev)
    report.mu_history.append(mu.tolist())

    def view_value(m, W):
        trace, quant = view_terms(views[m], scatters[m], W, B)
        return -trace + quant / mu[m]

    def w_step(m):
        return update_projection(views[m], scatters[m], B, mu[m], Ws[m], cfg.stiefel, grams[m])

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 and M > 1 else None
    try:
        for it in range(1, cfg.max_outer_iters + 1):
            before = [view_value(m, Ws[m]) for m in range(M)]
            new_Ws = list(pool.map(w_step, range(M))) if pool else [w_step(m) for m in range(M)]
            w_deltas = [float(view_value(m, new_Ws[m]) - before[m]) for m in range(M)]
            Ws = new_Ws
            f_w = f_prev + sum(w_deltas)

            losses = [view_terms(views[m], scatters[m], Ws[m], B)[1] for m in range(M)]
            try:
                mu = update_mu(losses)
            except DegenerateError:
                log.info("quantization loss vanished at iteration %d; stopping", it)
                report.converged = True
                report.iters_run = it
                break
            f_mu = objective(Ws, mu, views, scatters, B)
            sq = np.sqrt(np.asarray(losses))
            report.mu_gap.append(float(M * sum(losses) - sq.sum() ** 2))

            B = update_codes(views, Ws, mu)
            f = objective(Ws, mu, views, scatters, B)

            report.step_deltas.append({"w": w_deltas, "mu": float(f_mu - f_w), "b": float(f - f_mu)})
            report.objective_per_iter.append(f)
            report.mu_history.append(mu.tolist())
            report.orthonormality.append(max(stiefel.orthonormality_error(W) for W in Ws))
            report.iters_run = it
            log.debug("iter %d objective %.10g mu %s", it, f, mu)

            rel = abs(f_prev - f) / max(abs(f_prev), np.finfo(float).tiny)
            f_prev = f
            if rel < cfg.rel_tol:
                report.converged = True
                break
    finally:
        if pool:
            pool.shutdown()

    report.final_mu = mu.tolist()
    model = HashModel(tuple(Ws), mu.copy(), prep.stats, prep.anchors)
    return model, B, report


def encode(model: HashModel, features: Sequence) -> np.ndarray:
    """Binary codes for new samples, one feature matrix per view (raw scale)."""
    if len(features) < model.n_views:
        raise MissingViewError(f"model has {model.n_views} views, got {len(features)}")
    if len(features) > model.n_views:
        raise ShapeError(f"model has {model.n_views} views, got {len(features)}")
    views = []
    for m, (raw, st) in enumerate(zip(features, model.norm_stats)):
        raw = as_feature_matrix(raw, f"view {m}")
        if raw.shape[1] != model.dims[m]:
            raise ShapeError(f"view {m}: expected {model.dims[m]} columns, got {raw.shape[1]}")
        views.append(st.apply(raw))
    return update_codes(views, model.projections, model.mu)
