"""Anchor-graph affinity ``A = Z diag(lam)^-1 Z^T`` and per-view scatter matrices.

The n x n affinity is never formed during training; everything goes through
the n x P factor ``Z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataset import as_feature_matrix
from .errors import ConfigError, DegenerateError, ShapeError


def sq_distances(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of ``x`` and rows of ``c``."""
    d2 = (x * x).sum(1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


@dataclass(frozen=True)
class AnchorSet:
    centers: np.ndarray
    view_index: int = 0

    @property
    def P(self) -> int:
        return self.centers.shape[0]


def _kmeans_pp(x: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    norms = (x * x).sum(1)

    def to_point(i):
        d2 = norms - 2.0 * (x @ x[i]) + norms[i]
        return np.maximum(d2, 0.0, out=d2)

    chosen = [int(rng.integers(n))]
    closest = to_point(chosen[0])
    for _ in range(1, P):
        cum = np.cumsum(closest)
        if cum[-1] > 0:
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, n - 1)
        else:
            # every remaining point duplicates a chosen one
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(free.size)])
        chosen.append(idx)
        np.minimum(closest, to_point(idx), out=closest)
    return x[chosen].copy()


def select_anchors(x, P: int, seed: int = 0, max_iters: int = 20, view_index: int = 0) -> AnchorSet:
    """Pick ``P`` anchors with Lloyd's k-means from a seeded k-means++ start.

    A cluster that empties out is re-seeded with the point farthest from its
    current center.
    """
    x = as_feature_matrix(x)
    n = x.shape[0]
    if not 2 <= P <= n:
        raise ConfigError(f"anchor count must satisfy 2 <= P <= n={n}, got {P}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, P, rng)
    norms = (x * x).sum(1)
    assign = None
    for _ in range(max_iters):
        # row norms do not change the argmin
        partial = (centers * centers).sum(1)[None, :] - 2.0 * (x @ centers.T)
        new_assign = partial.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=P)
        onehot = sp.csr_matrix((np.ones(n), (assign, np.arange(n))), shape=(P, n))
        sums = np.asarray(onehot @ x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            far = partial[np.arange(n), assign] + norms
            for p in empty:
                i = int(far.argmax())
                centers[p] = x[i]
                far[i] = -1.0
    return AnchorSet(centers, view_index)


@dataclass(frozen=True)
class AnchorGraphFactor:
    """Row-stochastic sparse ``Z`` (n x P') and its column masses ``lam``.

    ``kept`` lists which of the original anchors survived (anchors that no
    sample picked are dropped so ``lam`` stays strictly positive).
    """

    Z: sp.csr_matrix
    lam: np.ndarray
    s: int
    sigma: float
    kept: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def affinity(self) -> np.ndarray:
        """Dense ``Z diag(lam)^-1 Z^T``; only sensible for small n."""
        Zd = self.Z.toarray()
        return (Zd / self.lam) @ Zd.T

    def laplacian(self) -> np.ndarray:
        return np.eye(self.n) - self.affinity()


def build_factor(x, anchors: AnchorSet, s: int = 3, bandwidth="auto") -> AnchorGraphFactor:
    """Connect every sample to its ``s`` nearest anchors with Gaussian weights.

    Weights are ``exp(-||x_i - c_p||^2 / sigma^2)`` normalized per row. With
    ``bandwidth="auto"``, sigma is the mean distance from a sample to its
    s-th nearest anchor. Ties in nearest-anchor order go to the lower index.
    """
    x = as_feature_matrix(x)
    c = anchors.centers
    if x.shape[1] != c.shape[1]:
        raise ShapeError(f"features have {x.shape[1]} columns, anchors {c.shape[1]}")
    P = c.shape[0]
    if not 1 <= s <= P:
        raise ConfigError(f"s must satisfy 1 <= s <= P={P}, got {s}")
    n = x.shape[0]
    d2 = sq_distances(x, c)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :s]
    rows = np.arange(n)[:, None]
    near_d2 = d2[rows, nearest]

    if bandwidth == "auto":
        sigma = float(np.sqrt(near_d2[:, -1]).mean())
        if sigma == 0.0:
            positive = d2[d2 > 0]
            if positive.size == 0:
                raise DegenerateError("all sample-anchor distances are zero; cannot pick a bandwidth")
            sigma = float(np.sqrt(positive).mean())
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise ConfigError(f"bandwidth must be positive, got {bandwidth}")

    # shifting by the row minimum cancels in the normalization and avoids underflow
    w = np.exp(-(near_d2 - near_d2[:, :1]) / sigma**2)
    w /= w.sum(axis=1, keepdims=True)
    Z = sp.csr_matrix((w.ravel(), nearest.ravel(), np.arange(0, n * s + 1, s)), shape=(n, P))
    Z.eliminate_zeros()
    mass = np.asarray(Z.sum(axis=0)).ravel()
    kept = np.flatnonzero(mass > 0)
    if kept.size < P:
        Z = Z[:, kept].tocsr()
    Z.sort_indices()
    lam = np.asarray(Z.sum(axis=0)).ravel()
    return AnchorGraphFactor(Z, lam, s, sigma, kept)


def scatter_matrix(x, f: AnchorGraphFactor) -> np.ndarray:
    """``X^T A X`` through the factor: ``(Z^T X)^T diag(lam)^-1 (Z^T X)``."""
    x = as_feature_matrix(x)
    if x.shape[0] != f.n:
        raise ShapeError(f"features have {x.shape[0]} rows, factor has {f.n}")
    Y = np.asarray(f.Z.T @ x)
    S = Y.T @ (Y / f.lam[:, None])
    return 0.5 * (S + S.T)
