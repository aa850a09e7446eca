"""Curvilinear search on the Stiefel manifold ``{W : W^T W = I}``.

Iterates move along the Cayley curve

    W(tau) = (I + tau/2 K)^-1 (I - tau/2 K) W,   K = G W^T - W G^T,

which keeps every iterate orthonormal. ``K`` has rank at most ``2r`` so the
d x d inverse is replaced by a 2r x 2r solve (Sherman-Morrison-Woodbury).
Step sizes come from alternating Barzilai-Borwein formulas; a step is
accepted under a nonmonotone Armijo test against the worst of the last few
objective values.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError, NumericError

TAU_MIN = 1e-10
TAU_MAX = 1e2


class SmoothObjective(Protocol):
    def value(self, W: np.ndarray) -> float: ...

    def gradient(self, W: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FunctionObjective:
    """Wrap a pair of plain callables as a :class:`SmoothObjective`."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StiefelOptions:
    max_iters: int = 100
    grad_tol: float = 1e-5
    initial_step: float = 1e-3
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    nonmonotone_window: int = 5
    reorth_every: int = 50

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if not self.grad_tol > 0:
            raise ConfigError("grad_tol must be positive")
        if not self.initial_step > 0:
            raise ConfigError("initial_step must be positive")
        if not 0 < self.armijo_c < 1:
            raise ConfigError("armijo_c must lie in (0, 1)")
        if not 0 < self.step_shrink < 1:
            raise ConfigError("step_shrink must lie in (0, 1)")
        if self.nonmonotone_window < 1:
            raise ConfigError("nonmonotone_window must be >= 1")
        if self.reorth_every < 1:
            raise ConfigError("reorth_every must be >= 1")


def orthonormality_error(W: np.ndarray) -> float:
    r = W.shape[1]
    return float(np.abs(W.T @ W - np.eye(r)).max())


def orthonormalize(W: np.ndarray) -> np.ndarray:
    """Thin QR with a positive R diagonal."""
    Q, R = np.linalg.qr(W)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs


def projected_gradient(W: np.ndarray, G: np.ndarray) -> np.ndarray:
    WtG = W.T @ G
    return G - W @ (0.5 * (WtG + WtG.T))


def cayley_curve(W: np.ndarray, G: np.ndarray, tau: float) -> np.ndarray:
    """Point at parameter ``tau`` on the Cayley curve through ``W``.

    Raises :class:`NumericError` when the small system is singular or the
    result is not finite, which signals that ``tau`` is too large.
    """
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    if tau == 0:
        return W.copy()
    r = W.shape[1]
    U = np.hstack([G, W])
    V = np.hstack([W, -G])
    VtU = V.T @ U
    VtW = V.T @ W
    try:
        sol = np.linalg.solve(np.eye(2 * r) + 0.5 * tau * VtU, VtW)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cayley system singular at tau={tau}") from exc
    out = W - tau * (U @ sol)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"Cayley step not finite at tau={tau}")
    return out


def _checked(f: float) -> float:
    f = float(f)
    if not np.isfinite(f):
        raise NumericError(f"objective returned {f}")
    return f


def minimize(obj: SmoothObjective, W0: np.ndarray, opts: StiefelOptions | None = None):
    """Minimize ``obj`` over matrices with orthonormal columns, starting at ``W0``.

    Returns ``(W, trace)`` where ``trace`` holds the objective at the start
    point followed by every accepted iterate. The returned ``W`` is the best
    iterate seen, so its value never exceeds the starting value.
    """
    opts = opts or StiefelOptions()
    W = np.array(W0, dtype=np.float64)
    f = _checked(obj.value(W))
    G = obj.gradient(W)
    trace = [f]
    recent = deque([f], maxlen=opts.nonmonotone_window)
    best_W, best_f = W, f
    tau = opts.initial_step
    accepted = 0

    for it in range(opts.max_iters):
        if np.linalg.norm(projected_gradient(W, G)) <= opts.grad_tol:
            break
        # tangent direction K W, and the slope of f along the curve at tau=0
        KW = G - W @ (G.T @ W)
        slope = -float(np.sum(G * KW))
        if slope >= 0:
            break
        ref = max(recent)
        while True:
            try:
                W_new = cayley_curve(W, G, tau)
            except NumericError:
                W_new = None
            if W_new is not None:
                f_new = _checked(obj.value(W_new))
                if f_new <= ref + opts.armijo_c * tau * slope:
                    break
            tau *= opts.step_shrink
            if tau < TAU_MIN:
                W_new = None
                break
        if W_new is None:
            break

        accepted += 1
        if accepted % opts.reorth_every == 0:
            W_new = orthonormalize(W_new)
            f_new = _checked(obj.value(W_new))
        G_new = obj.gradient(W_new)

        step = W_new - W
        dy = (G_new - W_new @ (G_new.T @ W_new)) - KW
        sy = abs(float(np.sum(step * dy)))
        if sy > 0:
            if it % 2 == 0:
                tau = float(np.sum(step * step)) / sy
            else:
                tau = sy / float(np.sum(dy * dy))
        else:
            tau = opts.initial_step
        tau = min(max(tau, TAU_MIN), TAU_MAX)

        W, f, G = W_new, f_new, G_new
        trace.append(f)
        recent.append(f)
        if f < best_f:
            best_W, best_f = W, f

    return best_W, trace
