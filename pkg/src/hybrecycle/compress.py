"""Compression of a stored solution basis ``Vc`` (N x m) to at most ``q`` directions.

Two families: truncations of the projected matrix (TSVD, reduced basis
decomposition of ``Bhat^T``) and selections of columns driven by the
projected solution (solution-oriented, sparsity-enforcing).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .gkb import reorthogonalize

__all__ = [
    "Tsvd",
    "SolutionOriented",
    "Sparse",
    "Rbd",
    "CompressMethod",
    "compress_tsvd",
    "compress_solution",
    "compress_sparse",
    "compress_rbd",
    "select_columns",
    "tsvd_count",
    "rbd",
    "fista_l1",
    "compress",
]


@dataclass(frozen=True)
class Tsvd:
    q: int
    eps_tol: float = 1e-6


@dataclass(frozen=True)
class SolutionOriented:
    q: int
    eps_tol: float = 1e-6


@dataclass(frozen=True)
class Sparse:
    q: int
    eps_tol: float = 1e-6
    mu: float | None = None  # None: 0.01 * ||Bhat^T chat||_inf


@dataclass(frozen=True)
class Rbd:
    q: int
    eps_tol: float = 1e-6


CompressMethod = Union[Tsvd, SolutionOriented, Sparse, Rbd]


def tsvd_count(singvals, q: int, eps_tol: float) -> int:
    """Number of leading singular directions kept (at least one)."""
    s = np.asarray(singvals)
    q = min(q, len(s))
    if s[q - 1] >= eps_tol:
        return q
    above = np.nonzero(s >= eps_tol)[0]
    return int(above[-1]) + 1 if len(above) else 1


def compress_tsvd(Vc: np.ndarray, Bhat: np.ndarray, q: int, eps_tol: float) -> np.ndarray:
    """``W = Vc Phi_{k-1}`` with the leading right singular vectors of ``Bhat``."""
    _, s, Qt = np.linalg.svd(Bhat, full_matrices=False)
    keep = tsvd_count(s, q, eps_tol)
    return Vc @ Qt[:keep].T


def select_columns(y, q: int, eps_tol: float) -> list[int]:
    """Indices in ``{|y_i| > eps_tol} & {q largest |y_i|}``, ascending.

    Ties in magnitude go to the lower index; an empty intersection falls
    back to the single index of the largest ``|y_i|``.
    """
    a = np.abs(np.asarray(y, dtype=np.float64))
    order = np.argsort(-a, kind="stable")
    top = set(order[:q].tolist())
    chosen = sorted(i for i in top if a[i] > eps_tol)
    return chosen if chosen else [int(order[0])]


def compress_solution(Vc: np.ndarray, y, q: int, eps_tol: float) -> np.ndarray:
    return Vc[:, select_columns(y, q, eps_tol)]


def fista_l1(Bhat, chat, mu: float, max_iters: int = 500, tol: float = 1e-10,
             return_trace: bool = False):
    """Minimize ``||Bhat y - chat||^2 + mu ||y||_1`` with FISTA.

    Step ``1/L`` with ``L = 2 sigma_1^2``; momentum is reset whenever the
    objective would increase, which keeps the objective trace monotone.
    ``mu = 0`` is plain least squares and is solved directly.
    """
    B = np.asarray(Bhat, dtype=np.float64)
    c = np.asarray(chat, dtype=np.float64)
    if mu < 0:
        raise ValueError("mu must be nonnegative")

    def objective(v):
        r = B @ v - c
        return float(r @ r + mu * np.abs(v).sum())

    if mu == 0:
        y, *_ = np.linalg.lstsq(B, c, rcond=None)
        return (y, [objective(y)]) if return_trace else y

    L = 2.0 * np.linalg.norm(B, 2) ** 2
    if L == 0:
        y = np.zeros(B.shape[1])
        return (y, [objective(y)]) if return_trace else y
    thresh = mu / L

    def prox_grad(v):
        g = v - (2.0 / L) * (B.T @ (B @ v - c))
        return np.sign(g) * np.maximum(np.abs(g) - thresh, 0.0)

    y = np.zeros(B.shape[1])
    z, t = y.copy(), 1.0
    f_old = objective(y)
    trace = [f_old]
    for _ in range(max_iters):
        y_new = prox_grad(z)
        f_new = objective(y_new)
        if f_new > f_old:
            # restart: plain proximal step from the current iterate
            y_new = prox_grad(y)
            f_new = objective(y_new)
            t = 1.0
            z = y_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = y_new + ((t - 1.0) / t_new) * (y_new - y)
            t = t_new
        y = y_new
        trace.append(f_new)
        converged = abs(f_old - f_new) <= tol * max(abs(f_old), np.finfo(float).tiny)
        f_old = f_new
        if converged:
            break
    return (y, trace) if return_trace else y


def compress_sparse(Vc: np.ndarray, Bhat, chat, q: int, eps_tol: float,
                    mu: float | None = None) -> np.ndarray:
    """Column selection on the l1-regularized projected solution."""
    Bhat = np.asarray(Bhat, dtype=np.float64)
    chat = np.asarray(chat, dtype=np.float64)
    if mu is None:
        mu = 0.01 * float(np.max(np.abs(Bhat.T @ chat)))
    y = fista_l1(Bhat, chat, mu)
    return compress_solution(Vc, y, q, eps_tol)


def rbd(G: np.ndarray, q: int, eps_tol: float) -> tuple[np.ndarray, list[float]]:
    """Greedy reduced basis of the columns of ``G``.

    Returns the orthonormal basis ``S`` (one column per greedy pick) and the
    error trace ``E_i = max_j ||G_j - S_i S_i^T G_j||``.
    """
    G = np.asarray(G, dtype=np.float64)
    if not np.any(G):
        raise ValueError("cannot build a reduced basis of a zero matrix")
    scale = np.linalg.norm(G)
    S = np.zeros((G.shape[0], 0))
    errors: list[float] = []
    resid = G.copy()
    for _ in range(min(q, G.shape[0])):
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= 1e-14 * scale:
            break
        s = reorthogonalize(resid[:, j], S)
        S = np.column_stack([S, s / np.linalg.norm(s)])
        resid = G - S @ (S.T @ G)
        errors.append(float(np.max(np.linalg.norm(resid, axis=0))))
        if errors[-1] <= eps_tol:
            break
    return S, errors


def compress_rbd(Vc: np.ndarray, Bhat: np.ndarray, q: int, eps_tol: float) -> np.ndarray:
    S, _ = rbd(np.asarray(Bhat).T, q, eps_tol)
    return Vc @ S


def compress(Vc: np.ndarray, Bhat: np.ndarray, chat: np.ndarray, y: np.ndarray,
             method: CompressMethod) -> np.ndarray:
    """Dispatch on the compression method."""
    if isinstance(method, Tsvd):
        return compress_tsvd(Vc, Bhat, method.q, method.eps_tol)
    if isinstance(method, SolutionOriented):
        return compress_solution(Vc, y, method.q, method.eps_tol)
    if isinstance(method, Sparse):
        return compress_sparse(Vc, Bhat, chat, method.q, method.eps_tol, method.mu)
    if isinstance(method, Rbd):
        return compress_rbd(Vc, Bhat, method.q, method.eps_tol)
    raise TypeError(f"unknown compression method {method!r}")
