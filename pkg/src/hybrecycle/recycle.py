"""Recycling Golub-Kahan bidiagonalization and the projected problem it induces.

Given a recycled orthonormal basis ``W`` (N x k) and the skinny QR
``A W = Y R``, the process builds ``U~`` orthogonal to ``Y`` and ``V~`` such
that

    A [W  V~_l] = [Y  U~_{l+1}] [[R, C], [0, B~_l]],   C = Y^T A V~_l,

so Tikhonov problems restricted to ``range([W V~_l])`` reduce to a small
dense problem in ``Bhat = [[R, C], [0, B~_l]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gkb import BREAKDOWN_TOL, Bidiagonal, Breakdown, reorthogonalize
from .linops import LinearOp

__all__ = [
    "NoExtensionNeeded",
    "RankDeficient",
    "RecycleState",
    "ProjectedProblem",
    "build_Wk",
    "skinny_qr",
    "recycle_init",
    "recycle_step",
    "assemble_projected",
    "lift_solution",
]


class NoExtensionNeeded(Exception):
    """The residual already lies in ``range(Y)``; the recycled space suffices."""


class RankDeficient(ValueError):
    """``A W`` does not have full column rank."""


@dataclass
class RecycleState:
    W: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    zeta: np.ndarray
    beta1t: float
    x0_coeffs: np.ndarray  # starting guess in W coordinates (e_k for the deflated solution)
    Ut_cols: list = field(default_factory=list)
    Vt_cols: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    C_cols: list = field(default_factory=list)
    reorth: bool = True
    scale: float = 0.0

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def ell(self) -> int:
        """Completed recycling steps (columns of ``B~``)."""
        return len(self.betas)

    @property
    def extended(self) -> bool:
        return len(self.Vt_cols) == self.ell + 1

    @property
    def Ut(self) -> np.ndarray:
        return np.column_stack(self.Ut_cols)

    @property
    def Vt(self) -> np.ndarray:
        """``V~_l`` (the first ``ell`` right vectors)."""
        if self.ell == 0:
            return np.zeros((self.W.shape[0], 0))
        return np.column_stack(self.Vt_cols[: self.ell])

    @property
    def Bt(self) -> Bidiagonal:
        return Bidiagonal(np.array(self.alphas[: self.ell]), np.array(self.betas))

    @property
    def C(self) -> np.ndarray:
        if not self.C_cols:
            return np.zeros((self.k, 0))
        return np.column_stack(self.C_cols)

    @property
    def basis(self) -> np.ndarray:
        """Solution basis ``[W  V~_l]``."""
        return np.hstack([self.W, self.Vt])

    @property
    def n_stored(self) -> int:
        return self.k + len(self.Vt_cols)


@dataclass(frozen=True)
class ProjectedProblem:
    Bhat: np.ndarray
    chat: np.ndarray

    def residual_norm(self, y) -> float:
        return float(np.linalg.norm(self.chat - self.Bhat @ y))


def build_Wk(W_prev: np.ndarray | None, x1, tol: float = 1e-12) -> np.ndarray:
    """Append the normalized part of ``x1`` orthogonal to ``W_prev``.

    If ``x1`` already lies in ``range(W_prev)`` (relative residual below
    ``tol``), ``W_prev`` is returned unchanged.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    nx = np.linalg.norm(x1)
    if nx == 0.0:
        raise ValueError("x1 must be nonzero")
    if W_prev is None:
        W_prev = np.zeros((x1.shape[0], 0))
    r = reorthogonalize(x1, W_prev)
    nr = np.linalg.norm(r)
    if nr <= tol * nx:
        return W_prev.copy()
    return np.column_stack([W_prev, r / nr])


def skinny_qr(AW: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt QR with one reorthogonalization pass."""
    n, k = AW.shape
    Y = np.zeros((n, k))
    R = np.zeros((k, k))
    scale = np.linalg.norm(AW)
    for j in range(k):
        w = AW[:, j].copy()
        for _ in range(2):
            for i in range(j):
                h = Y[:, i] @ w
                R[i, j] += h
                w -= h * Y[:, i]
        R[j, j] = np.linalg.norm(w)
        if R[j, j] <= tol * scale:
            raise RankDeficient(f"A W is rank deficient at column {j + 1}")
        Y[:, j] = w / R[j, j]
    return Y, R


def recycle_init(A: LinearOp, b, W: np.ndarray, x0_coeffs=None, reorth: bool = True) -> RecycleState:
    """Start the recycling process from the recycled basis ``W``.

    ``x0_coeffs`` are the coordinates of the starting guess in ``W``; the
    default ``e_k`` takes the last column of ``W`` (the deflated previous
    solution).  Pass zeros to start from ``x = 0``.
    """
    b = np.asarray(b, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    k = W.shape[1]
    if x0_coeffs is None:
        x0_coeffs = np.zeros(k)
        if k:
            x0_coeffs[-1] = 1.0
    x0_coeffs = np.asarray(x0_coeffs, dtype=np.float64)
    AW = A.apply_columns(W) if k else np.zeros((A.nrows, 0))
    Y, R = skinny_qr(AW)
    r_check = b - Y @ (R @ x0_coeffs)  # b - A W c0
    zeta = Y.T @ r_check
    bt = r_check - Y @ zeta
    if reorth:
        dz = Y.T @ bt
        zeta = zeta + dz
        bt = bt - Y @ dz
    beta1t = float(np.linalg.norm(bt))
    if beta1t <= BREAKDOWN_TOL * np.linalg.norm(b):
        raise NoExtensionNeeded("residual lies in range(A W)")
    u1 = bt / beta1t
    z = A.apply_transpose(u1)
    if reorth:
        z = reorthogonalize(z, W)
    alpha1 = float(np.linalg.norm(z))
    if alpha1 <= BREAKDOWN_TOL * beta1t:
        raise Breakdown("alpha~_1 below breakdown threshold")
    st = RecycleState(
        W=W, Y=Y, R=R, zeta=zeta, beta1t=beta1t, x0_coeffs=x0_coeffs,
        Ut_cols=[u1], Vt_cols=[z / alpha1], alphas=[alpha1], reorth=reorth,
    )
    st.scale = max(alpha1, beta1t)
    return st


def recycle_step(state: RecycleState, A: LinearOp, reorth: bool | None = None,
                 extend: bool = True) -> RecycleState:
    """One recycling GKB step, in place.

    ``beta~ u~_{j+1} = (I - Y Y^T) A v~_j - alpha~_j u~_j`` and, if
    ``extend``, ``alpha~ v~_{j+1} = A^T u~_{j+1} - beta~ v~_j``.  With
    reorthogonalization the right recurrence is projected against ``W`` and
    both new vectors are reorthogonalized against the stored ones.
    """
    if reorth is None:
        reorth = state.reorth
    if not state.extended:
        raise ValueError("cannot step a state that was closed with extend=False")
    j = state.ell
    v, alpha, u_prev = state.Vt_cols[j], state.alphas[j], state.Ut_cols[j]
    Av = A.apply(v)
    c = state.Y.T @ Av
    w = Av - state.Y @ c - alpha * u_prev
    if reorth:
        w = reorthogonalize(w, np.hstack([state.Y, state.Ut]))
    beta = float(np.linalg.norm(w))
    scale = max(state.scale, alpha)
    if beta <= BREAKDOWN_TOL * scale:
        raise Breakdown(f"beta~_{j + 2} below breakdown threshold")
    u = w / beta
    state.C_cols.append(c)
    state.Ut_cols.append(u)
    state.betas.append(beta)
    state.scale = max(scale, beta)
    if extend:
        z = A.apply_transpose(u) - beta * v
        if reorth:
            z = reorthogonalize(z, np.hstack([state.W, np.column_stack(state.Vt_cols)]))
        alpha_next = float(np.linalg.norm(z))
        if alpha_next <= BREAKDOWN_TOL * state.scale:
            raise Breakdown(f"alpha~_{j + 2} below breakdown threshold")
        state.Vt_cols.append(z / alpha_next)
        state.alphas.append(alpha_next)
        state.scale = max(state.scale, alpha_next)
    return state


def assemble_projected(state: RecycleState) -> ProjectedProblem:
    """``Bhat = [[R, C], [0, B~]]`` and ``chat = [zeta + R c0; beta~_1 e_1]``."""
    k, ell = state.k, state.ell
    if ell < 1:
        raise ValueError("need at least one recycling step")
    Bhat = np.zeros((k + ell + 1, k + ell))
    Bhat[:k, :k] = state.R
    Bhat[:k, k:] = state.C
    Bhat[k:, k:] = state.Bt.to_dense()
    chat = np.zeros(k + ell + 1)
    chat[:k] = state.zeta + state.R @ state.x0_coeffs
    chat[k] = state.beta1t
    return ProjectedProblem(Bhat, chat)


def lift_solution(state: RecycleState, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    k, ell = state.k, state.ell
    if y.shape != (k + ell,):
        raise ValueError(f"expected coefficient vector of length {k + ell}, got {y.shape}")
    x = state.W @ y[:k]
    if ell:
        x = x + state.Vt @ y[k:]
    return x
