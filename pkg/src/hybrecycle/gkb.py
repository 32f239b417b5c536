"""Golub-Kahan bidiagonalization and LSQR iterates.

After ``m`` steps the state satisfies ``A V_m = U_{m+1} B_m`` with ``B_m``
lower bidiagonal of shape ``(m+1, m)``; the next right vector ``v_{m+1}``
and ``alpha_{m+1}`` are kept as well unless the step was asked not to
extend (used by drivers to stay inside a storage budget).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import LinearOp

__all__ = [
    "Breakdown",
    "Bidiagonal",
    "GkbState",
    "gkb_init",
    "gkb_step",
    "run_gkb",
    "lsqr_solve",
    "reorthogonalize",
    "BREAKDOWN_TOL",
]

BREAKDOWN_TOL = 1e-14


class Breakdown(ArithmeticError):
    """A normalization constant vanished: an invariant subspace was found."""


@dataclass(frozen=True)
class Bidiagonal:
    """Lower bidiagonal ``(m+1) x m`` matrix with diagonal ``alphas`` and subdiagonal ``betas``."""

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        if len(self.alphas) != len(self.betas):
            raise ValueError("Bidiagonal needs as many betas as alphas")

    @property
    def m(self) -> int:
        return len(self.alphas)

    def to_dense(self) -> np.ndarray:
        m = self.m
        B = np.zeros((m + 1, m))
        idx = np.arange(m)
        B[idx, idx] = self.alphas
        B[idx + 1, idx] = self.betas
        return B

    def fro_norm(self) -> float:
        return float(np.sqrt(np.sum(self.alphas**2) + np.sum(self.betas**2)))


def reorthogonalize(w: np.ndarray, Q: np.ndarray | None, passes: int = 2) -> np.ndarray:
    """Classical Gram-Schmidt of ``w`` against the columns of ``Q``, repeated ``passes`` times."""
    if Q is None or Q.shape[1] == 0:
        return w
    for _ in range(passes):
        w = w - Q @ (Q.T @ w)
    return w


@dataclass
class GkbState:
    """Factors of the bidiagonalization; single owner, mutated by :func:`gkb_step`."""

    U_cols: list = field(default_factory=list)
    V_cols: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    beta1: float = 0.0
    scale: float = 0.0  # running max of all alpha, beta (breakdown threshold)

    @property
    def m(self) -> int:
        """Number of completed steps (columns of ``B_m``)."""
        return len(self.betas)

    @property
    def extended(self) -> bool:
        """Whether ``v_{m+1}`` and ``alpha_{m+1}`` are stored."""
        return len(self.V_cols) == self.m + 1

    @property
    def U(self) -> np.ndarray:
        return np.column_stack(self.U_cols)

    @property
    def V(self) -> np.ndarray:
        """All stored right vectors (``V_m`` plus ``v_{m+1}`` when extended)."""
        return np.column_stack(self.V_cols)

    @property
    def Vm(self) -> np.ndarray:
        return np.column_stack(self.V_cols[: self.m]) if self.m else np.zeros((len(self.V_cols[0]), 0))

    @property
    def B(self) -> Bidiagonal:
        return Bidiagonal(np.array(self.alphas[: self.m]), np.array(self.betas))

    def Bm(self) -> np.ndarray:
        return self.B.to_dense()

    def L(self) -> np.ndarray:
        """``L_{m+1} = [B_m, alpha_{m+1} e_{m+1}]``, requires an extended state."""
        if not self.extended:
            raise ValueError("state was not extended; alpha_{m+1} unavailable")
        m = self.m
        out = np.zeros((m + 1, m + 1))
        out[:, :m] = self.Bm()
        out[m, m] = self.alphas[m]
        return out

    def rhs(self) -> np.ndarray:
        """``beta_1 e_1`` of length ``m + 1``."""
        c = np.zeros(self.m + 1)
        c[0] = self.beta1
        return c

    @property
    def n_stored(self) -> int:
        """Length-N vectors currently held."""
        return len(self.V_cols)


def _check_breakdown(value: float, scale: float, what: str) -> None:
    if value <= BREAKDOWN_TOL * scale:
        raise Breakdown(f"{what} = {value:.3e} below breakdown threshold")


def gkb_init(A: LinearOp, b) -> GkbState:
    b = np.asarray(b, dtype=np.float64)
    beta1 = float(np.linalg.norm(b))
    if beta1 == 0.0:
        raise ValueError("right-hand side is zero")
    u = b / beta1
    w = A.apply_transpose(u)
    alpha = float(np.linalg.norm(w))
    _check_breakdown(alpha, beta1, "alpha_1")
    st = GkbState(U_cols=[u], V_cols=[w / alpha], alphas=[alpha], beta1=beta1)
    st.scale = max(alpha, beta1)
    return st


def gkb_step(state: GkbState, A: LinearOp, reorth: bool = True, extend: bool = True) -> GkbState:
    """One GKB step, in place; returns ``state`` for chaining.

    Computes ``beta_{j+1} u_{j+1} = A v_j - alpha_j u_j`` and, when ``extend``,
    ``alpha_{j+1} v_{j+1} = A^T u_{j+1} - beta_{j+1} v_j``.  With ``reorth``
    every new vector is reorthogonalized twice against all stored vectors.
    Raises :class:`Breakdown` on a vanishing normalization constant.  A
    vanishing ``beta`` leaves the state untouched; a vanishing ``alpha``
    keeps the new ``u`` and ``beta`` but closes the state.
    """
    if not state.extended:
        raise ValueError("cannot step a state that was closed with extend=False")
    j = state.m
    v, alpha, u_prev = state.V_cols[j], state.alphas[j], state.U_cols[j]
    w = A.apply(v) - alpha * u_prev
    if reorth:
        w = reorthogonalize(w, state.U)
    beta = float(np.linalg.norm(w))
    scale = max(state.scale, alpha)
    _check_breakdown(beta, scale, f"beta_{j + 2}")
    u = w / beta
    state.U_cols.append(u)
    state.betas.append(beta)
    state.scale = max(scale, beta)
    if extend:
        z = A.apply_transpose(u) - beta * v
        if reorth:
            z = reorthogonalize(z, state.V)
        alpha_next = float(np.linalg.norm(z))
        # on failure the state keeps B_{j+1} but is closed
        _check_breakdown(alpha_next, state.scale, f"alpha_{j + 2}")
        state.V_cols.append(z / alpha_next)
        state.alphas.append(alpha_next)
        state.scale = max(state.scale, alpha_next)
    return state


def run_gkb(A: LinearOp, b, steps: int, reorth: bool = True) -> GkbState:
    """Run ``steps`` full GKB steps (stops quietly at breakdown)."""
    st = gkb_init(A, b)
    for _ in range(steps):
        try:
            gkb_step(st, A, reorth=reorth)
        except Breakdown:
            break
    return st


def lsqr_solve(A: LinearOp, b, iters: int, reorth: bool = True) -> list[np.ndarray]:
    """LSQR iterates ``x_j = V_j y_j``, ``y_j = argmin ||B_j y - beta_1 e_1||``, j = 1..iters.

    The small least-squares problem is re-solved densely at every step.
    Returns fewer iterates if the bidiagonalization breaks down; a breakdown
    in ``beta_{j+1}`` means ``x_j`` solves the problem, and it is returned.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    st = gkb_init(A, b)
    xs = []
    for j in range(iters):
        m_before = st.m
        try:
            gkb_step(st, A, reorth=reorth, extend=j + 1 < iters)
        except Breakdown:
            if st.m == m_before:
                # beta vanished: A V = U B is square, the exact solution lies in span(V)
                xs.append(st.V @ np.linalg.solve(_square_bidiag(st), st.rhs()))
                break
            y, *_ = np.linalg.lstsq(st.Bm(), st.rhs(), rcond=None)
            xs.append(st.Vm @ y)
            break
        y, *_ = np.linalg.lstsq(st.Bm(), st.rhs(), rcond=None)
        xs.append(st.Vm @ y)
    return xs


def _square_bidiag(st: GkbState) -> np.ndarray:
    """Square ``k x k`` bidiagonal after a vanishing ``beta_{k+1}``, with k = len(V)."""
    k = len(st.V_cols)
    Bsq = np.zeros((k, k))
    Bsq[np.arange(k), np.arange(k)] = st.alphas[:k]
    Bsq[np.arange(1, k), np.arange(k - 1)] = st.betas[: k - 1]
    return Bsq
