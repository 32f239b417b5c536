"""Matrix-free linear operators.

Every solver in the package only touches the forward map through
:meth:`LinearOp.apply` and :meth:`LinearOp.apply_transpose`, so operators can
be dense matrices, convolutions or ray-tracing projectors alike.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "LinearOp",
    "DenseMatrix",
    "IdentityOp",
    "ZeroOp",
    "StackedOp",
    "apply",
    "apply_transpose",
    "stack",
    "materialize",
    "adjoint_mismatch",
    "estimate_norm",
    "MATERIALIZE_LIMIT",
]

MATERIALIZE_LIMIT = 10_000_000


class LinearOp:
    """Abstract linear map from R^ncols to R^nrows.

    Subclasses implement ``_matvec`` and ``_rmatvec`` on 1-D float64 arrays.
    Instances are immutable once built, so a single operator may be shared by
    several solver states or threads.
    """

    def __init__(self, nrows: int, ncols: int):
        if nrows < 1 or ncols < 1:
            raise ValueError(f"operator dimensions must be positive, got {nrows}x{ncols}")
        self._shape = (int(nrows), int(ncols))

    @property
    def nrows(self) -> int:
        return self._shape[0]

    @property
    def ncols(self) -> int:
        return self._shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ncols,):
            raise ValueError(f"apply: expected vector of length {self.ncols}, got shape {x.shape}")
        return self._matvec(x)

    def apply_transpose(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.nrows,):
            raise ValueError(
                f"apply_transpose: expected vector of length {self.nrows}, got shape {y.shape}"
            )
        return self._rmatvec(y)

    def apply_columns(self, X: np.ndarray) -> np.ndarray:
        """Apply the operator to each column of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((self.nrows, X.shape[1]))
        for j in range(X.shape[1]):
            out[:, j] = self.apply(X[:, j])
        return out

    def apply_transpose_columns(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        out = np.empty((self.ncols, Y.shape[1]))
        for j in range(Y.shape[1]):
            out[:, j] = self.apply_transpose(Y[:, j])
        return out

    def _matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _rmatvec(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.nrows}x{self.ncols}>"


class DenseMatrix(LinearOp):
    """Operator backed by an explicit 2-D array (row-major float64)."""

    def __init__(self, values):
        values = np.array(values, dtype=np.float64, order="C")
        if values.ndim != 2:
            raise ValueError("DenseMatrix needs a 2-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("DenseMatrix entries must be finite")
        super().__init__(*values.shape)
        values.setflags(write=False)
        self.values = values

    def _matvec(self, x):
        return self.values @ x

    def _rmatvec(self, y):
        return self.values.T @ y


class IdentityOp(LinearOp):
    def __init__(self, n: int):
        super().__init__(n, n)

    def _matvec(self, x):
        return x.copy()

    def _rmatvec(self, y):
        return y.copy()


class ZeroOp(LinearOp):
    def _matvec(self, x):
        return np.zeros(self.nrows)

    def _rmatvec(self, y):
        return np.zeros(self.ncols)


class StackedOp(LinearOp):
    """Vertical concatenation ``[A_1; A_2; ...; A_r]`` of operators with equal ``ncols``."""

    def __init__(self, ops: Sequence[LinearOp]):
        ops = tuple(ops)
        if not ops:
            raise ValueError("stack needs at least one operator")
        ncols = ops[0].ncols
        if any(op.ncols != ncols for op in ops):
            raise ValueError("stacked operators must share ncols")
        super().__init__(sum(op.nrows for op in ops), ncols)
        self.ops = ops
        self._offsets = np.cumsum([0] + [op.nrows for op in ops])

    def _matvec(self, x):
        return np.concatenate([op.apply(x) for op in self.ops])

    def _rmatvec(self, y):
        out = np.zeros(self.ncols)
        for op, lo, hi in zip(self.ops, self._offsets[:-1], self._offsets[1:]):
            out += op.apply_transpose(y[lo:hi])
        return out


def apply(op: LinearOp, x) -> np.ndarray:
    return op.apply(x)


def apply_transpose(op: LinearOp, y) -> np.ndarray:
    return op.apply_transpose(y)


def stack(ops: Sequence[LinearOp]) -> LinearOp:
    """Stack operators vertically; a single operator is returned unchanged."""
    ops = list(ops)
    if len(ops) == 1:
        return ops[0]
    return StackedOp(ops)


def materialize(op: LinearOp) -> DenseMatrix:
    """Build the dense matrix of ``op`` column by column (test oracle)."""
    if op.nrows * op.ncols > MATERIALIZE_LIMIT:
        raise ValueError(
            f"refusing to materialize {op.nrows}x{op.ncols} operator "
            f"(limit {MATERIALIZE_LIMIT} entries)"
        )
    if isinstance(op, DenseMatrix):
        return op
    cols = np.empty((op.nrows, op.ncols))
    e = np.zeros(op.ncols)
    for j in range(op.ncols):
        e[j] = 1.0
        cols[:, j] = op.apply(e)
        e[j] = 0.0
    return DenseMatrix(cols)


def estimate_norm(op: LinearOp, iters: int = 30, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm ``||A||_2``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.ncols)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        z = op.apply_transpose(op.apply(x))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        sigma = np.sqrt(nz)
        x = z / nz
    return float(sigma)


def adjoint_mismatch(op: LinearOp, trials: int = 10, seed: int = 0) -> float:
    """Largest scaled gap ``|<Ax, y> - <x, A^T y>| / (||x|| ||y|| ||A||)`` over random pairs."""
    rng = np.random.default_rng(seed)
    norm_a = max(estimate_norm(op, seed=seed), np.finfo(float).tiny)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.ncols)
        y = rng.standard_normal(op.nrows)
        gap = abs(np.dot(op.apply(x), y) - np.dot(x, op.apply_transpose(y)))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y) * norm_a))
    return worst
