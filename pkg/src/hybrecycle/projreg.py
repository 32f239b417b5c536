"""Tikhonov solves of small projected problems and regularization-parameter choice.

All functionals are evaluated through one SVD ``Bhat = P diag(s) Q^T`` of the
projected matrix.  With ``d = P^T chat`` and filter factors
``phi_i = s_i^2 / (s_i^2 + lam^2)``:

* GCV(lam)   = n_r ||r||^2 / (n_r - sum phi)^2
* WGCV(lam)  = n_r ||r||^2 / (n_r - omega sum phi)^2
* UPRE(lam)  = ||r||^2 / n_r + 2 var / n_r sum phi - var
* DP         : ||r(lam)|| = tau * noise_norm, solved by bisection
* Optimal    : minimizes ||lift(y_lam) - x_true||

where ``n_r`` is the number of rows of ``Bhat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "SmallSvd",
    "small_svd",
    "Optimal",
    "GCV",
    "WGCV",
    "UPRE",
    "DP",
    "RegMethod",
    "LiftContext",
    "OmegaHistory",
    "Selection",
    "tikhonov_projected",
    "select_lambda",
    "lambda_grid",
    "gcv_value",
    "wgcv_stationary_omega",
    "GRID_POINTS",
]

GRID_POINTS = 200
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SmallSvd:
    left: np.ndarray  # (n_r, n_r)
    singvals: np.ndarray  # descending, length p
    right: np.ndarray  # (p, p)

    @property
    def sigma1(self) -> float:
        return float(self.singvals[0]) if len(self.singvals) else 0.0


def small_svd(B: np.ndarray) -> SmallSvd:
    P, s, Qt = np.linalg.svd(np.asarray(B, dtype=np.float64), full_matrices=True)
    return SmallSvd(P, s, Qt.T)


@dataclass(frozen=True)
class Optimal:
    """Error-minimizing parameter; needs a :class:`LiftContext` with ``x_true``."""


@dataclass(frozen=True)
class GCV:
    pass


@dataclass(frozen=True)
class WGCV:
    """Weighted GCV; ``omega=None`` selects the adaptive weight.

    The adaptive weight at each call is the running mean of the weights that
    make WGCV stationary at a reference parameter: the optimal one if a
    ``x_true`` is known, else the discrepancy-principle one if
    ``noise_norm`` is known, else plain GCV (``omega = 1``).  References
    below the smallest singular value of the projected matrix contribute
    no sample.
    """

    omega: float | None = None
    noise_norm: float | None = None
    tau: float = 1.01


@dataclass(frozen=True)
class UPRE:
    noise_variance: float


@dataclass(frozen=True)
class DP:
    noise_norm: float
    tau: float = 1.01


RegMethod = Union[Optimal, GCV, WGCV, UPRE, DP]


@dataclass
class LiftContext:
    """Maps projected coefficients to ``x = basis @ y`` and measures the error."""

    basis: np.ndarray
    x_true: np.ndarray | None = None

    def __post_init__(self):
        if self.x_true is not None:
            self._gram = self.basis.T @ self.basis
            self._proj = self.basis.T @ self.x_true
            self._xx = float(self.x_true @ self.x_true)

    def lift(self, y) -> np.ndarray:
        return self.basis @ y

    def error(self, y) -> float:
        """``||basis y - x_true||`` without forming the lifted vector."""
        e2 = y @ self._gram @ y - 2.0 * (y @ self._proj) + self._xx
        return math.sqrt(max(e2, 0.0))


@dataclass
class OmegaHistory:
    """Per-solve memory for the adaptive WGCV weight."""

    values: list = field(default_factory=list)

    @property
    def current(self) -> float:
        return float(np.mean(self.values)) if self.values else 1.0


@dataclass(frozen=True)
class Selection:
    lam: float
    y: np.ndarray
    flagged: bool = False
    omega: float | None = None
    value: float | None = None  # functional value at lam (if applicable)


class _Filter:
    """Fast evaluation of Tikhonov quantities through a shared SVD."""

    def __init__(self, Bhat, chat, svd: SmallSvd | None = None):
        self.Bhat = np.asarray(Bhat, dtype=np.float64)
        self.chat = np.asarray(chat, dtype=np.float64)
        self.svd = svd or small_svd(self.Bhat)
        s = self.svd.singvals
        self.n_rows = self.Bhat.shape[0]
        tol = max(self.Bhat.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
        self.s = np.where(s > tol, s, 0.0)
        d = self.svd.left.T @ self.chat
        self.d = d[: len(s)]
        self.tail2 = float(d[len(s):] @ d[len(s):])

    def phi(self, lam):
        s2 = self.s**2
        if lam == 0.0:
            return (s2 > 0).astype(float)
        return s2 / (s2 + lam**2)

    def coeffs(self, lam):
        s = self.s
        if lam == 0.0:
            f = np.divide(1.0, s, out=np.zeros_like(s), where=s > 0)
        else:
            f = s / (s**2 + lam**2)
        return f * self.d

    def solve(self, lam):
        return self.svd.right @ self.coeffs(lam)

    def res2(self, lam):
        one_minus = 1.0 - self.phi(lam)
        return float(np.sum((one_minus * self.d) ** 2) + self.tail2)

    def derivatives(self, lam):
        """(d||r||^2/dlam, d(sum phi)/dlam)."""
        s2 = self.s**2
        denom = (s2 + lam**2) ** 2
        dphi = np.divide(-2.0 * lam * s2, denom, out=np.zeros_like(s2), where=denom > 0)
        return float(np.sum(2.0 * (1.0 - self.phi(lam)) * (-dphi) * self.d**2)), float(np.sum(dphi))


def tikhonov_projected(Bhat, chat, lam: float, svd: SmallSvd | None = None) -> tuple[np.ndarray, float]:
    """Solve ``min ||Bhat y - chat||^2 + lam^2 ||y||^2`` by SVD filtering.

    ``lam = 0`` gives the minimum-norm least-squares solution.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    flt = _Filter(Bhat, chat, svd)
    y = flt.solve(float(lam))
    return y, float(np.linalg.norm(flt.Bhat @ y - flt.chat))


def lambda_grid(sigma1: float, points: int = GRID_POINTS) -> np.ndarray:
    return np.logspace(math.log10(1e-10 * sigma1), math.log10(sigma1), points)


def gcv_value(flt: _Filter, lam: float, omega: float = 1.0) -> float:
    denom = flt.n_rows - omega * float(np.sum(flt.phi(lam)))
    if denom <= 0:
        return math.inf
    return flt.n_rows * flt.res2(lam) / denom**2


def wgcv_stationary_omega(flt: _Filter, lam: float) -> float | None:
    """Weight for which d/dlam WGCV vanishes at ``lam`` (None if undefined)."""
    g = flt.res2(lam)
    dg, dt = flt.derivatives(lam)
    t = float(np.sum(flt.phi(lam)))
    denom = dg * t - 2.0 * dt * g
    if not denom > 0 or not dg > 0:
        return None
    omega = dg * flt.n_rows / denom
    return omega if math.isfinite(omega) and omega > 0 else None


def _golden_min(f, a: float, b: float, iters: int = 60) -> tuple[float, float]:
    """Golden-section search on ``[a, b]``; returns (argmin, min)."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
        if abs(b - a) < 1e-12:
            break
    return (c, fc) if fc <= fd else (d, fd)


def _grid_then_golden(func, sigma1: float) -> tuple[float, float]:
    grid = lambda_grid(sigma1)
    vals = np.array([func(lam) for lam in grid])
    i = int(np.argmin(vals))
    logs = np.log(grid)
    lo, hi = logs[max(i - 1, 0)], logs[min(i + 1, len(grid) - 1)]
    t, v = _golden_min(lambda t: func(math.exp(t)), lo, hi)
    if v <= vals[i]:
        return math.exp(t), v
    return float(grid[i]), float(vals[i])


def _discrepancy(flt: _Filter, target: float) -> tuple[float, bool]:
    """Bisection (in log lam) for ||r(lam)|| = target; returns (lam, flagged)."""
    if math.sqrt(flt.res2(0.0)) >= target:
        return 0.0, False
    grid = lambda_grid(flt.svd.sigma1)
    lo, hi = grid[0], grid[-1]
    r_lo, r_hi = math.sqrt(flt.res2(lo)), math.sqrt(flt.res2(hi))
    if r_lo >= target:
        return float(lo), False
    if r_hi < target:
        # infeasible inside the grid; both ends undershoot
        return float(hi), True
    a, b = math.log(lo), math.log(hi)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if math.sqrt(flt.res2(math.exp(mid))) < target:
            a = mid
        else:
            b = mid
        if b - a < 1e-14:
            break
    return math.exp(0.5 * (a + b)), False


def select_lambda(Bhat, chat, method: RegMethod, lift: LiftContext | None = None,
                  omega_history: OmegaHistory | None = None,
                  svd: SmallSvd | None = None) -> Selection:
    """Pick ``lam`` by ``method`` and return it with the projected solution."""
    flt = _Filter(Bhat, chat, svd)
    sigma1 = flt.svd.sigma1
    if not sigma1 > 0:
        raise ValueError("projected matrix is zero")

    if isinstance(method, DP):
        lam, flagged = _discrepancy(flt, method.tau * method.noise_norm)
        return Selection(lam, flt.solve(lam), flagged=flagged)

    if isinstance(method, Optimal):
        if lift is None or lift.x_true is None:
            raise ValueError("the optimal parameter needs x_true")
        lam, val = _grid_then_golden(lambda t: lift.error(flt.solve(t)), sigma1)
        return Selection(lam, flt.solve(lam), value=val)

    if isinstance(method, GCV):
        lam, val = _grid_then_golden(lambda t: gcv_value(flt, t), sigma1)
        return Selection(lam, flt.solve(lam), value=val, omega=1.0)

    if isinstance(method, UPRE):
        var = method.noise_variance
        n = flt.n_rows

        def upre(t):
            return flt.res2(t) / n + 2.0 * var / n * float(np.sum(flt.phi(t))) - var

        lam, val = _grid_then_golden(upre, sigma1)
        return Selection(lam, flt.solve(lam), value=val)

    if isinstance(method, WGCV):
        if method.omega is not None:
            omega = float(method.omega)
        else:
            ref = None
            if lift is not None and lift.x_true is not None:
                ref, _ = _grid_then_golden(lambda t: lift.error(flt.solve(t)), sigma1)
            elif method.noise_norm is not None:
                ref, _ = _discrepancy(flt, method.tau * method.noise_norm)
            hist = omega_history if omega_history is not None else OmegaHistory()
            # a reference below the smallest singular value leaves the
            # solution essentially unfiltered; WGCV is then flat in omega
            active = flt.s[flt.s > 0]
            if ref is not None and len(active) and ref >= active[-1]:
                w = wgcv_stationary_omega(flt, ref)
                if w is not None:
                    hist.values.append(w)
            omega = hist.current
        lam, val = _grid_then_golden(lambda t: gcv_value(flt, t, omega), sigma1)
        return Selection(lam, flt.solve(lam), value=val, omega=omega)

    raise TypeError(f"unknown regularization method {method!r}")
