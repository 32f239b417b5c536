"""Hybrid projection solvers under a hard storage budget.

``hybr`` is the plain hybrid method: GKB steps with a Tikhonov solve of the
projected problem at every iteration.  ``hybr_recycle`` alternates recycling
GKB extensions with compression so that no more than ``storage_limit``
solution-basis vectors (length ``N``) are ever held.  ``stream_solve`` runs
the multi-dataset workflows built from these two.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .compress import CompressMethod, Tsvd, compress
from .gkb import Breakdown, _square_bidiag, gkb_init, gkb_step
from .linops import LinearOp, stack
from .projreg import (
    DP,
    GCV,
    WGCV,
    LiftContext,
    OmegaHistory,
    RegMethod,
    Selection,
    _Filter,
    select_lambda,
    small_svd,
)
from .recycle import (
    NoExtensionNeeded,
    assemble_projected,
    build_Wk,
    lift_solution,
    recycle_init,
    recycle_step,
)

__all__ = [
    "MaxFill",
    "GcvFlat",
    "InnerStop",
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "StreamResult",
    "hybr",
    "hybr_recycle",
    "stream_solve",
    "storage_costs",
    "cost_hybr",
    "cost_recycle",
    "cost_bound",
    "APPROACH_NAMES",
]

CYCLE_TOL = 1e-6


@dataclass(frozen=True)
class MaxFill:
    """Extend until the storage budget is full."""


@dataclass(frozen=True)
class GcvFlat:
    """Stop extending once the GCV value changed by less than ``tol`` (relative)
    for ``window`` consecutive iterations."""

    tol: float = 1e-3
    window: int = 3


InnerStop = Union[MaxFill, GcvFlat]


@dataclass(frozen=True)
class SolverConfig:
    storage_limit: int
    compress: CompressMethod | None = None  # default: Tsvd(q = storage_limit // 2)
    reg: RegMethod = field(default_factory=GCV)
    reorth: bool = True
    max_cycles: int = 5
    inner_stop: InnerStop = field(default_factory=MaxFill)
    seed: int = 0

    def __post_init__(self):
        if self.storage_limit < 2:
            raise ValueError("storage_limit must be >= 2")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if self.compress is None:
            object.__setattr__(self, "compress", Tsvd(q=max(1, self.storage_limit // 2)))
        q = self.compress.q
        if not 1 <= q < self.storage_limit:
            raise ValueError(f"need 1 <= q < storage_limit, got q={q}")
        if not self.compress.eps_tol >= 0:
            raise ValueError("eps_tol must be nonnegative")
        if isinstance(self.inner_stop, GcvFlat) and self.inner_stop.window < 1:
            raise ValueError("gcv-flat window must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    cycle: int
    inner_iter: int
    lam: float
    projected_resnorm: float
    rel_error: float | None
    basis_count: int
    wall_time: float  # seconds since the solve started


@dataclass
class SolveResult:
    x: np.ndarray
    records: list
    W: np.ndarray | None = None  # compressed basis left for a later solve
    stopped: str = ""

    def __iter__(self):
        # allows ``x, records = hybr(...)``
        yield self.x
        yield self.records


@dataclass
class StreamResult:
    x: np.ndarray
    stage_solutions: list
    records: list

    def __iter__(self):
        yield self.x
        yield self.records


class _Tracker:
    """Per-solve bookkeeping: records, adaptive weight history, GCV plateau."""

    def __init__(self, config: SolverConfig, x_true, nrows: int, clock_start: float | None = None):
        self.config = config
        self.nrows = nrows
        self.x_true = None if x_true is None else np.asarray(x_true, dtype=np.float64)
        self.xt_norm = None if self.x_true is None else float(np.linalg.norm(self.x_true))
        self.omega = OmegaHistory()
        self.records: list[IterationRecord] = []
        self.t0 = time.perf_counter() if clock_start is None else clock_start
        self._gcv: list[float] = []

    def select(self, Bhat, chat, basis) -> Selection:
        lift = LiftContext(basis, self.x_true)
        svd = small_svd(Bhat)
        sel = select_lambda(Bhat, chat, self.config.reg, lift=lift, omega_history=self.omega, svd=svd)
        if isinstance(self.config.inner_stop, GcvFlat):
            # GCV of the full problem at this iterate; unlike the projected
            # functional its scale does not change with the iteration count
            flt = _Filter(Bhat, chat, svd)
            dof = self.nrows - float(np.sum(flt.phi(sel.lam)))
            self._gcv.append(self.nrows * flt.res2(sel.lam) / dof**2 if dof > 0 else math.inf)
        return sel

    def reset_plateau(self):
        self._gcv = []

    def plateau(self) -> bool:
        stop = self.config.inner_stop
        if not isinstance(stop, GcvFlat) or len(self._gcv) <= stop.window:
            return False
        tail = self._gcv[-(stop.window + 1):]
        return all(
            abs(b - a) <= stop.tol * max(abs(a), np.finfo(float).tiny)
            for a, b in zip(tail[:-1], tail[1:])
        )

    def rel_error(self, x) -> float | None:
        if self.x_true is None:
            return None
        return float(np.linalg.norm(x - self.x_true) / self.xt_norm)

    def record(self, cycle, inner, lam, resnorm, x, basis_count):
        if basis_count > self.config.storage_limit:
            raise AssertionError(f"storage budget exceeded: {basis_count} > {self.config.storage_limit}")
        self.records.append(
            IterationRecord(cycle, inner, float(lam), float(resnorm), self.rel_error(x),
                            int(basis_count), time.perf_counter() - self.t0)
        )


def _plain_cycle(A: LinearOp, b, tr: _Tracker, cycle: int, steps: int):
    """Plain hybrid iterations filling the budget.

    Returns ``(x, Vc, Bhat, chat, y, stopped)`` for the last iterate, where
    ``Vc`` is the solution basis and ``(Bhat, chat)`` its projected problem.
    """
    cfg = tr.config
    st = gkb_init(A, b)
    last = None
    stopped = "storage"
    for j in range(1, steps + 1):
        m_before = st.m
        try:
            gkb_step(st, A, reorth=cfg.reorth, extend=j < steps)
        except Breakdown:
            if st.m == m_before:
                # beta vanished: the square projected system is consistent, solve it exactly
                Bsq = _square_bidiag(st)
                k = Bsq.shape[0]
                y = np.linalg.solve(Bsq, st.rhs())
                Vc = st.V
                x = Vc @ y
                tr.record(cycle, k, 0.0, 0.0, x, st.n_stored)
                Bhat = np.vstack([Bsq, np.zeros((1, k))])
                chat = np.append(st.rhs(), 0.0)
                return x, Vc, Bhat, chat, y, "breakdown"
            stopped = "breakdown"
        Bm, c = st.Bm(), st.rhs()
        Vm = st.Vm
        sel = tr.select(Bm, c, Vm)
        x = Vm @ sel.y
        tr.record(cycle, st.m, sel.lam, float(np.linalg.norm(Bm @ sel.y - c)), x, st.n_stored)
        last = (x, Vm, Bm, c, sel.y)
        if stopped == "breakdown":
            break
        if tr.plateau():
            stopped = "gcv-flat"
            break
    return (*last, stopped)


def hybr(A: LinearOp, b, config: SolverConfig, x_true=None) -> SolveResult:
    """Plain hybrid projection method with at most ``storage_limit`` iterations.

    Returns the final iterate and one record per iteration.  A breakdown of
    the bidiagonalization ends the run early with the current iterate.
    """
    tr = _Tracker(config, x_true, A.nrows)
    x, *_, stopped = _plain_cycle(A, b, tr, 0, config.storage_limit)
    return SolveResult(x, tr.records, None, stopped)


def _effective_compress(config: SolverConfig) -> CompressMethod:
    # keep room for the appended solution direction and one recycling step
    q = min(config.compress.q, config.storage_limit - 2)
    return replace(config.compress, q=max(q, 1))


def hybr_recycle(A: LinearOp, b, W_init=None, x_init=None, config: SolverConfig | None = None,
                 x_true=None) -> SolveResult:
    """Hybrid projection with recycling and compression under ``storage_limit``.

    Without a starting basis and guess, the first cycle is a plain hybrid run
    that fills the budget.  Every later cycle deflates the current solution
    into the compressed basis, extends it with recycling GKB steps until the
    budget is full, solves the projected problem and compresses again.
    Stops after ``max_cycles`` cycles or when successive cycle solutions
    differ by less than ``1e-6`` relatively.
    """
    if config is None:
        raise ValueError("config is required")
    b = np.asarray(b, dtype=np.float64)
    m = config.storage_limit
    method = _effective_compress(config)
    tr = _Tracker(config, x_true, A.nrows)
    N = A.ncols

    W = np.zeros((N, 0)) if W_init is None else np.asarray(W_init, dtype=np.float64)
    if W.shape[0] != N:
        raise ValueError("W_init has the wrong number of rows")
    if W.shape[1] > m - 2:
        raise ValueError("W_init leaves no room for recycling steps")
    x = np.zeros(N) if x_init is None else np.asarray(x_init, dtype=np.float64)
    cycle = 0
    stopped = "max-cycles"

    if W.shape[1] == 0 and not np.any(x):
        x, Vc, Bhat, chat, y, why = _plain_cycle(A, b, tr, 0, m)
        W = compress(Vc, Bhat, chat, y, method)
        cycle = 1
        if why == "breakdown":
            return SolveResult(x, tr.records, W, "breakdown")

    while cycle < config.max_cycles:
        x_prev = x
        if np.any(x_prev):
            Wk = build_Wk(W, x_prev)
            if Wk.shape[1] > W.shape[1]:
                c0 = np.zeros(Wk.shape[1])
                c0[-1] = 1.0
            else:
                c0 = Wk.T @ x_prev
                c0 /= np.linalg.norm(c0)
        else:
            Wk, c0 = W, np.zeros(W.shape[1])
        if Wk.shape[1] == 0:
            raise ValueError("nothing to recycle: empty basis and zero starting guess")
        tr.reset_plateau()
        try:
            st = recycle_init(A, b, Wk, x0_coeffs=c0, reorth=config.reorth)
        except NoExtensionNeeded:
            stopped = "no-extension"
            break
        budget_steps = m - Wk.shape[1]
        sel = None
        why = "storage"
        for step in range(1, budget_steps + 1):
            ell_before = st.ell
            try:
                recycle_step(st, A, extend=step < budget_steps)
            except Breakdown:
                why = "breakdown"
                if st.ell == ell_before:
                    break
            prob = assemble_projected(st)
            sel = tr.select(prob.Bhat, prob.chat, st.basis)
            x = lift_solution(st, sel.y)
            tr.record(cycle, st.ell, sel.lam, prob.residual_norm(sel.y), x, st.n_stored)
            if why == "breakdown":
                break
            if tr.plateau():
                why = "gcv-flat"
                break
        if sel is None:
            stopped = "breakdown"
            break
        W = compress(st.basis, prob.Bhat, prob.chat, sel.y, method)
        cycle += 1
        nprev = np.linalg.norm(x_prev)
        if nprev > 0 and np.linalg.norm(x - x_prev) < CYCLE_TOL * nprev:
            stopped = "converged"
            break
        if why == "breakdown":
            stopped = "breakdown"
            break
    return SolveResult(x, tr.records, W, stopped)


APPROACH_NAMES = {
    1: "recycle-sequential",
    2: "last-dataset",
    3: "all-data",
    4: "average",
}


def _with_noise(config: SolverConfig, noise_norm: float | None) -> SolverConfig:
    """Swap in the dataset's noise norm for rules that use it."""
    if noise_norm is None:
        return config
    if isinstance(config.reg, DP):
        return replace(config, reg=replace(config.reg, noise_norm=noise_norm))
    if isinstance(config.reg, WGCV) and config.reg.noise_norm is not None:
        return replace(config, reg=replace(config.reg, noise_norm=noise_norm))
    return config


def stream_solve(problems: Sequence, config: SolverConfig, approach: int, x_true=None,
                 noise_norms: Sequence[float] | None = None) -> StreamResult:
    """Solve a sequence of datasets ``(A_i, b_i)`` sharing the unknown.

    Approaches: 1 carries the compressed basis from dataset to dataset with
    recycling; 2 solves the last dataset only; 3 solves the stacked problem
    with all data; 4 averages independent solutions.
    """
    problems = list(problems)
    if not problems:
        raise ValueError("empty problem list")
    n = problems[0][0].ncols
    if any(A.ncols != n for A, _ in problems):
        raise ValueError("all operators must share ncols")
    if noise_norms is not None and len(noise_norms) != len(problems):
        raise ValueError("need one noise norm per dataset")
    nn = list(noise_norms) if noise_norms is not None else [None] * len(problems)

    if approach == 1:
        records, stages = [], []
        A0, b0 = problems[0]
        tr = _Tracker(_with_noise(config, nn[0]), x_true, A0.nrows)
        x, Vc, Bhat, chat, y, _ = _plain_cycle(A0, b0, tr, 0, config.storage_limit)
        W = compress(Vc, Bhat, chat, y, _effective_compress(config))
        records.extend(tr.records)
        stages.append(x)
        cycle_offset = 1
        for (A, b), noise in zip(problems[1:], nn[1:]):
            r = hybr_recycle(A, b, W, x, _with_noise(config, noise), x_true)
            for rec in r.records:
                records.append(replace(rec, cycle=rec.cycle + cycle_offset))
            cycle_offset += max((rec.cycle for rec in r.records), default=-1) + 1
            x, W = r.x, r.W
            stages.append(x)
        return StreamResult(stages[-1], stages, records)

    if approach == 2:
        A, b = problems[-1]
        r = hybr(A, b, _with_noise(config, nn[-1]), x_true)
        return StreamResult(r.x, [r.x], r.records)

    if approach == 3:
        A = stack([A for A, _ in problems])
        b = np.concatenate([np.asarray(b, dtype=np.float64) for _, b in problems])
        noise = None if noise_norms is None else math.sqrt(sum(v * v for v in nn))
        r = hybr(A, b, _with_noise(config, noise), x_true)
        return StreamResult(r.x, [r.x], r.records)

    if approach == 4:
        xs, records = [], []
        for i, ((A, b), noise) in enumerate(zip(problems, nn)):
            r = hybr(A, b, _with_noise(config, noise), x_true)
            xs.append(r.x)
            records.extend(replace(rec, cycle=i) for rec in r.records)
        x = np.mean(xs, axis=0)
        return StreamResult(x, xs, records)

    raise ValueError(f"approach must be 1..4, got {approach}")


def cost_hybr(j: int, N: int, M: int) -> int:
    """Storage of ``j`` plain hybrid iterations: ``2j + (N+2)j + M``."""
    return 2 * j + (N + 2) * j + M


def cost_recycle(k: int, ell: int, N: int, M: int) -> float:
    """Storage of the recycling method with ``k`` recycled and ``ell`` new vectors."""
    return k * k / 2 + (N + M + 2) * k + 2 * ell + (N + 1) * ell + k * ell


def cost_bound(m: int, N: int, M: int) -> float:
    return m * m / 2 + (N + M + 2) * m


def storage_costs(N: int, M: int, j: int | None = None, k: int | None = None,
                  ell: int | None = None) -> tuple:
    """``(C_hybr, C_recycle, bound)``; pass ``j`` and/or ``(k, ell)``.

    Missing entries are ``None``; ``bound`` uses ``m = k + ell``.
    """
    if min(N, M) < 1:
        raise ValueError("dimensions must be positive")
    c_h = cost_hybr(j, N, M) if j is not None else None
    if k is not None and ell is not None:
        if k < 0 or ell < 0:
            raise ValueError("k and ell must be nonnegative")
        return c_h, cost_recycle(k, ell, N, M), cost_bound(k + ell, N, M)
    return c_h, None, None
