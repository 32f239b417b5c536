"""Numerical checks relating a recycled run to a reference GKB run.

Setting: ``m`` plain GKB steps, compression of ``V_m`` to ``W`` (``k``
columns, the last one the deflated regularized solution), then ``ell``
recycling steps.  A reference run of ``m + ell`` plain steps on the same
``(A, b)`` gives ``U = U_{m+ell+1}``, ``V = V_{m+ell}`` and ``B = B_{m+ell}``.
The recycled bases lie inside the reference ones, so coordinates
``T1 = U^T Y``, ``T2 = U^T U~``, ``Z1 = V^T W``, ``Z2 = V^T V~`` exist and
``[T1 T2]^T B [Z1 Z2] = Bhat``.  The functions here measure that structure,
the residual bound for TSVD compression, the singular value interlacing and
the Frobenius gap, and the squared-norm gap between the trailing blocks of
``B`` and ``B~``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compress import compress_tsvd
from .gkb import GkbState, run_gkb
from .linops import LinearOp
from .projreg import GCV, RegMethod, select_lambda, tikhonov_projected
from .recycle import RecycleState, assemble_projected, build_Wk, recycle_init, recycle_step

__all__ = [
    "ContainmentError",
    "TransformPair",
    "TsvdPipeline",
    "ResidualBound",
    "build_transforms",
    "lemma_blocks",
    "residual_bound",
    "interlacing_check",
    "frob_gap",
    "conjecture_gap",
    "alpha_trend",
    "subspace_containment",
    "sigma1_estimate",
    "tsvd_pipeline",
    "verification_report",
    "BLOCK_NAMES",
]

CONTAINMENT_TOL = 1e-6


class ContainmentError(ArithmeticError):
    """A recycled basis is not contained in the reference Krylov basis."""


@dataclass(frozen=True)
class TransformPair:
    T1: np.ndarray
    T2: np.ndarray
    Tc: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    Zc: np.ndarray
    reconstruction: float  # worst ||X - basis @ coords||_F over Y, U~, W, V~

    @property
    def T(self) -> np.ndarray:
        return np.hstack([self.T1, self.T2, self.Tc])

    @property
    def Z(self) -> np.ndarray:
        return np.hstack([self.Z1, self.Z2, self.Zc])


def subspace_containment(small: np.ndarray, big: np.ndarray) -> float:
    """Largest principal angle between ``range(small)`` and ``range(big)``.

    Both inputs have orthonormal columns.  Zero means ``range(small)`` is
    contained in ``range(big)``.  Sine and cosine are both measured and
    combined with ``atan2``, which keeps full accuracy near 0 and near pi/2.
    """
    small = np.asarray(small, dtype=np.float64)
    big = np.asarray(big, dtype=np.float64)
    if small.shape[1] == 0:
        return 0.0
    if small.shape[1] > big.shape[1]:
        raise ValueError("small has more columns than big")
    coords = big.T @ small
    sine = np.linalg.norm(small - big @ coords, 2)
    cosine = np.linalg.svd(coords, compute_uv=False)[-1]
    return float(math.atan2(sine, cosine))


def _complement(Q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n, p = Q.shape
    if p >= n:
        return np.zeros((n, 0))
    basis, _ = np.linalg.qr(Q)
    G = rng.standard_normal((n, n - p))
    for _ in range(2):
        G = G - basis @ (basis.T @ G)
    Qc, _ = np.linalg.qr(G)
    return Qc


def build_transforms(full: GkbState, rec: RecycleState, seed: int = 0) -> TransformPair:
    """Coordinates of the recycled bases in the reference bases, plus complements.

    Raises :class:`ContainmentError` if a recycled basis is not reproduced
    by its coordinates to ``1e-6`` (Frobenius).
    """
    U, V = full.U, full.Vm
    Ut, Vt = np.column_stack(rec.Ut_cols), rec.Vt
    T1, T2 = U.T @ rec.Y, U.T @ Ut
    Z1, Z2 = V.T @ rec.W, V.T @ Vt
    errs = [
        np.linalg.norm(rec.Y - U @ T1),
        np.linalg.norm(Ut - U @ T2),
        np.linalg.norm(rec.W - V @ Z1),
        np.linalg.norm(Vt - V @ Z2) if Vt.shape[1] else 0.0,
    ]
    worst = float(max(errs))
    if worst > CONTAINMENT_TOL:
        raise ContainmentError(f"recycled basis leaves the reference Krylov space (residual {worst:.3e})")
    rng = np.random.Generator(np.random.Philox(seed))
    Tc = _complement(np.hstack([T1, T2]), rng)
    Zc = _complement(np.hstack([Z1, Z2]), rng)
    return TransformPair(T1, T2, Tc, Z1, Z2, Zc, worst)


BLOCK_NAMES = ("T1_B_Z1_minus_R", "T1_B_Z2_minus_C", "T2_B_Z1", "T2_B_Z2_minus_Bt", "Tc_B_Z1", "Tc_B_Z2")


def lemma_blocks(pair: TransformPair, full: GkbState, rec: RecycleState) -> dict:
    """Frobenius norms of the six blocks that the block structure says vanish."""
    B = full.Bm()
    ell = rec.ell
    Bt = rec.Bt.to_dense() if ell else np.zeros((1, 0))
    vals = (
        pair.T1.T @ B @ pair.Z1 - rec.R,
        pair.T1.T @ B @ pair.Z2 - rec.C,
        pair.T2.T @ B @ pair.Z1,
        pair.T2.T @ B @ pair.Z2 - Bt,
        pair.Tc.T @ B @ pair.Z1,
        pair.Tc.T @ B @ pair.Z2,
    )
    return {name: float(np.linalg.norm(v)) for name, v in zip(BLOCK_NAMES, vals)}


@dataclass(frozen=True)
class ResidualBound:
    rhat_norm: float
    r_norm: float  # normal-equation residual of the full transformed problem
    r_equality: float  # ||Zc^T B^T [T1 T2] rhat||
    frob_exact: float  # ||Zc^T B^T [T1 T2]||_F, the exact factor the bound estimates
    bound: float
    radicand: float
    flagged: bool  # radicand was negative and clamped


def _split(full: GkbState, rec: RecycleState) -> tuple[int, int, int]:
    ell = rec.ell
    m = full.m - ell
    if m < 1:
        raise ValueError("reference run is shorter than the recycling run")
    return m, rec.k, ell


def residual_bound(rec: RecycleState, full: GkbState, lam: float, pair: TransformPair | None = None,
                   y: np.ndarray | None = None) -> ResidualBound:
    """Residual of ``[y~; 0]`` for the regularized full transformed problem and its bound.

    ``y`` overrides the projected Tikhonov solution (used to inject faults).
    Needs ``alpha_{m+1}`` from ``full`` and ``alpha~_{ell+1}`` from ``rec``,
    so both runs must be extended.
    """
    if not rec.extended or len(full.alphas) <= full.m - rec.ell:
        raise ValueError("both runs must keep their next alpha")
    if pair is None:
        pair = build_transforms(full, rec)
    m, k, ell = _split(full, rec)
    prob = assemble_projected(rec)
    if y is None:
        y, _ = tikhonov_projected(prob.Bhat, prob.chat, lam)
    rhat = prob.chat - prob.Bhat @ y

    B = full.Bm()
    T, Z = pair.T, pair.Z
    Bt = T.T @ B @ Z
    ct = T.T @ full.rhs()
    z = np.concatenate([y, np.zeros(Z.shape[1] - len(y))])
    r = Bt.T @ ct - (Bt.T @ (Bt @ z) + lam**2 * z)

    T12 = np.hstack([pair.T1, pair.T2])
    K = pair.Zc.T @ B.T @ T12
    r_eq = float(np.linalg.norm(K @ rhat))

    sig = np.linalg.svd(B[: m + 1, :m], compute_uv=False)
    sigma_k = sig[k - 1] if k <= len(sig) else 0.0
    r_kk = rec.R[k - 1, k - 1]
    radicand = (sigma_k**2 - r_kk**2 + full.alphas[m] ** 2
                - np.linalg.norm(rec.C) ** 2 + rec.alphas[ell] ** 2)
    flagged = radicand < 0
    bound = float(np.linalg.norm(rhat) * math.sqrt(max(radicand, 0.0)))
    return ResidualBound(float(np.linalg.norm(rhat)), float(np.linalg.norm(r)), r_eq,
                         float(np.linalg.norm(K)), bound, float(radicand), bool(flagged))


def interlacing_check(B_full: np.ndarray, Bhat: np.ndarray) -> float:
    """Largest violation of ``s_{m-k+j}(B_full) <= s_j(Bhat) <= s_j(B_full)``.

    ``m - k`` is the difference in column counts.  Negative means satisfied.
    """
    sf = np.linalg.svd(np.asarray(B_full), compute_uv=False)
    sh = np.linalg.svd(np.asarray(Bhat), compute_uv=False)
    p = np.asarray(Bhat).shape[1]
    shift = np.asarray(B_full).shape[1] - p
    if shift < 0:
        raise ValueError("Bhat has more columns than B_full")
    sf = np.concatenate([sf, np.zeros(np.asarray(B_full).shape[1] - len(sf))])
    sh = np.concatenate([sh, np.zeros(p - len(sh))])
    upper = sh - sf[:p]
    lower = sf[shift: shift + p] - sh
    return float(max(upper.max(), lower.max()))


def frob_gap(B_full: np.ndarray, Bhat: np.ndarray, sigma_k: float, alpha_m1: float,
             Bbar_ell: np.ndarray) -> tuple[float, float]:
    """``(||B_full||_F - ||Bhat||_F, max(sigma_k, ||Bbar||_F) (m-k) + |alpha_{m+1}|)``."""
    lhs = float(np.linalg.norm(B_full) - np.linalg.norm(Bhat))
    m_minus_k = np.asarray(B_full).shape[1] - np.asarray(Bhat).shape[1]
    rhs = float(max(sigma_k, np.linalg.norm(Bbar_ell)) * m_minus_k + abs(alpha_m1))
    return lhs, rhs


def conjecture_gap(full: GkbState, rec: RecycleState) -> dict:
    """Squared Frobenius norms of the trailing block of ``B_{m+ell}`` and of ``B~``.

    The trailing block is rows ``m+1..m+ell+1`` and columns ``m+1..m+ell``
    of ``B_{m+ell}`` (it starts with ``alpha_{m+1}``).
    """
    m, k, ell = _split(full, rec)
    if ell < 1:
        raise ValueError("needs at least one recycling step")
    B = full.Bm()
    bb = B[m:, m:]
    bb2 = float(np.sum(bb**2))
    bt2 = float(rec.Bt.fro_norm() ** 2)
    sig = np.linalg.svd(B[: m + 1, :m], compute_uv=False)
    return {
        "d": abs(bb2 - bt2),
        "norm_Bbarbar_sq": bb2,
        "norm_Btilde_sq": bt2,
        "sigma_k": float(sig[k - 1]) if k <= len(sig) else 0.0,
    }


def alpha_trend(full: GkbState) -> tuple[np.ndarray, float]:
    """``|alpha_j|`` for ``j = 1..m`` and the least-squares slope of ``log |alpha_j|``."""
    a = np.abs(np.asarray(full.alphas[: full.m], dtype=np.float64))
    if len(a) < 2:
        return a, math.nan
    slope = np.polyfit(np.arange(1, len(a) + 1, dtype=np.float64), np.log(a), 1)[0]
    return a, float(slope)


def sigma1_estimate(full: GkbState, rec: RecycleState) -> dict:
    """Largest singular value of ``B_{m+ell}`` against its approximate upper estimate.

    The estimate is ``(s1(Bhat)^2 + s_k^2 - r_kk^2 + s_{k+1}^2 + ... + s_m^2)^{1/2}``
    with ``s_i`` the singular values of ``B_m``; it is reported, not enforced.
    """
    m, k, _ = _split(full, rec)
    B = full.Bm()
    sig = np.linalg.svd(B[: m + 1, :m], compute_uv=False)
    s1_full = float(np.linalg.norm(B, 2))
    s1_hat = float(np.linalg.norm(assemble_projected(rec).Bhat, 2))
    r_kk = rec.R[k - 1, k - 1]
    est2 = s1_hat**2 + sig[k - 1] ** 2 - r_kk**2 + float(np.sum(sig[k:] ** 2))
    est = math.sqrt(max(est2, 0.0))
    # the last Y column in reference coordinates gives the ||B_m^T eta|| diagnostic
    eta = full.U[:, : m + 1].T @ rec.Y[:, -1]
    return {
        "sigma1_full": s1_full,
        "sigma1_hat": s1_hat,
        "estimate": est,
        "within_10pct": bool(s1_full <= 1.1 * est),
        "norm_Bm_T_eta": float(np.linalg.norm(B[: m + 1, :m].T @ eta)),
        "r_kk": float(abs(r_kk)),
    }


@dataclass
class TsvdPipeline:
    full: GkbState
    rec: RecycleState
    m: int
    k: int
    ell: int
    lam1: float  # parameter of the solution deflated into W

    @property
    def Bhat(self) -> np.ndarray:
        return assemble_projected(self.rec).Bhat

    @property
    def B_full(self) -> np.ndarray:
        return self.full.Bm()

    @property
    def sigma_k(self) -> float:
        sig = np.linalg.svd(self.full.Bm()[: self.m + 1, : self.m], compute_uv=False)
        return float(sig[self.k - 1])

    @property
    def alpha_m1(self) -> float:
        return float(self.full.alphas[self.m])

    @property
    def Bbar(self) -> np.ndarray:
        return self.full.Bm()[self.m + 1:, self.m:]


def tsvd_pipeline(A: LinearOp, b, m: int, k: int, ell: int, reg: RegMethod | None = None,
                  lam1: float | None = None, reorth: bool = True) -> TsvdPipeline:
    """Reference run of ``m + ell`` steps, TSVD compression after ``m``, then ``ell`` recycling steps.

    ``W`` holds the ``k - 1`` leading right singular directions of ``B_m``
    and the deflated regularized solution of the ``m``-step problem (its
    parameter is ``lam1`` or chosen by ``reg``, GCV by default).
    """
    if not 1 <= k <= m:
        raise ValueError("need 1 <= k <= m")
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    full = run_gkb(A, b, m + ell, reorth=reorth)
    if full.m < m + ell or not full.extended:
        raise ValueError("reference bidiagonalization broke down early")
    Vm = full.Vm[:, :m]
    Bm = full.Bm()[: m + 1, :m]
    c = np.zeros(m + 1)
    c[0] = full.beta1
    if lam1 is None:
        sel = select_lambda(Bm, c, reg or GCV())
        lam1, y1 = sel.lam, sel.y
    else:
        y1, _ = tikhonov_projected(Bm, c, lam1)
    if k > 1:
        W = compress_tsvd(Vm, Bm, k - 1, 0.0)
    else:
        W = np.zeros((Vm.shape[0], 0))
    W = build_Wk(W, Vm @ y1)
    rec = recycle_init(A, b, W, reorth=reorth)
    for _ in range(ell):
        recycle_step(rec, A)
    return TsvdPipeline(full, rec, m, W.shape[1], ell, float(lam1))


def verification_report(pipe: TsvdPipeline, lambdas, fault_inject: bool = False,
                        seeds=(0, 1)) -> dict:
    """All checks on one TSVD pipeline, as a JSON-ready dict with pass flags.

    With ``fault_inject`` the projected solution is computed from a
    perturbed ``Bhat`` (scaled by 1.5), which must make the bound check fail.
    """
    full, rec = pipe.full, pipe.rec
    scale = float(np.linalg.norm(full.Bm()))
    checks: dict = {}
    out: dict = {"m": pipe.m, "k": pipe.k, "ell": pipe.ell, "lambda_1": pipe.lam1}

    try:
        pair = build_transforms(full, rec, seed=seeds[0])
        containment_ok = True
    except ContainmentError as exc:
        out["containment_error"] = str(exc)
        containment_ok = False
    checks["containment"] = containment_ok
    out["angles"] = {
        "V_tilde_in_V": subspace_containment(rec.Vt, full.Vm),
        "U_tilde_in_U": subspace_containment(np.column_stack(rec.Ut_cols), full.U),
    }
    if not containment_ok:
        out["checks"] = checks
        out["passed"] = False
        return out

    blocks = lemma_blocks(pair, full, rec)
    blocks_alt = lemma_blocks(build_transforms(full, rec, seed=seeds[1]), full, rec)
    out["blocks"] = blocks
    out["blocks_relative_tol"] = 1e-8
    checks["blocks"] = all(v <= 1e-8 * scale for v in blocks.values())
    checks["blocks_completion_independent"] = all(
        abs(blocks[n] - blocks_alt[n]) <= 1e-8 * scale for n in BLOCK_NAMES
    )

    prob = assemble_projected(rec)
    rows = []
    bound_ok = eq_ok = True
    for lam in lambdas:
        y = None
        if fault_inject:
            y, _ = tikhonov_projected(1.5 * prob.Bhat, prob.chat, float(lam))
        rb = residual_bound(rec, full, float(lam), pair, y=y)
        ok_b = rb.r_norm <= rb.bound + 1e-10
        ok_e = abs(rb.r_norm - rb.r_equality) <= 1e-8 * max(1.0, rb.r_norm)
        bound_ok &= ok_b
        eq_ok &= ok_e
        rows.append({"lambda": float(lam), "rhat_norm": rb.rhat_norm, "r_norm": rb.r_norm,
                     "r_equality": rb.r_equality, "frob_exact": rb.frob_exact, "bound": rb.bound,
                     "flagged": rb.flagged})
    out["residual_bound"] = rows
    checks["residual_bound"] = bool(bound_ok)
    checks["residual_equality"] = bool(eq_ok)

    viol = interlacing_check(pipe.B_full, prob.Bhat)
    out["interlacing_max_violation"] = viol
    checks["interlacing"] = viol <= 1e-10

    lhs, rhs = frob_gap(pipe.B_full, prob.Bhat, pipe.sigma_k, pipe.alpha_m1, pipe.Bbar)
    out["frob_gap"] = {"lhs": lhs, "rhs": rhs}
    checks["frob_gap"] = lhs <= rhs

    if pipe.ell >= 1:
        conj = conjecture_gap(full, rec)
        conj["ratio"] = conj["d"] / conj["norm_Btilde_sq"]
        out["conjecture"] = conj
    series, slope = alpha_trend(full)
    out["alpha_trend"] = {"alphas": series.tolist(), "log_slope": slope}
    out["sigma1_estimate"] = sigma1_estimate(full, rec)

    out["checks"] = checks
    out["passed"] = all(checks.values())
    return out
