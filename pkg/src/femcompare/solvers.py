"""Krylov solvers for the two systems and a dense direct oracle.

Both iterative solvers stop once ``||b - A x||_2 <= max(rtol * ||b||_2, atol)``.
The test runs on the recursively updated residual; when it fires, the true
residual is recomputed, and iteration continues from it if the recursion has
drifted above the tolerance.  A reported convergence therefore always
satisfies the contract on the true residual.

With ``jacobi=True`` both solvers apply a diagonal preconditioner.  MINRES
needs it positive definite, so it uses ``|diag|`` with zero entries (the
pressure block of the saddle-point system) replaced by one.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-6
    atol: float = 1e-10
    max_iter: int = 10000
    jacobi: bool = False

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.max_iter > 0):
            raise ValueError("solver tolerances and iteration limit must be positive")

    def threshold(self, bnorm: float) -> float:
        return max(self.rtol * bnorm, self.atol)


@dataclass(frozen=True)
class SolveReport:
    converged: bool
    iterations: int
    final_residual: float
    criterion: str  # "rtol", "atol", "max_iter" or "breakdown"

    def describe(self, name: str) -> str:
        if self.converged:
            return f"{name} converged in {self.iterations} iterations with a residual norm of {self.final_residual:g}."
        return f"{name} did not converge in {self.iterations} iterations. Residual norm is {self.final_residual:g}."


def _matvec(A):
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda v: A @ v


def _jacobi(A, spd: bool):
    """Inverse of the diagonal of ``A`` as a function, for ``A`` with a ``diagonal`` method."""
    if not hasattr(A, "diagonal"):
        raise ValueError("Jacobi preconditioning needs an operator with a diagonal() method")
    d = np.asarray(A.diagonal(), dtype=float)
    if spd:
        d = np.abs(d)
        d[d == 0] = 1.0
    elif np.any(d <= 0):
        raise ValueError("Jacobi preconditioning for CG needs a positive diagonal")
    inv = 1.0 / d
    return lambda v: inv * v


def _identity(v):
    return v


def _report(converged, it, rnorm, bnorm, cfg, failure="max_iter"):
    if converged:
        crit = "rtol" if cfg.rtol * bnorm >= cfg.atol else "atol"
    else:
        crit = failure
    return SolveReport(bool(converged), int(it), float(rnorm), crit)


def cg_solve(A, b, x0=None, cfg: SolverConfig = SolverConfig()):
    """Conjugate gradients for a symmetric positive definite ``A``.

    Returns ``(x, SolveReport)``; non-convergence is reported, not raised.
    """
    mv = _matvec(A)
    prec = _jacobi(A, spd=False) if cfg.jacobi else _identity
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    tol = cfg.threshold(bnorm)
    r = b - mv(x)
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol:
        return x, _report(True, 0, rnorm, bnorm, cfg)
    z = prec(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < cfg.max_iter:
        it += 1
        Ap = mv(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            log.warning("CG breakdown: p.Ap = %g at iteration %d", pAp, it)
            return x, _report(False, it, float(np.linalg.norm(b - mv(x))), bnorm, cfg, "breakdown")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol:
            r = b - mv(x)
            rnorm = float(np.linalg.norm(r))
            if rnorm <= tol:
                return x, _report(True, it, rnorm, bnorm, cfg)
            z = prec(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        z = prec(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, _report(False, it, float(np.linalg.norm(b - mv(x))), bnorm, cfg)


def minres_solve(D, b, x0=None, cfg: SolverConfig = SolverConfig()):
    """MINRES (Paige-Saunders) for a symmetric, possibly indefinite operator.

    The short recurrence tracks the residual norm (in the preconditioner's
    norm when ``cfg.jacobi`` is set), which is verified against the true
    2-norm residual before convergence is reported.
    """
    mv = _matvec(D)
    prec = _jacobi(D, spd=True) if cfg.jacobi else _identity
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    tol = cfg.threshold(bnorm)
    it = 0
    while True:
        r = b - mv(x)
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol:
            return x, _report(True, it, rnorm, bnorm, cfg)
        if it >= cfg.max_iter:
            return x, _report(False, it, rnorm, bnorm, cfg)
        x, it = _minres_cycle(mv, prec, x, r, tol / rnorm, it, cfg.max_iter)


def _minres_cycle(mv, prec, x, r1, reduction, it, max_iter):
    """One Lanczos run from residual ``r1``; stops once the residual estimate
    has dropped by the factor ``reduction``.
    """
    eps = np.finfo(float).eps
    y = prec(r1)
    beta1 = np.sqrt(float(r1 @ y))
    tol = reduction * beta1
    r2 = r1.copy()
    beta = beta1
    oldb = 0.0
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(x)
    w2 = np.zeros_like(x)
    first = True
    while it < max_iter:
        it += 1
        v = y / beta
        y = mv(v)
        if not first:
            y = y - (beta / oldb) * r1
        alpha = float(v @ y)
        y = y - (alpha / beta) * r2
        r1, r2 = r2, y
        y = prec(r2)
        oldb, beta = beta, np.sqrt(max(float(r2 @ y), 0.0))
        first = False

        # apply the previous rotation, then build the next one
        oldeps = epsln
        delta = cs * dbar + sn * alpha
        gbar = sn * dbar - cs * alpha
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        if phibar <= tol or beta <= eps * beta1:
            # converged estimate or exhausted Krylov space; the caller
            # checks the true residual and restarts if needed
            break
    return x, it


def dense_oracle_solve(A, b) -> np.ndarray:
    """LU with partial pivoting on a dense copy of ``A``.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14 * ||A||_inf``.
    """
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("dense oracle needs a square matrix")
    if n > 2000:
        raise ValueError("dense oracle is limited to n <= 2000")
    scale = np.abs(A).sum(axis=1).max() if n else 0.0
    with warnings.catch_warnings():
        # singularity is detected and raised below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if n and np.abs(np.diag(lu)).min() < 1e-14 * scale:
        raise SingularMatrixError("matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), b)
