"""Sparse convex quadratic programs with box bounds and optional inequality rows.

Problem: minimize 0.5 x'Qx + c'x  subject to  lo <= x <= hi,  A x >= b.

Three solution paths, chosen automatically by :func:`solve_box_qp`:

* pure box constraints: MPRGP (projected conjugate gradients with
  proportioning and expansion steps), Jacobi scaled;
* rows with a *private slack*: row r reads ``y_r + a_r'x >= b_r`` where the
  auxiliary ``y_r >= 0`` appears only in that row and only as ``0.5 d_r y_r**2``
  in the objective, while the remaining unknowns are unbounded.  The auxiliary
  is eliminated exactly (y_r = max(0, b_r - a_r'x)) and the resulting C1
  piecewise quadratic problem is solved by semismooth Newton;
* general rows: augmented Lagrangian over slack variables with MPRGP inner
  solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import QPConvergenceError

__all__ = ["BoxQP", "QPSolution", "solve_box_qp", "mprgp", "projected_gradient"]


@dataclass(frozen=True)
class BoxQP:
    """Quadratic program data.

    ``slack[r]`` (optional) is the index of the auxiliary unknown owned by row r.
    ``offset`` is a constant added to the objective (Dirichlet lift energy).
    """

    Q: sp.csr_matrix
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    A: sp.csr_matrix | None = None
    b: np.ndarray | None = None
    slack: np.ndarray | None = None
    offset: float = 0.0

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.Q @ x) + self.c @ x + self.offset)

    def gradient(self, x):
        return self.Q @ x + self.c


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    objective: float
    kkt: float
    iterations: int
    active: int
    converged: bool
    tol: float = 0.0
    method: str = "mprgp"


def projected_gradient(g, x, lo, hi):
    """Projected gradient for a box: free components keep g, bound ones are chopped."""
    fixed = lo == hi
    at_lo = (x <= lo) & ~fixed
    at_hi = (x >= hi) & ~fixed & ~at_lo
    free = ~(fixed | at_lo | at_hi)
    gp = np.where(free, g, 0.0)
    gp += np.where(at_lo, np.minimum(g, 0.0), 0.0)
    gp += np.where(at_hi, np.maximum(g, 0.0), 0.0)
    return gp


def _feasible_step(y, p, l, u):
    """Largest t >= 0 with l <= y - t p <= u."""
    with np.errstate(divide="ignore", invalid="ignore"):
        tl = np.where(p > 0, (y - l) / p, np.inf)
        tu = np.where(p < 0, (y - u) / p, np.inf)
    return float(min(tl.min(initial=np.inf), tu.min(initial=np.inf)))


def mprgp(Q, c, lo, hi, x0, tol_abs, max_iter, gamma=1.0, record=None):
    """MPRGP on a Jacobi-scaled copy of the problem.

    Returns ``(x, kkt, iterations, converged)``; ``kkt`` is the Euclidean norm of
    the projected gradient in the original variables.  ``record``, when a list,
    receives the objective after every iteration.
    """
    Q = sp.csr_matrix(Q)
    n = len(c)
    dg = Q.diagonal()
    s = np.where(dg > 0, 1.0 / np.sqrt(np.where(dg > 0, dg, 1.0)), 1.0)
    S = sp.diags(s)
    A = (S @ Q @ S).tocsr()
    bvec = -c * s
    l = lo / s
    u = hi / s
    fixed = lo == hi
    y = np.clip(x0 / s, l, u)
    y[fixed] = l[fixed]
    gersh = float(np.abs(A).sum(axis=1).max()) if n else 1.0
    abar = 1.9 / max(gersh, 1e-300)

    def split(y, g):
        at_lo = (y <= l) & ~fixed
        at_hi = (y >= u) & ~fixed & ~at_lo
        free = ~(fixed | at_lo | at_hi)
        phi = np.where(free, g, 0.0)
        beta = np.where(at_lo, np.minimum(g, 0.0), 0.0) + np.where(at_hi, np.maximum(g, 0.0), 0.0)
        return phi, beta

    def phi_tilde(y, phi):
        with np.errstate(invalid="ignore"):
            out = np.where(phi > 0, np.minimum((y - l) / abar, phi), np.maximum((y - u) / abar, phi))
        return np.where(phi == 0, 0.0, out)

    def fval(y, g):
        return 0.5 * y @ (g + bvec) - bvec @ y

    g = A @ y - bvec
    phi, beta = split(y, g)
    kkt = float(np.linalg.norm((phi + beta) / s))
    p = phi.copy()
    it = 0
    while kkt > tol_abs and it < max_iter:
        it += 1
        if beta @ beta <= gamma**2 * (phi_tilde(y, phi) @ phi):
            Ap = A @ p
            pAp = float(p @ Ap)
            if pAp == 0.0 and not p.any():
                break
            if pAp < -1e-14 * float(p @ p) * gersh:
                raise QPConvergenceError("negative curvature: quadratic form is not positive semidefinite")
            a_f = _feasible_step(y, p, l, u)
            a_cg = float(g @ p) / pAp if pAp > 0 else np.inf
            if a_cg <= a_f:
                y = y - a_cg * p
                g = g - a_cg * Ap
                phi, beta = split(y, g)
                p = phi - (float(phi @ Ap) / pAp) * p
            else:
                if not np.isfinite(a_f):
                    raise QPConvergenceError("objective unbounded below along a free direction")
                y = np.clip(y - a_f * p, l, u)
                g = g - a_f * Ap
                phi, _ = split(y, g)
                y = np.clip(y - abar * phi, l, u)
                g = A @ y - bvec
                phi, beta = split(y, g)
                p = phi.copy()
        else:
            d = beta
            Ad = A @ d
            dAd = float(d @ Ad)
            a_f = _feasible_step(y, d, l, u)
            a_cg = float(g @ d) / dAd if dAd > 0 else np.inf
            step = min(a_cg, a_f)
            if not np.isfinite(step):
                raise QPConvergenceError("objective unbounded below along a chopped direction")
            y = np.clip(y - step * d, l, u)
            g = g - step * Ad
            phi, beta = split(y, g)
            p = phi.copy()
        kkt = float(np.linalg.norm((phi + beta) / s))
        if record is not None:
            record.append(fval(y, g))
    x = y * s
    x = np.clip(x, lo, hi)
    return x, kkt, it, kkt <= tol_abs


def _private_slack_structure(P: BoxQP):
    """Return (xs, ys, Ax, d) if every row owns a private slack, else None."""
    if P.slack is None or P.A is None:
        return None
    ys = np.asarray(P.slack, dtype=np.int64)
    m = P.n_rows
    if len(ys) != m or len(np.unique(ys)) != m:
        return None
    A = sp.csc_matrix(P.A)
    Ay = A[:, ys]
    if (abs(Ay - sp.eye(m)) > 0).nnz:
        return None
    is_slack = np.zeros(P.n, dtype=bool)
    is_slack[ys] = True
    xs = np.flatnonzero(~is_slack)
    Q = sp.csr_matrix(P.Q)
    Qy = Q[ys]
    if (abs(Qy[:, xs]) > 0).nnz or (abs(Qy[:, ys] - sp.diags(Qy[:, ys].diagonal())) > 0).nnz:
        return None
    if np.any(P.c[ys] != 0) or np.any(P.lo[ys] != 0) or np.any(np.isfinite(P.hi[ys])):
        return None
    if np.any(np.isfinite(P.lo[xs])) or np.any(np.isfinite(P.hi[xs])):
        return None
    d = Q.diagonal()[ys]
    if np.any(d < 0):
        return None
    return xs, ys, A[:, xs].tocsr(), d


def _exact_line_search(dphi, slope0, iters=60):
    """Minimizer in (0, 1] of a convex C1 function from its derivative ``dphi``.

    Root finding on the monotone derivative avoids comparing objective values,
    which lose all significant digits near the solution of badly scaled problems.
    """
    d1 = dphi(1.0)
    if d1 <= 0.0:
        return 1.0
    lo, hi, dlo, dhi = 0.0, 1.0, slope0, d1
    t = 1.0
    for _ in range(iters):
        t = lo - dlo * (hi - lo) / (dhi - dlo)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        dt = dphi(t)
        if abs(dt) <= 1e-12 * abs(slope0):
            break
        if dt < 0:
            lo, dlo = t, dt
        else:
            hi, dhi = t, dt
        if hi - lo <= 1e-15 * hi:
            break
    return t


def _newton_private_slack(P, struct, z0, tol, abs_tol, max_iter):
    xs, ys, Ax, d = struct
    Q = sp.csr_matrix(P.Q)[xs][:, xs].tocsc()
    c = P.c[xs]
    b = P.b

    def fg(x):
        Qx = Q @ x
        r = b - Ax @ x
        m = np.maximum(r, 0.0)
        f = 0.5 * x @ Qx + c @ x + 0.5 * float(d @ (m * m))
        g = Qx + c - Ax.T @ (d * m)
        return f, g, r

    def dslope(x, p, t):
        gt = fg(x + t * p)[1]
        return float(gt @ p)

    x = z0[xs].astype(float).copy()
    f, g, r = fg(x)
    gn = float(np.linalg.norm(g))
    tol_abs = max(tol * gn, abs_tol)
    qdiag = np.abs(Q.diagonal())
    best = (gn, x.copy(), f, g, r)
    best_dec = np.inf
    stall = 0
    it = 0
    while gn > tol_abs and it < max_iter and stall < 10:
        it += 1
        act = (r > 0).astype(float)
        H = (Q + Ax.T @ sp.diags(d * act) @ Ax).tocsc()
        reg = 1e-12 * max(float(np.abs(H.diagonal()).max()), float(qdiag.max()) if len(qdiag) else 1.0, 1e-300)
        Hr = (H + reg * sp.eye(H.shape[0])).tocsc()
        try:
            lu = spla.splu(Hr)
        except RuntimeError as exc:
            raise QPConvergenceError(f"Newton system is singular: {exc}") from exc
        p = lu.solve(-g)
        p += lu.solve(-g - Hr @ p)
        slope = float(g @ p)
        if not slope < 0:
            p = -g
            slope = -float(g @ g)
        t = _exact_line_search(lambda t: dslope(x, p, t), slope)
        x = x + t * p
        f, g, r = fg(x)
        gn_new = float(np.linalg.norm(g))
        # progress is a 10% gain in either the gradient norm or the Newton
        # decrement; the gradient alone may grow while the active set changes
        dec = -slope
        if gn_new >= 0.9 * best[0] and dec >= 0.9 * best_dec:
            stall += 1
        else:
            stall = 0
        best_dec = min(best_dec, dec)
        gn = gn_new
        if gn < best[0]:
            best = (gn, x.copy(), f, g, r)
    gn, x, f, g, r = best
    kkt = float(np.linalg.norm(g))
    z = np.empty(P.n)
    z[xs] = x
    z[ys] = np.maximum(r, 0.0)
    active = int(np.count_nonzero(r >= 0))
    return QPSolution(z, P.objective(z), kkt, it, active, kkt <= tol_abs, tol_abs, "newton")


def _augmented_lagrangian(P, z0, tol, abs_tol, max_iter):
    n, m = P.n, P.n_rows
    A = sp.csr_matrix(P.A)
    B = sp.hstack([A, -sp.eye(m)]).tocsr()
    Qz = sp.block_diag([sp.csr_matrix(P.Q), sp.csr_matrix((m, m))]).tocsr()
    cz = np.concatenate([P.c, np.zeros(m)])
    loz = np.concatenate([P.lo, np.zeros(m)])
    hiz = np.concatenate([P.hi, np.full(m, np.inf)])
    x0 = np.clip(z0, P.lo, P.hi)
    z = np.concatenate([x0, np.maximum(A @ x0 - P.b, 0.0)])
    normQ = max(float(np.abs(Qz).sum(axis=1).max()), 1.0)
    rho = 10.0 * normQ
    lam = np.zeros(m)
    g0 = projected_gradient(P.gradient(x0), x0, P.lo, P.hi)
    # when x0 already minimizes the objective, scale by the initial penalty gradient
    h0 = projected_gradient(Qz @ z + cz + rho * (B.T @ (B @ z - P.b)), z, loz, hiz)
    tol_abs = max(tol * max(float(np.linalg.norm(g0)), float(np.linalg.norm(h0)), 1e-300), abs_tol)
    feas_tol = max(tol * max(1.0, float(np.linalg.norm(P.b))), abs_tol)
    total = 0
    viol_prev = np.inf
    kkt = np.inf
    converged = False
    for _ in range(200):
        H = (Qz + rho * (B.T @ B)).tocsr()
        q = cz + B.T @ (lam - rho * P.b)
        z, kkt, its, _ = mprgp(H, q, loz, hiz, z, 0.1 * tol_abs, max_iter)
        total += its
        viol = B @ z - P.b
        lam = lam + rho * viol
        nv = float(np.linalg.norm(viol))
        if nv <= feas_tol and kkt <= tol_abs:
            converged = True
            break
        if nv > 0.25 * viol_prev:
            rho *= 10.0
        viol_prev = nv
    x = z[:n]
    rows = A @ x - P.b
    active = int(np.count_nonzero((x <= P.lo) | (x >= P.hi))) + int(np.count_nonzero(rows <= feas_tol))
    return QPSolution(x, P.objective(x), float(kkt), total, active, converged, tol_abs, "augmented-lagrangian")


def solve_box_qp(problem: BoxQP, x0=None, tol: float = 1e-8, max_iter: int | None = None, abs_tol: float = 0.0):
    """Minimize the QP.

    ``tol`` is relative to the projected-gradient norm at ``x0``; ``abs_tol`` is
    an absolute floor.  A non-converged run returns the last iterate with
    ``converged=False``.
    """
    P = problem
    lo = np.asarray(P.lo, dtype=float)
    hi = np.asarray(P.hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    if x0 is None:
        x0 = np.clip(np.zeros(P.n), lo, hi)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (P.n,):
        raise ValueError("x0 has the wrong size")
    if max_iter is None:
        max_iter = 20 * max(P.n, 1)
    if P.n_rows:
        struct = _private_slack_structure(P)
        if struct is not None:
            return _newton_private_slack(P, struct, x0, tol, abs_tol, max_iter)
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("x0 violates the bounds")
        return _augmented_lagrangian(P, x0, tol, abs_tol, max_iter)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 violates the bounds")
    g0 = projected_gradient(P.gradient(x0), x0, lo, hi)
    tol_abs = max(tol * float(np.linalg.norm(g0)), abs_tol)
    x, kkt, it, ok = mprgp(P.Q, P.c, lo, hi, x0, tol_abs, max_iter)
    active = int(np.count_nonzero(((x <= lo) | (x >= hi)) & (lo < hi)))
    return QPSolution(x, P.objective(x), kkt, it, active, ok, tol_abs, "mprgp")
