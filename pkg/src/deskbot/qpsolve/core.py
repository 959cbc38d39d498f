"""Dense convex QP solver: operator splitting (ADMM) plus active-set polish.

Problem form:  minimize 0.5 x'Hx + g'x  s.t.  lower <= A x <= upper.
Box constraints on x are expected as rows of A.  The hot loop is
numba-compiled so a control-rate (200 Hz) caller stays well under budget.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit

INF = 1e20

STATUS_OPTIMAL = "optimal"
STATUS_PRIMAL_INFEASIBLE = "primal-infeasible"
STATUS_MAX_ITERATIONS = "max-iterations"


class QpDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        H = np.ascontiguousarray(self.H, dtype=float)
        g = np.ascontiguousarray(self.g, dtype=float)
        A = np.ascontiguousarray(self.A, dtype=float)
        lo = np.ascontiguousarray(self.lower, dtype=float)
        up = np.ascontiguousarray(self.upper, dtype=float)
        n = g.shape[0]
        if H.shape != (n, n):
            raise QpDimensionError(f"H shape {H.shape} vs n={n}")
        if A.ndim != 2 or A.shape[1] != n:
            raise QpDimensionError(f"A shape {A.shape} vs n={n}")
        m = A.shape[0]
        if lo.shape != (m,) or up.shape != (m,):
            raise QpDimensionError("bound length mismatch")
        if np.abs(H - H.T).max(initial=0.0) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")
        if np.any(lo > up):
            raise ValueError("lower > upper")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    y: np.ndarray = field(repr=False, default=None)  # constraint multipliers

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OPTIMAL


@njit(cache=True)
def _chol_solve(L, b):
    n = L.shape[0]
    x = b.copy()
    for i in range(n):
        s = x[i]
        for j in range(i):
            s -= L[i, j] * x[j]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= L[j, i] * x[j]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def _factor(Hreg, A, rho, sigma):
    n = Hreg.shape[0]
    m = A.shape[0]
    M = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            M[i, j] = Hreg[i, j]
        M[i, i] += sigma
    for k in range(m):
        rk = rho[k]
        for i in range(n):
            aki = A[k, i] * rk
            for j in range(n):
                M[i, j] += aki * A[k, j]
    return np.linalg.cholesky(M)


@njit(cache=True)
def _admm(Hreg, g, A, lo, up, rho0, sigma, alpha, x0, y0, max_iter, check_every,
          eps_target, eps_pinf):
    """Returns (x, y, z, iterations, r_prim, r_dual, infeasible_flag)."""
    n = Hreg.shape[0]
    m = A.shape[0]
    rho = rho0.copy()
    L = _factor(Hreg, A, rho, sigma)
    x = x0.copy()
    y = y0.copy()
    z = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += A[i, j] * x[j]
        z[i] = min(max(s, lo[i]), up[i])
    rhs = np.empty(n)
    zt = np.empty(m)
    delta_y = np.zeros(m)
    r_prim = np.inf
    r_dual = np.inf
    infeasible = False
    it = 0
    while it < max_iter:
        it += 1
        for j in range(n):
            rhs[j] = sigma * x[j] - g[j]
        for i in range(m):
            t = rho[i] * z[i] - y[i]
            for j in range(n):
                rhs[j] += A[i, j] * t
        for i in range(n):  # in-place Cholesky solve, L L^T xt = rhs
            s = rhs[i]
            for j in range(i):
                s -= L[i, j] * rhs[j]
            rhs[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = rhs[i]
            for j in range(i + 1, n):
                s -= L[j, i] * rhs[j]
            rhs[i] = s / L[i, i]
        for j in range(n):
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j]
        for i in range(m):
            s = 0.0
            for j in range(n):
                s += A[i, j] * rhs[j]
            zt[i] = s
            relaxed = alpha * s + (1.0 - alpha) * z[i]
            w = relaxed + y[i] / rho[i]
            zn = min(max(w, lo[i]), up[i])
            dy = rho[i] * (relaxed - zn)
            y[i] += dy
            delta_y[i] = dy
            z[i] = zn
        if it % check_every == 0 or it == max_iter:
            r_prim = 0.0
            s_prim = 1.0
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += A[i, j] * x[j]
                v = abs(s - z[i])
                if v > r_prim:
                    r_prim = v
                if abs(s) > s_prim:
                    s_prim = abs(s)
                if abs(z[i]) > s_prim:
                    s_prim = abs(z[i])
            r_dual = 0.0
            s_dual = 1.0
            for j in range(n):
                hx = 0.0
                for k in range(n):
                    hx += Hreg[j, k] * x[k]
                aty = 0.0
                for i in range(m):
                    aty += A[i, j] * y[i]
                v = abs(hx + g[j] + aty)
                if v > r_dual:
                    r_dual = v
                for w2 in (abs(hx), abs(g[j]), abs(aty)):
                    if w2 > s_dual:
                        s_dual = w2
            if r_prim <= eps_target and r_dual <= eps_target:
                break
            # primal infeasibility certificate from the dual update direction
            nd = 0.0
            for i in range(m):
                v = abs(delta_y[i])
                if v > nd:
                    nd = v
            if nd > eps_pinf:
                sup = 0.0
                unbounded_side = False
                for i in range(m):
                    r = delta_y[i] / nd
                    if r > 1e-14:
                        if up[i] < INF:
                            sup += up[i] * r
                        else:
                            unbounded_side = True
                    elif r < -1e-14:
                        if lo[i] > -INF:
                            sup += lo[i] * r
                        else:
                            unbounded_side = True
                natv = 0.0
                for j in range(n):
                    s = 0.0
                    for i in range(m):
                        s += A[i, j] * delta_y[i]
                    v = abs(s / nd)
                    if v > natv:
                        natv = v
                if not unbounded_side and sup < -eps_pinf and natv < eps_pinf:
                    infeasible = True
                    break
            # adaptive rho: rebalance relative primal vs dual progress
            if r_prim > 1e-30 and r_dual > 1e-30:
                ratio = np.sqrt((r_prim / s_prim) / (r_dual / s_dual))
                if ratio > 2.0 or ratio < 0.5:
                    scale = min(max(ratio, 1e-3), 1e3)
                    for i in range(m):
                        rho[i] = min(max(rho[i] * scale, 1e-6), 1e6)
                    L = _factor(Hreg, A, rho, sigma)
    return x, y, z, it, r_prim, r_dual, infeasible, rho


@njit(cache=True)
def _polish(Hreg, g, A, lo, up, act_low, act_up, delta):
    """Equality-QP solve on the detected active set with refinement.

    Returns (x, y, ok): ok=False when the KKT system is singular-ish.
    """
    n = Hreg.shape[0]
    m = A.shape[0]
    idx = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        if act_low[i] or act_up[i]:
            idx[k] = i
            k += 1
    K = np.zeros((n + k, n + k))
    K[:n, :n] = Hreg + delta * np.eye(n)
    for a in range(k):
        i = idx[a]
        for j in range(n):
            K[n + a, j] = A[i, j]
            K[j, n + a] = A[i, j]
        K[n + a, n + a] = -delta
    rhs = np.zeros(n + k)
    rhs[:n] = -g
    for a in range(k):
        i = idx[a]
        rhs[n + a] = lo[i] if act_low[i] else up[i]
    sol = np.linalg.solve(K, rhs)
    # one round of iterative refinement against the unregularized system
    for _ in range(1):
        r = rhs.copy()
        xs = sol[:n]
        nus = sol[n:]
        top = Hreg @ xs
        for a in range(k):
            i = idx[a]
            for j in range(n):
                top[j] += A[i, j] * nus[a]
        for j in range(n):
            r[j] -= top[j]
        for a in range(k):
            i = idx[a]
            s = 0.0
            for j in range(n):
                s += A[i, j] * xs[j]
            r[n + a] -= s
        d = np.linalg.solve(K, r)
        sol = sol + d
    x = sol[:n]
    y = np.zeros(m)
    for a in range(k):
        y[idx[a]] = sol[n + a]
    ok = True
    for i in range(n + k):
        if not np.isfinite(sol[i]):
            ok = False
    return x, y, ok


class QpSolver:
    """Reusable solver; one instance per thread (holds settings/workspace)."""

    def __init__(self, max_iterations: int = 4000, primal_tolerance: float = 1e-8,
                 dual_tolerance: float = 1e-6, regularization: float = 1e-9,
                 dump_dir_env: str = "DESKBOT_QP_DUMP_DIR"):
        self.max_iterations = max_iterations
        self.primal_tolerance = primal_tolerance
        self.dual_tolerance = dual_tolerance
        self.regularization = regularization
        self.dump_dir_env = dump_dir_env

    def solve(self, p: QpProblem, warm_start: np.ndarray | None = None) -> QpSolution:
        n, m = p.n, p.m
        Hreg = p.H + self.regularization * np.eye(n)
        x0 = np.zeros(n) if warm_start is None else np.ascontiguousarray(warm_start, float)
        if x0.shape != (n,):
            raise QpDimensionError("warm start length mismatch")
        if m == 0:
            L = np.linalg.cholesky(Hreg)
            x = _chol_solve(L, -p.g)
            r_dual = float(np.abs(p.H @ x + p.g).max(initial=0.0))
            return QpSolution(x, p.objective(x), STATUS_OPTIMAL, 1, 0.0, r_dual,
                              y=np.zeros(0))

        # Stage the ADMM accuracy: a coarse iterate usually identifies the
        # active set, and the polish step supplies the final precision.
        row_sq = np.einsum("ij,ij->i", p.A, p.A).mean() if m else 1.0
        rho_base = float(np.clip((np.trace(p.H) / n) / max(row_sq, 1e-9), 1e-3, 1e3))
        rho0 = np.where(p.upper - p.lower < 1e-12, 1e3 * rho_base, rho_base)
        x, y = x0, np.zeros(m)
        rho = rho0
        iters_total = 0
        r_prim = r_dual = np.inf
        stages = ((75, 1e-2), (400, 1e-3), (1500, 1e-5), (self.max_iterations, 1e-7))
        for chunk, eps_stage in stages:
            budget = min(chunk, self.max_iterations - iters_total)
            if budget <= 0:
                break
            x, y, z, iters, r_prim, r_dual, infeasible, rho = _admm(
                Hreg, p.g, p.A, p.lower, p.upper, rho, 1e-6, 1.6, x, y,
                budget, 25, eps_stage, 1e-6,
            )
            iters_total += iters
            if infeasible:
                return QpSolution(x, p.objective(x), STATUS_PRIMAL_INFEASIBLE,
                                  iters_total, float(r_prim), float(r_dual), y=y)
            converged = r_prim <= eps_stage and r_dual <= eps_stage
            if converged or iters_total >= self.max_iterations:
                best = self._try_polish(p, Hreg, x, y, z)
                if best is not None:
                    xp, yp, rp, rd = best
                    return QpSolution(xp, p.objective(xp), STATUS_OPTIMAL,
                                      iters_total, rp, rd, y=yp)

        rp, rd = self._residuals(p, x, y)
        if rp <= self.primal_tolerance and rd <= self.dual_tolerance:
            return QpSolution(x, p.objective(x), STATUS_OPTIMAL, iters_total,
                              rp, rd, y=y)
        self._maybe_dump(p)
        return QpSolution(x, p.objective(x), STATUS_MAX_ITERATIONS, iters_total,
                          rp, rd, y=y)

    # -- internals ---------------------------------------------------------

    def _residuals(self, p: QpProblem, x, y):
        Ax = p.A @ x
        viol = np.maximum(p.lower - Ax, Ax - p.upper)
        rp = float(np.maximum(viol, 0.0).max(initial=0.0))
        rd = float(np.abs(p.H @ x + p.g + p.A.T @ y).max(initial=0.0))
        return rp, rd

    def _verify(self, p: QpProblem, x, y):
        """Full KKT check incl. multiplier signs and complementarity."""
        rp, rd = self._residuals(p, x, y)
        if rp > self.primal_tolerance or rd > self.dual_tolerance:
            return None
        Ax = p.A @ x
        for i in range(p.m):
            if y[i] > self.dual_tolerance:  # pushing on upper bound
                if p.upper[i] - Ax[i] > 1e-6 * (1.0 + abs(p.upper[i])):
                    return None
            elif y[i] < -self.dual_tolerance:  # pushing on lower bound
                if Ax[i] - p.lower[i] > 1e-6 * (1.0 + abs(p.lower[i])):
                    return None
        return rp, rd

    def _try_polish(self, p: QpProblem, Hreg, x, y, z):
        act_low = (y < -1e-10) | (z - p.lower < 1e-7)
        act_up = (y > 1e-10) | (p.upper - z < 1e-7)
        both = act_low & act_up & (p.upper - p.lower > 1e-12)
        act_low = act_low & ~(both & (y >= 0))
        act_up = act_up & ~(both & (y < 0))
        for _ in range(2):  # drop wrong-signed rows and retry
            if int(act_low.sum() + act_up.sum()) > 3 * p.n + 8:
                return None  # hopeless active set; avoid giant KKT solves
            try:
                xp, yp, ok = _polish(Hreg, p.g, p.A, p.lower, p.upper,
                                     act_low, act_up, 1e-9)
            except Exception:
                return None
            if not ok:
                return None
            wrong_low = act_low & (yp > 1e-8)
            wrong_up = act_up & (yp < -1e-8)
            if not (wrong_low.any() or wrong_up.any()):
                res = self._verify(p, xp, yp)
                if res is not None:
                    return xp, yp, res[0], res[1]
                # feasibility miss: activate the worst violated row and retry
                Ax = p.A @ xp
                viol_up = Ax - p.upper
                viol_low = p.lower - Ax
                i_up = int(np.argmax(viol_up))
                i_low = int(np.argmax(viol_low))
                if viol_up[i_up] <= 1e-9 and viol_low[i_low] <= 1e-9:
                    return None
                if viol_up[i_up] >= viol_low[i_low]:
                    if act_up[i_up]:
                        return None
                    act_up[i_up] = True
                else:
                    if act_low[i_low]:
                        return None
                    act_low[i_low] = True
                continue
            act_low = act_low & ~wrong_low
            act_up = act_up & ~wrong_up
        return None

    def _maybe_dump(self, p: QpProblem):
        d = os.environ.get(self.dump_dir_env, "")
        if not d:
            return
        os.makedirs(d, exist_ok=True)
        path = os.path.join(d, f"qp_{abs(hash(p.g.tobytes())) % 10**8:08d}.qpdump")
        with open(path, "w") as f:
            for name, arr in (("H", p.H), ("g", p.g), ("A", p.A),
                              ("lower", p.lower), ("upper", p.upper)):
                arr2 = np.atleast_2d(arr)
                f.write(f"%%MatrixMarket matrix array real general\n% {name}\n")
                f.write(f"{arr2.shape[0]} {arr2.shape[1]}\n")
                for v in arr2.T.flat:
                    f.write(f"{v!r}\n")


def warmup():
    """Force JIT compilation of the kernels (call once at startup)."""
    H = np.eye(2)
    p = QpProblem(H, np.array([-1.0, -2.0]), np.eye(2),
                  np.array([-5.0, -5.0]), np.array([5.0, 5.0]))
    QpSolver().solve(p)
