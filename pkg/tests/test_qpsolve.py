"""QP solver tests against an exhaustive active-set enumeration oracle."""

import itertools
import time

import numpy as np
import pytest

from deskbot.qpsolve import (
    INF,
    QpProblem,
    QpSolver,
    STATUS_OPTIMAL,
    STATUS_PRIMAL_INFEASIBLE,
    warmup,
)


@pytest.fixture(scope="module", autouse=True)
def _warm():
    warmup()


def active_set_oracle(p: QpProblem) -> float:
    """Try every subset of rows as active (each at its single finite bound),
    solve the KKT equality system, keep the best feasible candidate.

    Independent of the solver: plain stacked numpy solves.
    """
    n, m = p.n, p.m
    bounds = np.where(p.upper < INF, p.upper, p.lower)
    best = np.inf
    for k in range(m + 1):
        combos = list(itertools.combinations(range(m), k))
        K = np.zeros((len(combos), n + k, n + k))
        rhs = np.zeros((len(combos), n + k))
        K[:, :n, :n] = p.H
        rhs[:, :n] = -p.g
        for ci, rows in enumerate(combos):
            for a, i in enumerate(rows):
                K[ci, n + a, :n] = p.A[i]
                K[ci, :n, n + a] = p.A[i]
                rhs[ci, n + a] = bounds[i]
        try:
            sol = np.linalg.solve(K, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            continue
        xs = sol[:, :n]
        Ax = xs @ p.A.T
        feas = np.all(Ax <= p.upper + 1e-8, axis=1) & np.all(Ax >= p.lower - 1e-8, axis=1)
        feas &= np.all(np.isfinite(xs), axis=1)
        if feas.any():
            objs = 0.5 * np.einsum("bi,ij,bj->b", xs, p.H, xs) + xs @ p.g
            best = min(best, float(objs[feas].min()))
    return best


def random_one_sided_qp(rng, n_max=8, m_max=12) -> QpProblem:
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    M = rng.normal(size=(n, n))
    H = M @ M.T + (0.1 + rng.random()) * np.eye(n)
    g = 2.0 * rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n)  # strictly interior by construction
    slack = rng.uniform(0.05, 1.0, size=m)
    side = rng.random(m) < 0.5
    upper = np.where(side, A @ x0 + slack, INF)
    lower = np.where(side, -INF, A @ x0 - slack)
    return QpProblem(H, g, A, lower, upper)


def check_kkt(p: QpProblem, sol, tol=1e-6):
    """Independent KKT verification: feasibility, stationarity, signs."""
    x, y = sol.x, sol.y
    Ax = p.A @ x
    assert np.all(Ax >= p.lower - 1e-8)
    assert np.all(Ax <= p.upper + 1e-8)
    assert np.abs(p.H @ x + p.g + p.A.T @ y).max(initial=0.0) <= tol
    for i in range(p.m):
        if y[i] > tol:
            assert p.upper[i] - Ax[i] <= 1e-6 * (1 + abs(p.upper[i]))
        elif y[i] < -tol:
            assert Ax[i] - p.lower[i] <= 1e-6 * (1 + abs(p.lower[i]))


class TestBasics:
    def test_unconstrained_minimizer(self):
        p = QpProblem(np.eye(2), np.array([-1.0, -2.0]), np.zeros((0, 2)),
                      np.zeros(0), np.zeros(0))
        sol = QpSolver().solve(p)
        assert sol.status == STATUS_OPTIMAL
        assert np.allclose(sol.x, [1.0, 2.0], atol=1e-8)

    def test_box_clamp(self):
        # minimize (x-5)^2 subject to 0 <= x <= 2
        p = QpProblem(np.array([[2.0]]), np.array([-10.0]), np.array([[1.0]]),
                      np.array([0.0]), np.array([2.0]))
        sol = QpSolver().solve(p)
        assert sol.status == STATUS_OPTIMAL
        assert abs(sol.x[0] - 2.0) < 1e-8

    def test_equality_row(self):
        # minimize ||x||^2 s.t. x0 + x1 = 1 -> x = (0.5, 0.5)
        p = QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]),
                      np.array([1.0]), np.array([1.0]))
        sol = QpSolver().solve(p)
        assert sol.status == STATUS_OPTIMAL
        assert np.allclose(sol.x, [0.5, 0.5], atol=1e-8)

    def test_infeasible_detected(self):
        p = QpProblem(np.eye(1), np.zeros(1), np.array([[1.0], [1.0]]),
                      np.array([1.0, -INF]), np.array([INF, -1.0]))
        sol = QpSolver().solve(p)
        assert sol.status == STATUS_PRIMAL_INFEASIBLE

    def test_singular_psd_cost(self):
        H = np.diag([1.0, 0.0])
        p = QpProblem(H, np.array([0.0, 1.0]), np.eye(2),
                      np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        sol = QpSolver().solve(p)
        assert sol.status == STATUS_OPTIMAL
        assert abs(sol.x[1] - (-1.0)) < 1e-7

    def test_rejects_asymmetric_H(self):
        H = np.array([[1.0, 0.1], [0.0, 1.0]])
        with pytest.raises(ValueError):
            QpProblem(H, np.zeros(2), np.zeros((0, 2)), np.zeros(0), np.zeros(0))

    def test_rejects_crossed_bounds(self):
        with pytest.raises(ValueError):
            QpProblem(np.eye(1), np.zeros(1), np.eye(1),
                      np.array([1.0]), np.array([0.0]))


class TestOracleAgreement:
    N_PROBLEMS = 1000

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(2024)
        solver = QpSolver()
        worst_gap = 0.0
        for _ in range(self.N_PROBLEMS):
            p = random_one_sided_qp(rng)
            sol = solver.solve(p)
            assert sol.status == STATUS_OPTIMAL, sol
            assert sol.primal_residual <= 1e-8
            assert sol.dual_residual <= 1e-6
            check_kkt(p, sol)
            ref = active_set_oracle(p)
            gap = abs(sol.objective - ref)
            worst_gap = max(worst_gap, gap)
            assert gap <= 1e-6, (sol.objective, ref)
        assert worst_gap <= 1e-6


class TestProperties:
    def test_warm_start_never_degrades(self):
        rng = np.random.default_rng(7)
        solver = QpSolver()
        for _ in range(100):
            p = random_one_sided_qp(rng)
            cold = solver.solve(p)
            warm = solver.solve(p, warm_start=cold.x + rng.normal(scale=0.1, size=p.n))
            assert warm.objective <= cold.objective + 1e-9

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(8)
        p = random_one_sided_qp(rng, n_max=8, m_max=12)
        w = rng.normal(size=p.n)
        a = QpSolver().solve(p, warm_start=w)
        b = QpSolver().solve(p, warm_start=w.copy())
        assert np.array_equal(a.x, b.x)
        assert a.objective == b.objective

    def test_latency_budget(self):
        # 200 Hz tick support: n=24, m=60 under 1 ms median.
        rng = np.random.default_rng(9)
        solver = QpSolver()
        times = []
        for _ in range(50):
            n, m = 24, 60
            M = rng.normal(size=(n, n))
            H = M @ M.T + np.eye(n)
            g = rng.normal(size=n)
            A = rng.normal(size=(m, n))
            x0 = rng.normal(size=n)
            lower = A @ x0 - rng.uniform(0.05, 0.5, size=m)
            upper = A @ x0 + rng.uniform(0.05, 0.5, size=m)
            p = QpProblem(H, g, A, lower, upper)
            t0 = time.perf_counter()
            sol = solver.solve(p)
            times.append(time.perf_counter() - t0)
            assert sol.status == STATUS_OPTIMAL
        assert np.median(times) < 1e-3, f"median {np.median(times)*1e3:.3f} ms"
