import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from femcompare.assembly import assemble_lagrange, assemble_mixed
from femcompare.elements import H1, L2, RT, build_space
from femcompare.solvers import (
    SingularMatrixError,
    SolveReport,
    SolverConfig,
    cg_solve,
    dense_oracle_solve,
    minres_solve,
)

TIGHT = SolverConfig(rtol=1e-12, atol=1e-15, max_iter=10000)


def random_spd(n, seed):
    r = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(r.standard_normal((n, n)))
    return Q @ np.diag(r.uniform(0.5, 10, n)) @ Q.T


def true_residual(A, x, b):
    return np.linalg.norm(b - A @ x)


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.rtol, cfg.atol, cfg.max_iter) == (1e-6, 1e-10, 10000)

    @pytest.mark.parametrize("args", [(0, 1e-10, 10), (1e-6, -1, 10), (1e-6, 1e-10, 0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            SolverConfig(*args)

    def test_threshold(self):
        assert SolverConfig(1e-6, 1e-10).threshold(1.0) == 1e-6
        assert SolverConfig(1e-6, 1e-10).threshold(1e-6) == 1e-10


class TestCG:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        x, rep = cg_solve(np.eye(3), b)
        assert np.allclose(x, b)
        assert rep.converged and rep.iterations <= 1

    def test_two_by_two(self):
        x, rep = cg_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]), cfg=TIGHT)
        assert np.allclose(x, [1.0, 1.0], atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 50), st.integers(0, 2**31))
    def test_finite_termination(self, n, seed):
        A = random_spd(n, seed)
        b = np.random.default_rng(seed + 1).standard_normal(n)
        x, rep = cg_solve(A, b, cfg=SolverConfig(1e-12, 1e-15, 10 * n))
        assert rep.converged
        assert rep.iterations <= n + 5
        assert true_residual(A, x, b) <= 1e-12 * np.linalg.norm(b)

    def test_initial_guess(self):
        A = random_spd(10, 3)
        b = np.ones(10)
        exact = np.linalg.solve(A, b)
        x, rep = cg_solve(A, b, x0=exact, cfg=TIGHT)
        assert rep.iterations == 0
        assert np.array_equal(x, exact)

    def test_non_convergence_is_reported(self):
        A = random_spd(40, 5)
        x, rep = cg_solve(A, np.ones(40), cfg=SolverConfig(1e-12, 1e-15, 2))
        assert not rep.converged
        assert rep.iterations == 2 and rep.criterion == "max_iter"
        assert rep.final_residual == pytest.approx(true_residual(A, x, np.ones(40)))
        assert "did not converge" in rep.describe("CG")

    def test_indefinite_breakdown(self):
        x, rep = cg_solve(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))
        assert not rep.converged and rep.criterion == "breakdown"

    def test_criterion_atol(self):
        _, rep = cg_solve(np.eye(2), np.array([1e-12, 0.0]))
        assert rep.converged and rep.criterion == "atol"

    def test_deterministic(self, star):
        sysm = assemble_lagrange(build_space(star, H1, 2))
        r1 = cg_solve(sysm.A, sysm.b)
        r2 = cg_solve(sysm.A, sysm.b)
        assert r1[1] == r2[1]
        assert np.array_equal(r1[0], r2[0])


class TestMinres:
    def test_indefinite_diagonal(self):
        x, rep = minres_solve(np.diag([1.0, -1.0]), np.array([1.0, 1.0]), cfg=TIGHT)
        assert np.allclose(x, [1.0, -1.0], atol=1e-12)
        assert rep.converged

    def test_agrees_with_cg_on_spd(self):
        A = random_spd(30, 11)
        b = np.arange(30, dtype=float)
        x1, _ = cg_solve(A, b, cfg=TIGHT)
        x2, _ = minres_solve(A, b, cfg=TIGHT)
        assert np.allclose(x1, x2, atol=1e-8)

    def test_zero_rhs(self):
        x, rep = minres_solve(np.diag([2.0, -1.0, 3.0]), np.zeros(3))
        assert not x.any()
        assert rep.iterations == 0 and rep.converged

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.integers(0, 2**31))
    def test_random_symmetric_indefinite(self, n, seed):
        r = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(r.standard_normal((n, n)))
        ev = r.uniform(0.5, 5, n) * r.choice([-1, 1], n)
        A = Q @ np.diag(ev) @ Q.T
        b = r.standard_normal(n)
        x, rep = minres_solve(A, b, cfg=SolverConfig(1e-10, 1e-15, 20 * n))
        assert rep.converged
        assert true_residual(A, x, b) <= 1e-10 * np.linalg.norm(b)

    def test_saddle_point(self, star):
        blk = assemble_mixed(build_space(star, RT, 1), build_space(star, L2, 1))
        x, rep = minres_solve(blk, blk.rhs, cfg=SolverConfig(1e-10, 1e-14, 10000))
        assert rep.converged
        assert true_residual(blk, x, blk.rhs) <= 1e-10 * np.linalg.norm(blk.rhs)
        assert rep.final_residual <= SolverConfig(1e-10, 1e-14).threshold(np.linalg.norm(blk.rhs))

    def test_non_convergence(self, star):
        blk = assemble_mixed(build_space(star, RT, 1), build_space(star, L2, 1))
        x, rep = minres_solve(blk, blk.rhs, cfg=SolverConfig(1e-12, 1e-15, 3))
        assert not rep.converged and rep.iterations == 3
        assert rep.final_residual == pytest.approx(true_residual(blk, x, blk.rhs))

    def test_sparse_and_linear_operator(self, star):
        blk = assemble_mixed(build_space(star, RT, 0), build_space(star, L2, 0))
        x1, _ = minres_solve(blk.to_sparse(), blk.rhs, cfg=TIGHT)
        x2, _ = minres_solve(blk.as_operator(), blk.rhs, cfg=TIGHT)
        assert np.allclose(x1, x2, atol=1e-10)


class TestJacobi:
    JACOBI = SolverConfig(rtol=1e-12, atol=1e-15, max_iter=10000, jacobi=True)

    def test_cg_badly_scaled(self):
        # diagonal scaling over six decades: Jacobi makes this the identity
        d = np.logspace(0, 6, 50)
        b = np.ones(50)
        x, rep = cg_solve(sp.diags(d).tocsr(), b, cfg=self.JACOBI)
        assert rep.converged and rep.iterations == 1
        assert np.allclose(x, 1 / d, rtol=1e-12)
        _, plain = cg_solve(sp.diags(d).tocsr(), b, cfg=TIGHT)
        assert plain.iterations > rep.iterations

    def test_cg_same_solution(self, star):
        sysm = assemble_lagrange(build_space(star, H1, 3))
        x1, r1 = cg_solve(sysm.A, sysm.b, cfg=TIGHT)
        x2, r2 = cg_solve(sysm.A, sysm.b, cfg=self.JACOBI)
        assert r1.converged and r2.converged
        assert np.allclose(x1, x2, atol=1e-10 * np.abs(x1).max())
        assert true_residual(sysm.A, x2, sysm.b) <= 1e-12 * np.linalg.norm(sysm.b)

    def test_minres_saddle_point(self, star):
        blk = assemble_mixed(build_space(star, RT, 2), build_space(star, L2, 2))
        x1, r1 = minres_solve(blk, blk.rhs, cfg=TIGHT)
        x2, r2 = minres_solve(blk, blk.rhs, cfg=self.JACOBI)
        assert r1.converged and r2.converged
        assert true_residual(blk, x2, blk.rhs) <= 1e-12 * np.linalg.norm(blk.rhs)
        assert np.allclose(x1, x2, atol=1e-8 * np.abs(x1).max())

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 2**31))
    def test_minres_random_indefinite(self, n, seed):
        r = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(r.standard_normal((n, n)))
        A = Q @ np.diag(r.uniform(0.5, 5, n) * r.choice([-1, 1], n)) @ Q.T
        A = np.diag(r.uniform(0.1, 10, n)) @ A @ np.diag(r.uniform(0.1, 10, n))
        A = 0.5 * (A + A.T)
        b = r.standard_normal(n)
        x, rep = minres_solve(A, b, cfg=SolverConfig(1e-10, 1e-15, 50 * n, jacobi=True))
        assert rep.converged
        assert true_residual(A, x, b) <= 1e-10 * np.linalg.norm(b)

    def test_requirements(self, star):
        with pytest.raises(ValueError):
            cg_solve(np.diag([1.0, 0.0]), np.ones(2), cfg=self.JACOBI)
        blk = assemble_mixed(build_space(star, RT, 0), build_space(star, L2, 0))
        with pytest.raises(ValueError):
            minres_solve(blk.as_operator(), blk.rhs, cfg=self.JACOBI)
        assert np.array_equal(blk.diagonal(), blk.to_sparse().diagonal())


class TestDenseOracle:
    def test_identity(self):
        b = np.array([1.0, 2.0])
        assert np.array_equal(dense_oracle_solve(np.eye(2), b), b)

    def test_two_by_two(self):
        assert np.allclose(dense_oracle_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), [3.0, 3.0]), [1.0, 1.0])

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            dense_oracle_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), [1.0, 2.0])

    def test_limits(self):
        with pytest.raises(ValueError):
            dense_oracle_solve(np.ones((2, 3)), np.ones(2))
        with pytest.raises(ValueError):
            dense_oracle_solve(sp.eye(2001), np.ones(2001))

    def test_residual(self):
        A = random_spd(60, 2) + 0.3 * np.random.default_rng(4).standard_normal((60, 60))
        b = np.random.default_rng(5).standard_normal(60)
        x = dense_oracle_solve(A, b)
        assert np.abs(A @ x - b).max() <= 1e-10 * np.abs(b).max()


def test_report_messages():
    ok = SolveReport(True, 12, 3.5e-9, "rtol")
    assert ok.describe("MINRES") == "MINRES converged in 12 iterations with a residual norm of 3.5e-09."
    bad = SolveReport(False, 7, 0.5, "max_iter")
    assert bad.describe("PCG") == "PCG did not converge in 7 iterations. Residual norm is 0.5."
