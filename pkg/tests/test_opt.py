import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from macimmse.bayes import gaussian_mi
from macimmse.constellation import bpsk, cartesian_power, qam
from macimmse.info import mutual_information
from macimmse.opt import (
    ScalarMmseCurve,
    SolverOptions,
    aligned_precoder,
    covariance_to_precoder,
    low_snr_precoder,
    mercury_waterfilling,
    project_budget,
    scalar_mmse,
    scalar_mmse_inverse,
    solve_power_allocation,
    solve_precoders,
    structure_decompose,
    waterfilling,
)
from macimmse.system import MacSystem, power_check, scalar_system

from oracles import real_bpsk_mi

GAUSS = SolverOptions(stats_method="gaussian", tolerance=1e-9, max_iters=400)
QUAD = SolverOptions(stats_method="quadrature", tolerance=1e-6, max_iters=200)


def analytic_waterfilling(gains, budget, snr):
    """Closed-form level search written independently of the package."""
    g = np.sort(np.asarray(gains, float))[::-1]
    for k in range(len(g), 0, -1):
        mu = (budget + np.sum(1 / (snr * g[:k]))) / k
        if mu - 1 / (snr * g[k - 1]) > 0:
            break
    return np.maximum(mu - 1 / (snr * np.asarray(gains, float)), 0.0)


def two_user_system(h1, h2, c=None, snr=1.0):
    n = np.asarray(h1).shape[1]
    c = c or cartesian_power(bpsk(), n)
    return MacSystem(h1, h2, np.eye(n), np.eye(n), snr, c, c)


class TestSolvePrecoders:
    @pytest.mark.parametrize("snr", [0.5, 3.0])
    def test_single_user_full_power(self, snr):
        sol = solve_precoders(scalar_system(1.0, 0.0, 1.0, 1.0, snr), 2.0, 1.0, QUAD)
        assert abs(sol.p1[0, 0]) == pytest.approx(np.sqrt(2.0), rel=1e-6)
        assert sol.converged

    def test_gaussian_waterfilling_covariance(self):
        h1 = np.diag([1.0, 0.8])
        sys = two_user_system(h1, np.zeros((2, 2)))
        sol = solve_precoders(sys, 2.0, 1.0, GAUSS)
        expected = np.diag(analytic_waterfilling([1.0, 0.64], 2.0, 1.0))
        assert np.all(np.diag(expected) > 0)
        np.testing.assert_allclose(sol.p1 @ sol.p1.conj().T, expected, atol=1e-3)

    def test_gaussian_structure_follows_channel(self):
        rng = np.random.default_rng(3)
        h1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        sys = two_user_system(h1, np.zeros((2, 2)))
        sol = solve_precoders(sys, 2.0, 1.0, GAUSS)
        u = structure_decompose(sol.p1).u
        v = np.linalg.svd(h1)[2].conj().T
        # columns agree up to a phase
        overlap = np.abs(np.diag(v.conj().T @ u))
        np.testing.assert_allclose(overlap, 1.0, atol=1e-2)
        gains = np.linalg.svd(h1, compute_uv=False) ** 2
        np.testing.assert_allclose(np.sort(np.diag(structure_decompose(sol.p1).d).real ** 2)[::-1],
                                   np.sort(analytic_waterfilling(gains, 2.0, 1.0))[::-1], atol=1e-3)

    def test_symmetric_users_stay_symmetric(self):
        sys = two_user_system(np.eye(2), np.eye(2))
        opts = SolverOptions(stats_method="quadrature", nodes=8, tolerance=1e-6, max_iters=30)
        sol = solve_precoders(sys, 2.0, 2.0, opts)
        np.testing.assert_allclose(sol.p1, sol.p2, atol=1e-3)

    def test_complex_channels_rotate_to_orthogonal(self):
        # the users end up in quadrature at full power; the KKT residual
        # rises on the way while the objective never falls
        sys = scalar_system(1.0, 0.7 + 0.2j, 1.0, 1.0, 2.0)
        sol = solve_precoders(sys, 1.5, 0.5, QUAD)
        assert sol.converged and sol.kkt_residual <= QUAD.tolerance
        rel = np.angle(sys.h2[0, 0] * sol.p2[0, 0] / (sys.h1[0, 0] * sol.p1[0, 0]), deg=True)
        assert abs(abs(rel) - 90.0) <= 0.1
        assert power_check(sys.with_(p1=sol.p1, p2=sol.p2), 1.5 + 1e-8, 0.5 + 1e-8).feasible
        assert np.all(np.diff(sol.objective_trace) >= -1e-12)
        assert np.any(np.diff(sol.residual_trace) > 0)

    def test_mc_path_flags_non_convergence(self):
        sys = scalar_system(1.0, 0.6 + 0.3j, 1.0, 1.0, 1.0)
        sol = solve_precoders(sys, 1.0, 1.0, SolverOptions(max_iters=5, samples_initial=5_000, tolerance=1e-12))
        assert not sol.converged
        assert sol.iterations == 5
        assert len(sol.residual_trace) >= 2
        assert sol.objective.std_error > 0

    def test_restarts_keep_best(self):
        sys = scalar_system(1.0, 0.6, 1.0, 1.0, 1.0)
        one = solve_precoders(sys, 1.0, 1.0, QUAD)
        many = solve_precoders(sys, 1.0, 1.0, SolverOptions(stats_method="quadrature", tolerance=1e-6, restarts=2))
        assert many.objective.value >= one.objective.value - 1e-9

    def test_budget_validated(self):
        with pytest.raises(ValueError):
            solve_precoders(scalar_system(), 0.0, 1.0)

    @pytest.mark.parametrize("field,value", [("damping", 0.0), ("damping", 1.5), ("max_iters", 0), ("stats_method", "x")])
    def test_options_validated(self, field, value):
        with pytest.raises(ValueError):
            SolverOptions(**{field: value})


class TestStructure:
    def test_identity(self):
        s = structure_decompose(np.eye(3))
        for m in (s.u, s.d, s.r):
            np.testing.assert_allclose(m, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        s = structure_decompose(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(s.d, np.diag([2.0, 1.0]), atol=1e-12)
        np.testing.assert_allclose(s.u, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(s.r, np.eye(2), atol=1e-12)

    @given(st.integers(0, 10_000), st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_and_conventions(self, seed, n):
        rng = np.random.default_rng(seed)
        p = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        s = structure_decompose(p)
        assert np.linalg.norm(s.reconstruct() - p) <= 1e-10 * max(1.0, np.linalg.norm(p))
        np.testing.assert_allclose(s.u.conj().T @ s.u, np.eye(n), atol=1e-10)
        np.testing.assert_allclose(s.r.conj().T @ s.r, np.eye(n), atol=1e-10)
        d = np.diag(s.d).real
        assert np.all(d >= 0) and np.all(np.diff(d) <= 0)
        first = s.r[0]
        assert np.allclose(first.imag, 0, atol=1e-12) and np.all(first.real > 0)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            structure_decompose(np.ones((2, 3)))

    def test_aligned_precoder_ordering(self):
        h = np.diag([0.5, 2.0])
        e = np.diag([0.1, 0.9])
        p = aligned_precoder(h, [3.0, 1.0], e)
        # strongest mode (input 2) carries the larger power on the best-estimated input
        np.testing.assert_allclose(np.abs(p), [[0, 1], [np.sqrt(3), 0]], atol=1e-12)


class TestProjection:
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.1, 10))
    @settings(max_examples=60, deadline=None)
    def test_feasible_and_optimal(self, v, budget):
        v = np.array(v)
        p, level = project_budget(v, budget)
        assert np.all(p >= 0) and p.sum() <= budget * (1 + 1e-9)
        if np.maximum(v, 0).sum() > budget:
            np.testing.assert_allclose(p, np.maximum(v - level, 0), atol=1e-8)


class TestPowerAllocation:
    def test_orthogonal_gaussian_users_waterfill(self):
        z = np.zeros((2, 2))
        h1 = np.vstack([np.diag([1.0, 0.5]), z])
        h2 = np.vstack([z, np.diag([1.0, 0.5])])
        sys = two_user_system(h1, h2)
        pa = solve_power_allocation(sys, (1.0, 1.0), SolverOptions(stats_method="gaussian", tolerance=1e-8, max_iters=2000))
        expected = analytic_waterfilling([1.0, 0.25], 1.0, 1.0)
        np.testing.assert_allclose(pa.powers1, expected, atol=1e-4)
        np.testing.assert_allclose(pa.powers2, expected, atol=1e-4)
        assert pa.converged
        # switched-off channel: normalised multiplier at least its gain
        assert pa.powers1[1] <= 1e-8 and pa.gamma1 >= 0.25

    def test_active_channels_both_on(self):
        z = np.zeros((2, 2))
        sys = two_user_system(np.vstack([np.diag([1.0, 0.8]), z]), np.vstack([z, np.diag([1.0, 0.8])]))
        pa = solve_power_allocation(sys, (2.0, 2.0), SolverOptions(stats_method="gaussian", tolerance=1e-8, max_iters=2000))
        np.testing.assert_allclose(pa.powers1, analytic_waterfilling([1.0, 0.64], 2.0, 1.0), atol=1e-4)
        assert pa.gamma1 < 0.64

    def test_asymmetric_budgets_scalar(self):
        sys = scalar_system(1.0, 1.0, 1.0, 1.0, 1.0)
        pa = solve_power_allocation(sys, (4.0, 2.0), SolverOptions(stats_method="quadrature", tolerance=1e-5, max_iters=300))
        assert pa.powers1[0] == pytest.approx(4.0, rel=1e-6)
        assert pa.powers2[0] < 2.0 - 0.1
        weak = [h[1][0] for h in pa.history]
        assert weak[0] == pytest.approx(2.0)
        assert np.all(np.diff(weak) <= 1e-12)

    def test_feasibility_invariant(self):
        rng = np.random.default_rng(1)
        h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        sys = two_user_system(h, np.roll(h, 1, axis=0))
        pa = solve_power_allocation(sys, (1.0, 2.0), SolverOptions(stats_method="gaussian", max_iters=50))
        assert np.all(pa.powers1 >= 0) and pa.powers1.sum() <= 1.0 + 1e-8
        assert np.all(pa.powers2 >= 0) and pa.powers2.sum() <= 2.0 + 1e-8

    def test_budget_validated(self):
        with pytest.raises(ValueError):
            solve_power_allocation(scalar_system(), (1.0, -1.0))


class TestMercury:
    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_gaussian_reduces_to_waterfilling(self, seed):
        rng = np.random.default_rng(seed)
        gains = rng.uniform(0.05, 2.0, 4)
        budget, snr = rng.uniform(0.1, 5.0), rng.uniform(0.1, 10.0)
        pa = mercury_waterfilling(gains, budget, snr, None)
        np.testing.assert_allclose(pa.powers1, analytic_waterfilling(gains, budget, snr), atol=1e-6)
        np.testing.assert_allclose(waterfilling(gains, budget, snr), analytic_waterfilling(gains, budget, snr), atol=1e-12)

    def test_gaussian_two_channels(self):
        pa = mercury_waterfilling([1.0, 0.25], 1.0, 1.0, None)
        np.testing.assert_allclose(pa.powers1, analytic_waterfilling([1.0, 0.25], 1.0, 1.0), atol=1e-6)

    def test_bpsk_single_channel(self):
        pa = mercury_waterfilling([0.7], 1.3, 2.0, bpsk())
        assert pa.powers1[0] == pytest.approx(1.3, rel=1e-9)

    def test_bpsk_grid_search(self):
        gains, budget, snr = (1.0, 0.25), 1.0, 10.0
        pa = mercury_waterfilling(gains, budget, snr, bpsk())

        def neg_mi(p):
            return -(real_bpsk_mi(snr * gains[0] * p, 1.0, 0.0) + real_bpsk_mi(snr * gains[1] * (budget - p), 1.0, 0.0))

        grid = np.linspace(0, budget, 21)
        best = grid[np.argmin([neg_mi(p) for p in grid])]
        res = minimize_scalar(neg_mi, bounds=(max(0, best - 0.05), min(budget, best + 0.05)), method="bounded",
                              options={"xatol": 1e-7})
        assert pa.powers1[0] == pytest.approx(res.x, abs=1e-3)
        assert pa.powers1.sum() == pytest.approx(budget, rel=1e-9)

    @pytest.mark.parametrize("budget", [0.0, -1.0])
    def test_budget_rejected(self, budget):
        with pytest.raises(ValueError):
            mercury_waterfilling([1.0], budget, 1.0, bpsk())

    def test_weak_channel_switched_off(self):
        pa = mercury_waterfilling([1.0, 0.05], 0.2, 1.0, bpsk())
        assert pa.powers1[1] == 0.0 and pa.gamma1 >= 0.05


class TestMmseCurve:
    @pytest.mark.parametrize("c", [bpsk(), qam(4)])
    def test_strictly_decreasing(self, c):
        curve = ScalarMmseCurve(c, s_max=20.0, points=40)
        assert np.all(np.diff(curve.values) < 0)
        assert curve(0.0) == pytest.approx(1.0)

    def test_inverse_roundtrip(self):
        for theta, tol in ((0.9, 1e-6), (0.5, 1e-6), (0.1, 1e-4), (1e-3, 1e-3), (1e-6, 1e-2)):
            s = scalar_mmse_inverse(bpsk(), theta)
            assert s >= 0
            assert scalar_mmse(bpsk(), s) == pytest.approx(theta, rel=tol)

    def test_gaussian_inverse(self):
        assert scalar_mmse_inverse(None, 0.25) == pytest.approx(3.0)

    @pytest.mark.parametrize("theta", [0.0, 1.0, 1.5, -0.1])
    def test_inverse_domain(self, theta):
        with pytest.raises(ValueError):
            scalar_mmse_inverse(bpsk(), theta)

    def test_non_monotone_table_refused(self, monkeypatch):
        import macimmse.opt as opt

        monkeypatch.setattr(opt, "scalar_mmse", lambda c, s, nodes=None: 0.5)
        with pytest.raises(ArithmeticError):
            ScalarMmseCurve(bpsk(), points=5)


class TestLowSnr:
    def test_eigenvalue_proportional(self):
        # H1 H1^H has eigenvalues {2, 1}
        h1 = np.diag([np.sqrt(2.0), 1.0])
        sys = two_user_system(h1, np.eye(2))
        z1, z2 = low_snr_precoder(sys, 1.0)
        np.testing.assert_allclose(z1, np.diag([2 / 3, 1 / 3]), atol=1e-12)
        np.testing.assert_allclose(z2, np.eye(2) / 2, atol=1e-12)

    def test_trace_normalised(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        z1, z2 = low_snr_precoder(two_user_system(h, h), 1.5, 0.5)
        assert np.trace(z1).real == pytest.approx(1.5) and np.trace(z2).real == pytest.approx(0.5)
        p = covariance_to_precoder(z1)
        np.testing.assert_allclose(p @ p.conj().T, z1, atol=1e-12)

    def test_beats_identity_at_low_snr(self):
        h = np.array([[2.0, 0.3], [0.1, 0.5]])
        sys = two_user_system(h, 0.5 * h, snr=1e-3)
        z1, z2 = low_snr_precoder(sys, 2.0)
        tuned = sys.with_(p1=covariance_to_precoder(z1), p2=covariance_to_precoder(z2))
        a = mutual_information(tuned, seed=1, n_samples=100_000)
        b = mutual_information(sys, seed=1, n_samples=100_000)
        assert a.value - b.value > 3 * np.hypot(a.std_error, b.std_error)
        assert gaussian_mi(tuned) > gaussian_mi(sys)
