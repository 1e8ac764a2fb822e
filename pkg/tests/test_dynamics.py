"""The damped mean-shift particle iteration and its penalized objective."""

import math

import numpy as np
import pytest

from msip.dynamics import (
    ESTIMATORS,
    MsipParams,
    msip_map,
    msip_step,
    objective,
    objective_gradient,
    run_msip,
    solve_weights,
)
from msip.errors import (
    AnalyticUnavailableError,
    DegenerateWeightError,
    DivergedRunError,
)
from msip.kernel import KernelSpec
from msip.targets import (
    GmmTarget,
    TargetDensity,
    from_gmm,
    make_benchmark,
    reference_samples,
)

STD_NORMAL = from_gmm(
    GmmTarget(weights=np.array([1.0]), means=np.zeros((1, 1)),
              covs=np.ones((1, 1, 1))),
    name="std-normal",
)


def params(**kw):
    kw.setdefault("kernel", KernelSpec(sigma=0.5, lam=1e-6))
    kw.setdefault("estimator", "analytic")
    return MsipParams(**kw)


class TestMsipParams:
    def test_defaults(self):
        p = params()
        assert p.eta == 0.5 and p.T == 1000 and p.Q == 10
        assert p.gamma == 1.0 and p.bounds is None

    @pytest.mark.parametrize("eta", [0.0, -0.5, 1.5])
    def test_step_size_outside_half_open_interval_rejected(self, eta):
        # eta = 0 would freeze the iteration entirely, so the full step
        # eta = 1 is allowed but a zero step is not.
        with pytest.raises(ValueError, match="eta"):
            params(eta=eta)

    def test_full_step_allowed(self):
        assert params(eta=1.0).eta == 1.0

    def test_other_validation(self):
        with pytest.raises(ValueError, match="T"):
            params(T=0)
        with pytest.raises(ValueError, match="estimator"):
            params(estimator="exact")
        with pytest.raises(ValueError, match="Q"):
            params(Q=0)
        with pytest.raises(ValueError, match="gamma"):
            params(gamma=1.2)
        with pytest.raises(ValueError, match="bounds"):
            params(bounds=(3.0, -3.0))
        assert set(ESTIMATORS) == {
            "fredholm", "stein", "gf", "hybrid", "analytic"
        }


class TestMap:
    def test_single_gaussian_single_particle_value(self):
        # For a standard normal with M = 1, lam = 0, sigma = 1 the map is
        # the blurred posterior mean y / 2, so Psi(2) = 1.
        p = params(kernel=KernelSpec(sigma=1.0, lam=0.0))
        psi = msip_map(np.array([[2.0]]), STD_NORMAL, p)
        assert psi[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_permutation_equivariance(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params()
        rng = np.random.default_rng(91)
        Y = rng.uniform(0.0, 7.5, size=(10, 2))
        perm = rng.permutation(10)
        psi = msip_map(Y, target, p)
        psi_p = msip_map(Y[perm], target, p)
        np.testing.assert_allclose(psi_p, psi[perm], rtol=1e-10,
                                   atol=1e-12)

    def test_normalization_offset_leaves_map_unchanged(self):
        target = make_benchmark("gmm", 2, seed=3)
        Y = np.random.default_rng(92).uniform(0.0, 7.5, size=(8, 2))
        for estimator in ("analytic", "stein", "gf"):
            p = params(estimator=estimator)
            base = msip_map(Y, target, p)
            for c in (-40.0, 40.0):
                shifted = msip_map(Y, target.with_offset(c), p)
                np.testing.assert_allclose(shifted, base, rtol=1e-10,
                                           atol=1e-12)

    def test_degenerate_weight_raises_with_indices(self):
        target = make_benchmark("gmm", 2, seed=3)
        Y = np.vstack([
            reference_samples(target, 5, seed=93),
            [[500.0, 500.0]],
        ])
        with pytest.raises(DegenerateWeightError) as info:
            msip_map(Y, target, params())
        assert info.value.particles == [5]
        assert "particle(s) [5]" in str(info.value)


class TestStep:
    def test_full_step_returns_map_output(self):
        target = make_benchmark("gmm", 2, seed=3)
        Y = np.random.default_rng(94).uniform(0.0, 7.5, size=(6, 2))
        p = params(eta=1.0)
        psi = msip_map(Y, target, p)
        Y_next, _, _ = msip_step(Y, target, p)
        assert np.array_equal(Y_next, psi)

    def test_half_step_on_single_gaussian(self):
        # y0 = 2 with Psi = 1 and eta = 1/2 lands exactly on 1.5.
        p = params(kernel=KernelSpec(sigma=1.0, lam=0.0), eta=0.5)
        Y_next, _, _ = msip_step(np.array([[2.0]]), STD_NORMAL, p)
        assert Y_next[0, 0] == pytest.approx(1.5, abs=1e-12)

    def test_bounds_clamp(self):
        p = params(kernel=KernelSpec(sigma=1.0, lam=0.0), eta=1.0,
                   bounds=(-0.1, 0.1))
        Y_next, _, _ = msip_step(np.array([[2.0]]), STD_NORMAL, p)
        assert Y_next[0, 0] == 0.1

    def test_freeze_keeps_degenerate_particle_in_place(self):
        target = make_benchmark("gmm", 2, seed=3)
        near = reference_samples(target, 5, seed=95)
        far = np.array([[500.0, 500.0]])
        Y = np.vstack([near, far])
        Y_next, _, diag = msip_step(Y, target, params(),
                                    degenerate="freeze")
        assert diag["frozen"] == [5]
        assert np.array_equal(Y_next[5], Y[5])
        assert not np.allclose(Y_next[:5], Y[:5])

    def test_weights_match_solve_weights(self):
        target = make_benchmark("gmm", 2, seed=3)
        Y = np.random.default_rng(96).uniform(0.0, 7.5, size=(7, 2))
        p = params(estimator="stein", Q=6)
        _, w, _ = msip_step(Y, target, p, iteration=5)
        assert np.array_equal(w, solve_weights(Y, target, p, iteration=5))


class TestRun:
    def test_deterministic_and_final_weights_consistent(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params(estimator="stein", Q=5, T=20, seed=11)
        Y0 = reference_samples(target, 8, seed=97)
        traj_a, final_a = run_msip(target, p, Y0)
        traj_b, final_b = run_msip(target, p, Y0)
        assert np.array_equal(final_a.Y, final_b.Y)
        assert np.array_equal(final_a.w, final_b.w)
        assert traj_a.status == traj_b.status == "ok"
        assert np.array_equal(
            final_a.w, solve_weights(final_a.Y, target, p, iteration=p.T)
        )

    def test_positions_and_callbacks(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params(T=4)
        Y0 = reference_samples(target, 5, seed=98)
        seen = []
        traj, final = run_msip(
            target, p, Y0,
            callbacks=[lambda it, Y, w, diag: seen.append(it)],
            store_positions=True,
        )
        assert seen == [1, 2, 3, 4]
        assert len(traj.positions) == 5
        assert np.array_equal(traj.positions[0], Y0)
        assert np.array_equal(traj.positions[-1], final.Y)
        assert len(traj.steps) == 4

    def test_degenerate_weights_freeze_and_flag_status(self):
        target = make_benchmark("gmm", 2, seed=3)
        Y0 = np.vstack([
            reference_samples(target, 5, seed=99),
            [[500.0, 500.0]],
        ])
        p = params(T=3)
        traj, final = run_msip(target, p, Y0)
        assert traj.status == "degenerate-weights-occurred"
        assert np.array_equal(final.Y[5], Y0[5])

    def test_diverged_run_carries_trajectory(self):
        # A wildly super-exponential density overflows the embeddings; the
        # resulting non-finite map must abort with the partial trajectory.
        hot = TargetDensity(
            dim=1,
            base_log_density=lambda x: np.full(
                np.atleast_2d(x).shape[0], 1.0e4
            ),
        )
        p = params(estimator="gf", Q=3, T=10)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergedRunError) as info:
                run_msip(hot, p, np.zeros((4, 1)))
        assert info.value.trajectory is not None
        assert info.value.trajectory.status == "diverged"

    def test_rejects_non_finite_start(self):
        with pytest.raises(ValueError, match="finite"):
            run_msip(STD_NORMAL, params(), np.array([[np.nan]]))

    def test_counts_evaluations(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params(estimator="stein", Q=4, T=3)
        traj, _ = run_msip(target, p, np.zeros((5, 2)))
        # T steps plus the final re-solve, 5 particles x 4 nodes each
        assert traj.density_evals == (3 + 1) * 20
        assert traj.score_evals == (3 + 1) * 20


class TestObjective:
    def test_single_particle_value(self):
        # M = 1, lam = 0, y = 0 on the standard normal with sigma = 1:
        # F = (1/sqrt(3) - 1/2) / 2.
        p = params(kernel=KernelSpec(sigma=1.0, lam=0.0))
        val = objective(np.array([[0.0]]), STD_NORMAL, p)
        expected = 0.5 * (1.0 / math.sqrt(3.0) - 0.5)
        assert val == pytest.approx(expected, rel=1e-12)
        assert val == pytest.approx(0.0386751, abs=5e-8)

    def test_nonnegative_and_permutation_invariant(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params()
        rng = np.random.default_rng(101)
        for _ in range(10):
            Y = rng.uniform(0.0, 7.5, size=(12, 2))
            val = objective(Y, target, p)
            assert val >= -1e-12
            perm = rng.permutation(12)
            assert objective(Y[perm], target, p) == pytest.approx(
                val, rel=1e-10, abs=1e-14
            )

    def test_invariant_to_mixture_mass_and_offset(self):
        t = make_benchmark("gmm", 2, seed=3).analytic
        scaled = from_gmm(
            GmmTarget(weights=7.0 * t.weights, means=t.means, covs=t.covs)
        )
        base = from_gmm(t)
        Y = np.random.default_rng(102).uniform(0.0, 7.5, size=(6, 2))
        p = params()
        assert objective(Y, scaled, p) == pytest.approx(
            objective(Y, base, p), rel=1e-12
        )
        np.testing.assert_allclose(
            objective_gradient(Y, scaled, p),
            objective_gradient(Y, base, p),
            rtol=1e-12,
        )
        shifted = base.with_offset(40.0)
        assert objective(Y, shifted, p) == pytest.approx(
            objective(Y, base, p), rel=1e-12
        )

    def test_gradient_matches_finite_differences(self):
        target = make_benchmark("gmm", 2, seed=3)
        p = params()
        Y = reference_samples(target, 5, seed=103) \
            + 0.3 * np.random.default_rng(104).standard_normal((5, 2))
        G = objective_gradient(Y, target, p)
        h = 1e-5
        fd = np.empty_like(Y)
        for i in range(5):
            for j in range(2):
                Yp, Ym = Y.copy(), Y.copy()
                Yp[i, j] += h
                Ym[i, j] -= h
                fd[i, j] = (objective(Yp, target, p)
                            - objective(Ym, target, p)) / (2.0 * h)
        assert np.linalg.norm(G - fd) <= 1e-6 * max(np.linalg.norm(G),
                                                    1e-12)

    def test_gradient_small_at_long_run_limit(self):
        # moderate step size and bandwidth: aggressive settings (eta near
        # 1, sigma comparable to the particle spacing) oscillate or eject
        # particles instead of settling on the fixed point
        p = params(kernel=KernelSpec(sigma=0.5, lam=1e-6), eta=0.5, T=800)
        Y0 = np.linspace(-2.0, 2.0, 5)[:, None]
        traj, final = run_msip(STD_NORMAL, p, Y0)
        assert traj.status == "ok"
        g = objective_gradient(final.Y, STD_NORMAL, p)
        assert np.linalg.norm(g) <= 1e-8 * (1.0 + np.linalg.norm(final.Y))

    def test_requires_analytic_embeddings(self):
        funnel = make_benchmark("funnel", 2)
        p = params()
        with pytest.raises(AnalyticUnavailableError):
            objective(np.zeros((3, 2)), funnel, p)
        with pytest.raises(AnalyticUnavailableError):
            objective_gradient(np.zeros((3, 2)), funnel, p)
        with pytest.raises(AnalyticUnavailableError):
            msip_map(np.zeros((3, 2)), funnel, params(estimator="analytic"))


class TestDescentBehavior:
    def test_objective_almost_always_decreases(self):
        # Soft property: the damped iteration is not a literal descent
        # method, but across seeded runs the objective should decrease on
        # at least 95% of iterations (tolerance 1e-12 per step).
        target = make_benchmark("gmm", 2, seed=0)
        p = params(eta=0.5, T=150)
        total = 0
        violations = 0
        for run in range(20):
            Y = np.random.default_rng([105, run]).normal(
                3.75, 2.0, size=(25, 2)
            )
            prev = objective(Y, target, p)
            for it in range(p.T):
                Y, _, _ = msip_step(Y, target, p, iteration=it,
                                    degenerate="freeze")
                cur = objective(Y, target, p)
                total += 1
                if cur > prev + 1e-12 * (1.0 + abs(prev)):
                    violations += 1
                prev = cur
        assert violations <= 0.05 * total, (
            f"{violations}/{total} iterations increased the objective"
        )
