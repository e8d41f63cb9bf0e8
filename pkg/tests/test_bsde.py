import numpy as np
import pytest

from bsderisk import (
    DomainGuardViolation,
    Driver,
    LsmcContext,
    NonFiniteError,
    RandomField,
    RegressionBasis,
    SolveOptions,
    TimeGrid,
    check_increasing,
    default_registry_labels,
    driver_from_label,
    family_from_label,
    g_expectation,
    shifted,
    simulate,
    solve,
)

from conftest import stderr


class TestSolveBasics:
    def test_zero_driver_reduces_to_projection(self, ctx50, b1):
        sol = solve(driver_from_label("zero"), RandomField(50, b1), 50, ctx50)
        assert sol.field_at(0).mean() == pytest.approx(np.mean(b1), abs=1e-12)
        assert np.array_equal(sol.field_at(50).values, b1)

    def test_zero_driver_recovers_martingale_representation(self, ctx50, b1):
        # dB_1 = 1 dB: the Z-component estimates the unit integrand
        sol = solve(driver_from_label("zero"), RandomField(50, b1), 50, ctx50)
        z_means = [np.mean(sol.z_at(i)[:, 0]) for i in range(0, 50, 7)]
        np.testing.assert_allclose(z_means, 1.0, atol=0.05)

    def test_linear_driver_closed_form_constant(self, ctx50):
        # g = -r y with terminal -1 discounts to -exp(-r T)
        term = RandomField(50, -np.ones(50_000))
        sol = solve(driver_from_label("linear_y:0.1"), term, 50, ctx50)
        y0 = sol.field_at(0).mean()
        assert abs(y0 - (-np.exp(-0.1))) <= 0.01 * np.exp(-0.1)

    def test_linear_driver_closed_form_brownian(self, ctx50, b1):
        sol = solve(driver_from_label("linear_y:0.1"), RandomField(50, -b1), 50, ctx50)
        assert abs(sol.field_at(0).mean()) <= 0.01

    def test_entropic_value(self, ctx50, b1):
        # ln E[exp(B_1)] = 1/2 by the Gaussian moment generating function
        sol = solve(driver_from_label("quad_z"), RandomField(50, b1), 50, ctx50)
        assert abs(sol.field_at(0).mean() - 0.5) <= 0.05

    def test_terminal_exact_and_diagnostics(self, ctx50, b1):
        sol = solve(driver_from_label("quad_z"), RandomField(50, b1), 50, ctx50)
        assert sol.diagnostics["guard_violations"] == 0
        assert sol.diagnostics["regression_fallbacks"] == 0
        assert sol.maturity == 50 and sol.stop == 0

    def test_index_errors(self, ctx20):
        term = RandomField(20, np.zeros(10_000))
        sol = solve(driver_from_label("zero"), term, 20, ctx20, stop=5)
        with pytest.raises(IndexError):
            sol.field_at(4)
        with pytest.raises(IndexError):
            sol.z_at(20)
        with pytest.raises(ValueError):
            solve(driver_from_label("zero"), RandomField(21, np.zeros(10_000)), 20, ctx20)


class TestDeterministicOracle:
    def test_time_dependent_source_integrates(self, ctx20):
        # y- and z-free generator a(t): Y_0 = c + sum a(t_i) dt exactly
        a = lambda t: 0.1 + 0.05 * t
        drv = Driver(lambda t, y, z: np.full(y.shape, a(t)), "source", nonneg_at_z0=True)
        term = RandomField(20, np.full(10_000, 2.0))
        sol = solve(drv, term, 20, ctx20)
        dt = ctx20.grid.dt
        oracle = 2.0 + sum(a(i * dt) for i in range(20)) * dt
        assert sol.field_at(0).mean() == pytest.approx(oracle, abs=1e-12)

    def test_g_expectation_zero_driver_matches_cond_expect(self, ctx50, b1):
        field = RandomField(50, np.sin(b1))
        ge = g_expectation(driver_from_label("zero"), field, 0, ctx50)
        ce = ctx50.cond_expect(field, 0)
        assert ge.mean() == pytest.approx(ce.mean(), abs=1e-12)


class TestQuadraticDriver:
    def test_matches_closed_form_on_losses(self, ctx50, b1):
        from bsderisk import QEntropicOnLosses

        loss = np.maximum(-(b1 + 0.5), 0.0)
        sol = solve(driver_from_label("q_entropic:0.5"), RandomField(50, loss), 50, ctx50)
        closed = QEntropicOnLosses(0.5, 0.5).evaluate(ctx50, 0, RandomField(50, b1))
        assert abs(sol.field_at(0).mean() - closed.mean()) <= 0.05

    def test_domain_guard_aborts(self, ctx20):
        # terminal mass below 1/(q-1) violates the generator's domain
        term = RandomField(20, -3.0 * np.abs(ctx20.ensemble.values[:, 20, 0]))
        with pytest.raises(DomainGuardViolation) as err:
            solve(driver_from_label("q_entropic:0.5"), term, 20, ctx20)
        assert err.value.y < -1.9

    def test_z_clip_guards_tails(self, ctx20, monkeypatch):
        # an absurdly small clip changes the value; the default does not bind
        b = ctx20.ensemble.values[:, 20, 0]
        term = RandomField(20, b)
        base = solve(driver_from_label("quad_z"), term, 20, ctx20).field_at(0).mean()
        tight = solve(
            driver_from_label("quad_z"), term, 20, ctx20, options=SolveOptions(z_clip=0.1)
        ).field_at(0).mean()
        assert abs(base - 0.5) < abs(tight - 0.5)

    def test_non_finite_aborts(self, ctx20):
        drv = Driver(lambda t, y, z: np.full(y.shape, np.inf), "bad")
        with pytest.raises(NonFiniteError):
            solve(drv, RandomField(20, np.zeros(10_000)), 20, ctx20)


class TestInvariants:
    def test_comparison(self, ctx20):
        # pathwise-ordered terminals give ordered solutions in the mean
        b = ctx20.ensemble.values[:, 20, 0]
        drv = driver_from_label("csa_example")
        lo = solve(drv, RandomField(20, np.sin(b)), 20, ctx20).field_at(0)
        hi = solve(drv, RandomField(20, np.sin(b) + 0.25), 20, ctx20).field_at(0)
        assert lo.mean() <= hi.mean() + 2.0 * stderr(hi.values - lo.values)

    @pytest.mark.parametrize("label", ["zero", "abs_z", "quad_z"])
    def test_cash_additivity_of_y_free_drivers(self, ctx20, label):
        b = ctx20.ensemble.values[:, 20, 0]
        drv = driver_from_label(label)
        base = solve(drv, RandomField(20, np.sin(b)), 20, ctx20)
        shifted_sol = solve(drv, RandomField(20, np.sin(b) + 2.0), 20, ctx20)
        for i in range(21):
            gap = shifted_sol.Y[i] - (base.Y[i] + 2.0)
            assert np.max(np.abs(gap)) <= 1e-8

    def test_convergence_toward_oracle(self):
        # halving dt and quadrupling paths walks the estimate toward the
        # closed form; the seed is pinned because a lucky coarse level can
        # otherwise undercut the refined one
        errs = []
        for n_steps, n_paths in ((10, 4_000), (20, 16_000), (40, 64_000)):
            grid = TimeGrid(1.0, n_steps)
            ens = simulate(grid, 1, n_paths, seed=123)
            ctx = LsmcContext(grid, ens, RegressionBasis(4))
            term = RandomField(n_steps, ens.values[:, n_steps, 0])
            sol = solve(driver_from_label("quad_z"), term, n_steps, ctx)
            errs.append(abs(sol.field_at(0).mean() - 0.5))
        assert errs[1] <= errs[0] and errs[2] <= errs[1]

    def test_measurable_terminal_extension(self, ctx20):
        # a claim measurable before maturity propagates with Z = 0 and the
        # pathwise source ODE; for g(.,.,0)=0 drivers the value is unchanged
        b_half = ctx20.ensemble.values[:, 10, 0]
        term = RandomField(10, np.sin(b_half))
        drv = driver_from_label("quad_z")
        short = solve(drv, term, 10, ctx20)
        long = solve(drv, term, 20, ctx20)
        np.testing.assert_array_equal(short.field_at(0).values, long.field_at(0).values)
        assert np.all(long.Z[10:] == 0.0)


class TestRegistry:
    def test_labels_parse(self):
        for label in default_registry_labels():
            drv = driver_from_label(label)
            assert drv.label
            drv.verify_flags(ts=[0.0, 0.5], ys=[-1.5, -0.2, 0.0, 0.4, 2.0])

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            driver_from_label("mystery")
        with pytest.raises(KeyError):
            family_from_label("mystery:1,2")

    def test_csa_example_values(self):
        drv = driver_from_label("csa_example")
        y = np.array([-2.0, 0.0, 1.0])
        z = np.array([[0.5], [0.5], [0.5]])
        np.testing.assert_allclose(drv(0.0, y, z), [0.1 * 2.0 + 0.5, 0.5, 0.5])
        drv2 = driver_from_label("csa_example:0.3")
        np.testing.assert_allclose(drv2(0.0, y, z), [0.3 * 2.0 + 0.5, 0.5, 0.5])

    def test_shift_variant(self):
        drv = driver_from_label("csa_example_shift")
        assert drv(0.0, np.zeros(1), np.zeros((1, 1)))[0] == 1.0
        assert not drv.zero_at_z0 and drv.nonneg_at_z0

    def test_q_entropic_values_and_guard(self):
        drv = driver_from_label("q_entropic:0.5")
        y = np.array([0.0])
        z = np.array([[2.0]])
        assert drv(0.0, y, z)[0] == pytest.approx(0.25 * 4.0 / 1.0)
        assert drv.guard_ok(np.array([-1.9]))[0]
        assert not drv.guard_ok(np.array([-2.1]))[0]
        classical = driver_from_label("q_entropic:1")
        assert classical(0.0, y, z)[0] == pytest.approx(2.0)
        assert classical.domain_guard is None and not classical.depends_on_y

    def test_shifted_helper(self):
        drv = shifted(driver_from_label("quad_z"), 0.1)
        assert drv(0.0, np.zeros(2), np.zeros((2, 1)))[0] == pytest.approx(0.1)
        assert drv.nonneg_at_z0 and not drv.zero_at_z0

    def test_flag_verification_catches_lies(self):
        liar = Driver(lambda t, y, z: np.ones(y.shape), "liar", zero_at_z0=True)
        with pytest.raises(AssertionError):
            liar.verify_flags(ts=[0.0], ys=[0.0])


class TestFamilies:
    def test_constant_family_increasing(self):
        drv = driver_from_label("quad_z")
        from bsderisk import DriverFamily

        fam = DriverFamily(lambda u: drv, "constant")
        ok, witness = check_increasing(fam, [0.5, 1.0], ts=[0.0, 0.25], ys=[-1, 0, 1], zs=[0, 1])
        assert ok and witness is None

    def test_additive_shift_family(self):
        base = driver_from_label("quad_z")
        from bsderisk import DriverFamily

        up = DriverFamily(lambda u: shifted(base, 0.1 * u), "up")
        ok, _ = check_increasing(up, [0.25, 0.5, 1.0], ts=[0.0, 0.2], ys=[0.0], zs=[0.0, 1.0])
        assert ok
        down = DriverFamily(lambda u: shifted(base, -0.1 * u), "down")
        ok, witness = check_increasing(down, [0.25, 0.5], ts=[0.0], ys=[0.0], zs=[0.0])
        assert not ok
        u1, u2, v, y, z, lo, hi = witness
        assert u1 < u2 and lo > hi

    def test_translated_family_registry(self):
        fam = family_from_label("translated_family:0.5,0.2")
        ok, _ = check_increasing(fam, [0.25, 0.5, 1.0], ts=[0.0, 0.2], ys=[-1, 0, 1], zs=[0, 1])
        assert ok
        member = fam.at(0.5)
        assert member(0.0, np.zeros(1), np.zeros((1, 1)))[0] == pytest.approx(0.1)

    def test_needs_two_maturities(self):
        fam = family_from_label("translated_family:0.5,0.2")
        with pytest.raises(ValueError):
            check_increasing(fam, [0.5], ts=[0.0], ys=[0.0], zs=[0.0])
