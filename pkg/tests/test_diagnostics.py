import json

import numpy as np
import pytest

from bsderisk import (
    Claim,
    DegenerateWeights,
    Driver,
    DriverMeasure,
    RandomField,
    check_cash_additivity,
    check_cash_subadditivity,
    check_convexity,
    check_longevity,
    check_monotonicity,
    check_normalization,
    check_restriction,
    check_time_consistency,
    claim_from_label,
    driver_from_label,
    gamma,
    gamma_via_premium_measure,
    measure_from_label,
    run_taxonomy,
    shifted,
    taxonomy_rows,
)
from bsderisk.diagnostics import (
    check_nonpositive_at_zero,
    reports_to_csv,
    reports_to_json_lines,
)


class TestGamma:
    def test_restricted_driver_is_exactly_flat(self, ctx50):
        m = DriverMeasure(driver_from_label("quad_z"))
        claim = claim_from_label("brownian", 25)
        res = gamma(ctx50, m, claim, 0, 25, 50)
        assert np.all(res.gamma.values == 0.0)

    def test_translated_entropic_value(self, ctx50):
        # source term 0.1 over the extra half-year horizon adds 0.05
        m = DriverMeasure(driver_from_label("q_entropic_translated:1,0.1"))
        res = gamma(ctx50, m, claim_from_label("brownian", 25), 0, 25, 50)
        assert abs(res.gamma_mean - 0.05) <= 0.01

    def test_equal_maturities_vanish(self, ctx50):
        m = DriverMeasure(driver_from_label("csa_example"))
        res = gamma(ctx50, m, claim_from_label("brownian", 25), 0, 25, 25)
        assert np.all(res.gamma.values == 0.0)

    def test_nonneg_source_gives_nonneg_gamma(self, ctx50):
        # pathwise sign law up to regression noise: a sliver of paths may
        # dip slightly negative, never materially
        m = DriverMeasure(driver_from_label("csa_example"))
        res = gamma(ctx50, m, claim_from_label("brownian", 25), 10, 25, 50)
        v = res.gamma.values
        assert np.mean(v < -1e-3) <= 1e-3
        assert np.min(v) >= -0.01
        assert res.gamma_mean >= -2.0 * res.gamma_stderr

    def test_window_validation(self, ctx50):
        m = DriverMeasure(driver_from_label("zero"))
        with pytest.raises(ValueError):
            gamma(ctx50, m, claim_from_label("brownian", 25), 0, 20, 50)


class TestPremiumMeasure:
    def test_y_free_shifted_driver_collapses(self, ctx50):
        drv = Driver(
            lambda t, y, z: np.sum(z, axis=1) + 0.1, "z_plus_a", nonneg_at_z0=True
        )
        res = gamma_via_premium_measure(ctx50, drv, claim_from_label("brownian", 25), 0, 25, 50)
        assert abs(res.premium_value - 0.05) <= 0.05 * 0.05
        assert abs(res.premium_value - res.gamma_mean) <= 0.05 * abs(res.gamma_mean)

    def test_zero_source_gives_zero(self, ctx50):
        res = gamma_via_premium_measure(
            ctx50, driver_from_label("quad_z"), claim_from_label("brownian", 25), 0, 25, 50
        )
        assert res.premium_value == 0.0
        assert np.all(res.gamma.values == 0.0)

    def test_csa_example_cross_check(self, ctx50):
        drv = shifted(driver_from_label("csa_example"), 0.1)
        res = gamma_via_premium_measure(ctx50, drv, claim_from_label("brownian", 25), 0, 25, 50)
        gap = abs(res.premium_value - res.gamma_mean)
        assert gap <= max(0.05 * abs(res.gamma_mean), 0.02)

    def test_weight_sanity(self, ctx50):
        drv = shifted(driver_from_label("csa_example"), 0.1)
        res = gamma_via_premium_measure(ctx50, drv, claim_from_label("brownian", 25), 0, 25, 50)
        assert 0.9 <= res.weight_mean <= 1.1
        assert res.ess >= 0.1 * ctx50.ensemble.n_paths

    def test_degenerate_weights_raise(self, ctx20):
        wild = Driver(
            lambda t, y, z: 10.0 * np.sum(z, axis=1) + 0.5, "wild_z", nonneg_at_z0=True
        )
        with pytest.raises(DegenerateWeights):
            gamma_via_premium_measure(ctx20, wild, claim_from_label("brownian", 10), 0, 10, 20)

    def test_window_validation(self, ctx20):
        with pytest.raises(ValueError):
            gamma_via_premium_measure(
                ctx20, driver_from_label("zero"), claim_from_label("brownian", 10), 0, 10, 10
            )


class TestCashAdditivity:
    def test_y_free_driver_exact(self, ctx20):
        m = measure_from_label("driver:quad_z", ctx20.grid)
        rep = check_cash_additivity(ctx20, m, claim_from_label("brownian", 20), 10, 20)
        assert rep.verdict
        assert rep.max_violation <= 1e-8

    def test_losses_measure_fails_with_positive_witness(self, ctx20):
        m = measure_from_label("qent:0.5,0", ctx20.grid)
        rep = check_cash_additivity(ctx20, m, claim_from_label("brownian", 20), 10, 20)
        assert not rep.verdict
        assert rep.witness is not None and rep.witness["gap"] > 0.0

    def test_wrapper_gap_matches_closed_form(self, ctx20):
        m = measure_from_label("discounted:mean,0.1", ctx20.grid)
        rep = check_cash_additivity(ctx20, m, claim_from_label("brownian", 20), 10, 20)
        assert not rep.verdict
        gap_per_unit = 1.0 - np.exp(-0.1 * 0.5)
        for shift in (0.1, 0.5, 1.0):
            measured = rep.details[f"mean_gap[{shift:g}]"]
            assert measured == pytest.approx(gap_per_unit * shift, rel=0.02)


class TestCashSubadditivity:
    @pytest.mark.parametrize("label", ["discounted:mean,0.1", "driver:csa_example"])
    def test_passes(self, ctx20, label):
        m = measure_from_label(label, ctx20.grid)
        rep = check_cash_subadditivity(ctx20, m, claim_from_label("brownian", 20), 10, 20)
        assert rep.verdict

    def test_zero_shift_is_equality(self, ctx20):
        m = measure_from_label("discounted:mean,0.1", ctx20.grid)
        rep = check_cash_subadditivity(ctx20, m, claim_from_label("brownian", 20), 10, 20)
        assert rep.details["mean_gap[0]"] == 0.0

    def test_negative_shift_rejected(self, ctx20):
        m = measure_from_label("mean", ctx20.grid)
        with pytest.raises(ValueError):
            check_cash_subadditivity(
                ctx20, m, claim_from_label("brownian", 20), 10, 20, shifts=[("-1", -1.0)]
            )


class TestNormalizationChecks:
    def test_quad_z_passes(self, ctx20):
        m = measure_from_label("driver:quad_z", ctx20.grid)
        assert check_normalization(ctx20, m, [(0, 10), (10, 20)]).verdict

    def test_shifted_example_fails(self, ctx20):
        m = measure_from_label("driver:csa_example_shift", ctx20.grid)
        rep = check_normalization(ctx20, m, [(0, 10), (10, 20)])
        assert not rep.verdict
        assert rep.witness["rho0"] == pytest.approx(0.5, abs=1e-9)

    def test_zero_driver_passes(self, ctx20):
        m = measure_from_label("driver:zero", ctx20.grid)
        assert check_normalization(ctx20, m, [(0, 20)]).verdict

    def test_rho0_sign_check(self, ctx20):
        good = measure_from_label("driver:quad_z", ctx20.grid)
        assert check_nonpositive_at_zero(ctx20, good, [(0, 20)]).verdict
        bad = measure_from_label("qent_tr:0.5,0,0.2", ctx20.grid)
        assert not check_nonpositive_at_zero(ctx20, bad, [(0, 20)]).verdict


class TestRestrictionCheck:
    def test_quad_z_passes_exactly(self, ctx20):
        m = measure_from_label("driver:quad_z", ctx20.grid)
        rep = check_restriction(ctx20, m, claim_from_label("brownian", 10), 5, [15, 20])
        assert rep.verdict and rep.max_violation == 0.0

    def test_translated_fails_with_source_gap(self, ctx20):
        m = measure_from_label("qent_tr:0.5,0,0.2", ctx20.grid)
        rep = check_restriction(ctx20, m, claim_from_label("brownian", 10), 5, [20])
        assert not rep.verdict
        # gap is the translation integral over (u, v]
        assert rep.details["gap_mean[v=20]"] == pytest.approx(0.2 * 0.5, abs=0.02)

    def test_same_maturity_is_equality(self, ctx20):
        m = measure_from_label("driver:csa_example", ctx20.grid)
        rep = check_restriction(ctx20, m, claim_from_label("brownian", 10), 5, [10])
        assert rep.verdict and rep.max_violation == 0.0


class TestTimeConsistencyChecks:
    def test_single_y_free_driver_strong(self, ctx20):
        m = measure_from_label("driver:abs_z", ctx20.grid)
        rep = check_time_consistency(ctx20, m, "strong", claim_from_label("brownian", 20), 0, 10, 20)
        assert rep.verdict and rep.max_violation == 0.0

    def test_linear_measure_weak_ratio(self, ctx50):
        m = measure_from_label("discounted:mean,0.1", ctx50.grid)
        claim = Claim(50, lambda p: p[:, -1, 0] + 2.0, "brownian+2")
        rep = check_time_consistency(ctx50, m, "weak", claim, 0, 25, 50)
        assert not rep.verdict
        assert rep.details["ratio"] == pytest.approx(np.exp(-0.05), rel=0.01)

    def test_increasing_family_sub(self, ctx20):
        m = measure_from_label("family_losses:translated_family:0.5,0.4", ctx20.grid)
        rep = check_time_consistency(ctx20, m, "sub", claim_from_label("brownian", 20), 0, 10, 20)
        assert rep.verdict

    def test_order_under_cash_additive_inner(self, ctx20):
        m = measure_from_label("entropic", ctx20.grid)
        rep = check_time_consistency(ctx20, m, "order", claim_from_label("brownian", 20), 0, 10, 20)
        assert rep.verdict

    def test_order_soft_probe_on_non_ca(self, ctx20):
        m = measure_from_label("qent:0.5,0", ctx20.grid)
        rep = check_time_consistency(ctx20, m, "order", claim_from_label("brownian", 20), 0, 10, 20)
        assert rep.verdict  # equal-inner twin or vacuous gate, never a false alarm

    def test_unknown_kind(self, ctx20):
        m = measure_from_label("mean", ctx20.grid)
        with pytest.raises(ValueError):
            check_time_consistency(ctx20, m, "medium", claim_from_label("brownian", 20), 0, 10, 20)

    def test_window_validation(self, ctx20):
        m = measure_from_label("mean", ctx20.grid)
        with pytest.raises(ValueError):
            check_time_consistency(ctx20, m, "strong", claim_from_label("brownian", 20), 10, 5, 20)


class TestMonotonicityConvexity:
    def test_monotonicity(self, ctx20):
        m = measure_from_label("qent:0.5,0", ctx20.grid)
        lower = Claim(20, lambda p: p[:, -1, 0] - 0.5, "b-0.5")
        rep = check_monotonicity(ctx20, m, [(lower, claim_from_label("brownian", 20))], 10)
        assert rep.verdict

    def test_unordered_pair_rejected(self, ctx20):
        m = measure_from_label("mean", ctx20.grid)
        a = claim_from_label("brownian", 20)
        b = claim_from_label("sin", 20)
        with pytest.raises(ValueError):
            check_monotonicity(ctx20, m, [(a, b)], 10)

    def test_convexity_at_root(self, ctx20):
        m = measure_from_label("entropic", ctx20.grid)
        pair = (claim_from_label("brownian", 20), claim_from_label("sin", 20))
        rep = check_convexity(ctx20, m, [pair], t=0)
        assert rep.verdict


class TestLongevityCheck:
    def test_nonneg_driver(self, ctx20):
        m = measure_from_label("driver:csa_example", ctx20.grid)
        probe = RandomField(10, ctx20.ensemble.values[:, 10, 0])
        rep = check_longevity(ctx20, m, probe, 5, 10, [15, 20])
        assert rep.verdict

    def test_sign_indefinite_measure_fails(self, ctx20):
        m = measure_from_label("driver:linear_y:0.1", ctx20.grid)
        probe = RandomField(10, ctx20.ensemble.values[:, 10, 0])
        rep = check_longevity(ctx20, m, probe, 5, 10, [20])
        assert not rep.verdict


class TestTaxonomy:
    def test_matrix_has_no_implication_failures(self, ctx20):
        rows = [
            (measure_from_label(lbl, ctx20.grid), claim_from_label(claim_lbl, 15))
            for lbl, claim_lbl in taxonomy_rows()
        ]
        reports, failures = run_taxonomy(ctx20, rows, 0, 10, 15, 20)
        assert failures == []
        assert len(reports) == 8 * len(rows)


class TestReportSerialization:
    def test_json_lines_schema(self, ctx20):
        m = measure_from_label("driver:quad_z", ctx20.grid)
        rep = check_normalization(ctx20, m, [(0, 20)])
        line = reports_to_json_lines([rep]).splitlines()[0]
        obj = json.loads(line)
        for key in (
            "property",
            "construction",
            "params",
            "verdict",
            "tolerance",
            "max_violation",
            "violation_fraction",
            "witness",
            "seed",
            "n_paths",
            "n_steps",
        ):
            assert key in obj
        assert obj["verdict"] == "pass"
        assert obj["seed"] == ctx20.ensemble.seed

    def test_csv_one_row_per_check(self, ctx20):
        m = measure_from_label("driver:quad_z", ctx20.grid)
        reps = [
            check_normalization(ctx20, m, [(0, 20)]),
            check_restriction(ctx20, m, claim_from_label("brownian", 10), 5, [20]),
        ]
        text = reports_to_csv(reps)
        lines = text.splitlines()
        assert lines[0].startswith("property,construction,params,verdict")
        assert len(lines) == 3
