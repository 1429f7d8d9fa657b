import math

import numpy as np
import pytest

from anyctrl.aggregate import build_aggregate
from anyctrl.certify import (
    LyapunovRates,
    corollary15_gap,
    f_bar,
    omega,
    region_boundary,
    theta,
    upsilon,
    upsilon_matrix_oracle,
    upsilon_profile,
)
from anyctrl.chain import uniform_chain
from anyctrl.errors import GridOutOfRange, NotApplicable

from helpers import random_chain, series_omega, series_theta


def f_bar2_closed(rho: float) -> float:
    return 3.0 * (3.0 - rho) / (9.0 - 6.0 * rho - rho * rho)


class TestOmega:
    def test_rho_zero_collapses_to_hold_term(self, uniform2):
        agg = build_aggregate(uniform2)
        cert = omega(agg, LyapunovRates(rho=0.0, alpha=1.7))
        assert cert.value == pytest.approx(1.7 * agg.q00, abs=1e-15)

    def test_uniform2_closed_form_over_grid(self, uniform2):
        agg = build_aggregate(uniform2)
        for rho in np.linspace(0.0, 0.95, 20):
            cert = omega(agg, LyapunovRates(rho=float(rho), alpha=1.2))
            assert cert.value == pytest.approx((1.2 / 3.0) * f_bar2_closed(rho), abs=1e-12)

    def test_reference_value(self, uniform2):
        cert = omega(build_aggregate(uniform2), LyapunovRates(rho=0.5, alpha=1.2))
        assert cert.value == pytest.approx(0.5217391304347826, abs=1e-12)
        assert cert.stable
        assert cert.bound_coefficient == pytest.approx((1 + 1.2 - 0.5) / ((1 - cert.value) * 0.5), abs=1e-9)

    def test_matches_series_oracle(self, uniform2, case_study):
        rng = np.random.default_rng(30)
        chains = [uniform2, case_study] + [random_chain(rng, int(rng.integers(1, 6))) for _ in range(10)]
        for chain in chains:
            for rho, alpha in ((0.3, 1.5), (0.9, 1.1)):
                rates = LyapunovRates(rho=rho, alpha=alpha)
                closed = omega(build_aggregate(chain), rates).value
                series = series_omega(chain, rates, j_max=500)
                assert abs(closed - series) <= alpha * rho**500 / (1 - rho) + 1e-10

    def test_alpha_linearity_exact(self, case_study):
        agg = build_aggregate(case_study)
        base = omega(agg, LyapunovRates(rho=0.7, alpha=1.0)).value
        assert omega(agg, LyapunovRates(rho=0.7, alpha=1.9)).value == 1.9 * base

    def test_coarse_upper_bound_and_monotonicity(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            chain = random_chain(rng, int(rng.integers(1, 6)))
            agg = build_aggregate(chain)
            q00 = agg.q00
            prev = -1.0
            for rho in np.linspace(0.0, 0.9, 10):
                value = omega(agg, LyapunovRates(rho=float(rho), alpha=1.3)).value
                assert value <= 1.3 * (q00 + rho * (1 - q00)) + 1e-12
                assert value >= prev - 1e-12
                prev = value

    def test_unstable_has_infinite_bound(self, uniform2):
        cert = omega(build_aggregate(uniform2), LyapunovRates(rho=0.5, alpha=3.5))
        assert not cert.stable
        assert math.isinf(cert.bound_coefficient)


class TestTheta:
    def test_rho_zero(self, case_study):
        cert = theta(case_study, LyapunovRates(rho=0.0, alpha=1.7))
        assert cert.value == pytest.approx(1.7 * float(case_study.q[0, 0]), abs=1e-15)

    def test_two_state_closed_form(self):
        rng = np.random.default_rng(32)
        chain = random_chain(rng, 1)
        q00, q11 = float(chain.q[0, 0]), float(chain.q[1, 1])
        for rho, alpha in ((0.4, 1.3), (0.85, 1.05)):
            closed = (alpha * q00 * (1 - rho * q11) + alpha * rho * (1 - q00) * (1 - q11)) / (1 - rho * q11)
            assert theta(chain, LyapunovRates(rho=rho, alpha=alpha)).value == pytest.approx(closed, abs=1e-13)

    def test_case_study_matches_series(self, case_study):
        rates = LyapunovRates(rho=0.9, alpha=1.1)
        closed = theta(case_study, rates).value
        assert abs(closed - series_theta(case_study, rates, j_max=500)) < 1e-10

    def test_alpha_linearity_exact(self, uniform2):
        base = theta(uniform2, LyapunovRates(rho=0.6, alpha=1.0)).value
        assert theta(uniform2, LyapunovRates(rho=0.6, alpha=2.5)).value == 2.5 * base


class TestUpsilon:
    def test_hypothesis_failure_raises(self, uniform2):
        with pytest.raises(NotApplicable):
            upsilon(uniform2, LyapunovRates(rho=0.5, alpha=3.2))

    def test_rho_zero_gives_zero(self, case_study):
        profile = upsilon_profile(case_study, LyapunovRates(rho=0.0, alpha=1.4))
        np.testing.assert_allclose(profile, 0.0, atol=1e-15)

    @pytest.mark.parametrize("capacity", [2, 3, 5])
    def test_uniform_closed_form_at_two(self, capacity):
        chain = uniform_chain(capacity)
        rates = LyapunovRates(rho=0.5, alpha=2.0)
        profile = upsilon_profile(chain, rates)
        assert profile[0] == pytest.approx(0.5 * capacity / (capacity + 1 - 2.0), abs=1e-12)
        assert profile.argmax() == 0

    def test_upsilon_not_alpha_linear(self, uniform2):
        one = upsilon(uniform2, LyapunovRates(rho=0.5, alpha=1.0)).value
        scaled = upsilon(uniform2, LyapunovRates(rho=0.5, alpha=1.5)).value
        assert scaled != pytest.approx(1.5 * one, rel=1e-6)

    def test_matrix_oracle_agreement(self):
        rng = np.random.default_rng(33)
        for _ in range(25):
            capacity = int(rng.integers(2, 7))
            chain = random_chain(rng, capacity)
            rho = float(rng.uniform(0.05, 0.95))
            alpha = float(rng.uniform(rho, 0.9 / float(chain.q[0, 0])))
            rates = LyapunovRates(rho=rho, alpha=alpha)
            profile = upsilon_profile(chain, rates)
            for varsigma in range(2, capacity + 2):
                oracle = upsilon_matrix_oracle(chain, rates, varsigma)
                assert profile[varsigma - 2] == pytest.approx(oracle, abs=1e-10)

    def test_matrix_oracle_uniform_closed_form(self):
        chain = uniform_chain(5)
        assert upsilon_matrix_oracle(chain, LyapunovRates(rho=0.5, alpha=2.0), 2) == pytest.approx(
            0.625, abs=1e-12
        )

    def test_matrix_oracle_rho_zero(self, uniform2):
        for varsigma in (2, 3):
            assert upsilon_matrix_oracle(uniform2, LyapunovRates(rho=0.0, alpha=1.5), varsigma) == pytest.approx(
                0.0, abs=1e-15
            )

    def test_matrix_oracle_varsigma_range(self, uniform2):
        with pytest.raises(ValueError):
            upsilon_matrix_oracle(uniform2, LyapunovRates(rho=0.5, alpha=1.0), 4)


class TestRegionBoundary:
    def test_omega_at_rho_zero(self, case_study):
        points = region_boundary("omega", case_study, [0.0])
        assert points[0].alpha_star == pytest.approx(1.0 / float(case_study.q[0, 0]), abs=1e-12)

    def test_omega_uniform2_reference(self, uniform2):
        points = region_boundary("omega", uniform2, [0.5])
        assert points[0].alpha_star == pytest.approx(2.3, abs=1e-12)

    def test_upsilon_capped_at_rho_zero(self, case_study):
        points = region_boundary("upsilon", case_study, [0.0])
        assert points[0].capped
        assert points[0].alpha_star == pytest.approx(5.0, abs=1e-12)

    def test_upsilon_boundary_sits_at_unit_criterion(self, case_study):
        rho = 0.6
        point = region_boundary("upsilon", case_study, [rho])[0]
        assert not point.capped
        value = upsilon_profile(case_study, LyapunovRates(rho=rho, alpha=point.alpha_star)).max()
        assert value == pytest.approx(1.0, abs=1e-6)
        below = upsilon_profile(case_study, LyapunovRates(rho=rho, alpha=point.alpha_star - 1e-6)).max()
        assert below < 1.0

    def test_containment_on_case_study(self, case_study):
        grid = np.linspace(0.0, 0.99, 25)
        om = region_boundary("omega", case_study, grid)
        up = region_boundary("upsilon", case_study, grid)
        for o, u in zip(om, up):
            assert o.alpha_star >= u.alpha_star - 2e-8

    def test_grid_validation(self, uniform2):
        with pytest.raises(GridOutOfRange):
            region_boundary("omega", uniform2, [])
        with pytest.raises(GridOutOfRange):
            region_boundary("omega", uniform2, [0.5, 1.0])
        with pytest.raises(ValueError):
            region_boundary("sigma", uniform2, [0.5])


class TestFBar:
    def test_capacity2_closed_form(self):
        for rho in np.linspace(0.0, 0.98, 50):
            assert f_bar(2, float(rho)) == pytest.approx(f_bar2_closed(float(rho)), abs=1e-12)

    @pytest.mark.parametrize("capacity", range(1, 8))
    def test_value_one_at_rho_zero(self, capacity):
        assert f_bar(capacity, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_capacity5_matches_series(self):
        chain = uniform_chain(5)
        rates = LyapunovRates(rho=0.9, alpha=1.0)
        series = series_omega(chain, rates, j_max=500)
        assert f_bar(5, 0.9) / 6.0 == pytest.approx(series, abs=1e-10)

    def test_omega_scaling_identity(self, uniform2):
        agg = build_aggregate(uniform2)
        for rho in (0.2, 0.7):
            cert = omega(agg, LyapunovRates(rho=rho, alpha=1.4))
            assert cert.value == pytest.approx((1.4 / 3.0) * f_bar(2, rho), abs=1e-13)


class TestConservatismGap:
    def test_capacity2_strict_inside_unit_interval(self):
        for rho in np.linspace(0.02, 0.98, 25):
            gap = corollary15_gap(2, float(rho))
            assert gap.theorem1_less_conservative
            assert gap.lhs < gap.rhs

    def test_equality_at_rho_zero(self):
        gap = corollary15_gap(2, 0.0)
        assert gap.lhs == pytest.approx(gap.rhs, abs=1e-12)
        assert not gap.theorem1_less_conservative

    def test_capacity5_reference_point(self):
        gap = corollary15_gap(5, 0.5)
        assert gap.theorem1_less_conservative
        assert gap.rhs == 6.0


class TestLyapunovRates:
    def test_rho_range(self):
        with pytest.raises(ValueError):
            LyapunovRates(rho=1.0, alpha=1.0)
        with pytest.raises(ValueError):
            LyapunovRates(rho=-0.1, alpha=1.0)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            LyapunovRates(rho=0.5, alpha=-0.5)
