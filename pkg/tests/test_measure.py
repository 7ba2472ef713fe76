"""Limit measures, moments, boundary traces, schedule reports, Husimi."""

import math

import numpy as np
import pytest

from singlewell.errors import (
    EnergyBelowGround,
    GroundRegimeHasNoTraceLimit,
    PhaseWindowTooSmall,
)
from singlewell.measure import (
    RegimeTarget,
    auto_grid_n,
    branch_balance,
    default_basket,
    default_tolerance,
    husimi,
    limit_measure,
    marginal_l1_distance,
    measure_convergence_report,
    predicted_boundary_traces,
    predicted_moment,
    select_energy,
    smoothed_indicator,
    trend_ok,
    tube_mass_fraction,
    x_marginal,
)

from conftest import make_operator

SHARP_IND_MOMENT = 2.0 * math.asin(0.2) / math.pi  # ~0.128188...


class TestLimitMeasure:
    def test_normalization_constant_arcsine(self, p1):
        # int_{0.5}^{1.5} dx / sqrt(0.25 - (x-1)^2) = pi
        spec = limit_measure(p1, 0.25)
        assert spec.regime == "interior"
        assert spec.c_star == pytest.approx(1.0 / math.pi, abs=1e-8)

    def test_normalization_above_barrier(self, p1):
        # clamped case: int_0^2 dx / sqrt(2 - (x-1)^2) = pi/2
        spec = limit_measure(p1, 2.0)
        assert spec.c_star == pytest.approx(2.0 / math.pi, abs=1e-9)

    def test_against_dense_trapezoid(self, p1):
        s = np.linspace(0.0, 2.0, 1_000_001)
        oracle = 1.0 / np.trapezoid(1.0 / np.sqrt(2.0 - (s - 1.0) ** 2), s)
        spec = limit_measure(p1, 2.0)
        assert spec.c_star == pytest.approx(oracle, abs=1e-9)

    def test_regime_classification(self, p1):
        assert limit_measure(p1, p1.E0).regime == "ground"
        assert limit_measure(p1, math.inf).regime == "highenergy"
        with pytest.raises(EnergyBelowGround):
            limit_measure(p1, -0.1)

    def test_density_integrates_to_one(self, p1):
        spec = limit_measure(p1, 0.25)
        one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
        assert predicted_moment(spec, one) == pytest.approx(1.0, abs=1e-9)


class TestPredictedMoments:
    def test_ground_is_point_evaluation(self, p1):
        spec = limit_measure(p1, p1.E0)
        assert predicted_moment(spec, lambda x: np.asarray(x)) == \
            pytest.approx(1.0, abs=1e-9)

    def test_highenergy_is_mean(self, p1):
        spec = limit_measure(p1, math.inf)
        assert predicted_moment(spec, lambda x: np.asarray(x)) == \
            pytest.approx(1.0, abs=1e-9)

    def test_indicator_closed_form(self, p1):
        spec = limit_measure(p1, 0.25)
        m = predicted_moment(spec, smoothed_indicator(0.9, 1.1))
        assert m == pytest.approx(SHARP_IND_MOMENT, rel=1e-3)

    def test_odd_function_vanishes(self, p1):
        spec = limit_measure(p1, 0.25)
        odd = lambda x: (np.asarray(x) - 1.0) ** 3  # noqa: E731
        assert abs(predicted_moment(spec, odd)) <= 1e-9


class TestBoundaryTraces:
    def test_elliptic_boundary_gives_zero(self, p1):
        spec = limit_measure(p1, 0.25)  # E* < V(0) = 1
        assert predicted_boundary_traces(spec, p1) == (0.0, 0.0)

    def test_hyperbolic_boundary_closed_form(self, p1):
        # 2 C_2 sqrt(2 - 1) = 2 * (2/pi) = 4/pi
        spec = limit_measure(p1, 2.0)
        t0, tL = predicted_boundary_traces(spec, p1)
        assert t0 == pytest.approx(4.0 / math.pi, abs=1e-9)
        assert tL == pytest.approx(4.0 / math.pi, abs=1e-9)

    def test_highenergy_scaled_traces(self, p1):
        spec = limit_measure(p1, math.inf)
        assert predicted_boundary_traces(spec, p1) == (1.0, 1.0)

    def test_ground_regime_raises(self, p1):
        spec = limit_measure(p1, p1.E0)
        with pytest.raises(GroundRegimeHasNoTraceLimit):
            predicted_boundary_traces(spec, p1)

    def test_asymmetric_potential(self, p2):
        # E* = 1: V(0) = 0.49 < E* (hyperbolic), V(2) = 1.69 > E* (elliptic)
        spec = limit_measure(p2, 1.0)
        t0, tL = predicted_boundary_traces(spec, p2)
        assert t0 > 0.0
        assert tL == 0.0


class TestConvergenceReport:
    def test_ground_moment_tracks_well_bottom(self, p1):
        rep = measure_convergence_report(
            p1, None, RegimeTarget.ground(), [0.1, 0.05],
            phis={"x": lambda x: np.asarray(x)}, tolerances={"x": 0.02},
        )
        errs = rep.errors_for("x")
        assert errs[-1] <= 0.02
        assert rep.verdicts["x"]

    def test_moments_are_probability_weighted(self, p1):
        rep = measure_convergence_report(
            p1, None, RegimeTarget.ground(), [0.1],
            phis=default_basket(p1.L),
        )
        for row in rep.rows:
            assert -1.0 - 1e-9 <= row.empirical <= 4.0 + 1e-9  # within phi range

    def test_density_normalized(self, p1_ground_005):
        _, pair = p1_ground_005
        total = pair.h * float(np.sum(pair.psi**2))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_empirical_odd_symmetry(self, p1):
        rep = measure_convergence_report(
            p1, None, RegimeTarget.interior(0.25), [0.05],
            phis={"odd": lambda x: (np.asarray(x) - 1.0) ** 3},
        )
        assert abs(rep.rows[0].empirical) <= 1e-6

    def test_traces_nonnegative(self, p1):
        rep = measure_convergence_report(p1, None, RegimeTarget.interior(2.0),
                                         [0.1, 0.05])
        for tr in rep.trace_rows:
            assert tr.trace0_emp >= 0.0 and tr.traceL_emp >= 0.0

    def test_schedule_must_decrease(self, p1):
        with pytest.raises(ValueError):
            measure_convergence_report(p1, None, RegimeTarget.ground(),
                                       [0.05, 0.1])

    def test_perturbed_ground_regime(self, p1, q3):
        rep = measure_convergence_report(
            p1, q3, RegimeTarget.ground(), [0.1, 0.05],
            phis={"x": lambda x: np.asarray(x)}, tolerances={"x": 0.02},
        )
        assert rep.verdicts["x"]

    def test_verdict_metric_restriction(self, p1):
        rep = measure_convergence_report(
            p1, None, RegimeTarget.ground(), [0.1, 0.05],
            tolerances={"x": 0.02}, verdict_metrics={"x"},
        )
        assert set(rep.verdicts) == {"x"}


class TestTrendLogic:
    def test_noise_floor_counts_as_converged(self):
        assert trend_ok([1e-15, 3e-15, 8e-16], floor=1e-9)

    def test_growth_fails(self):
        assert not trend_ok([1e-3, 2e-3, 4e-3], floor=1e-9)

    def test_mild_wiggle_within_slack(self):
        assert trend_ok([1e-2, 5e-3, 6e-3], floor=1e-9)

    def test_default_tolerance_zero_limit(self):
        assert default_tolerance(0.0) == 1e-4
        assert default_tolerance(2.0) == pytest.approx(0.1)


class TestEnergySelection:
    def test_interior_picks_nearest(self, p1):
        op = make_operator(p1, None, 0.05, e_max=0.5)
        e = select_energy(op, RegimeTarget.interior(0.25))
        assert abs(e - 0.25) <= 0.05  # within one level spacing

    def test_high_energy_targets_fixed_level(self, p1):
        eps = 0.05
        op = make_operator(p1, None, eps, e_max=50.0,
                           n=auto_grid_n(p1, eps, 50.0))
        e = select_energy(op, RegimeTarget.highenergy(50.0))
        assert abs(e - 50.0) <= 2.0  # within one spacing at E ~ 50

    def test_auto_grid_cap(self, p1):
        with pytest.raises(ValueError):
            auto_grid_n(p1, 1e-9, 1.0)


@pytest.fixture(scope="module")
def field_and_pair(p1):
    eps = 0.05
    op = make_operator(p1, None, eps, e_max=0.5)
    from singlewell.eigensolve import eigenpair
    pair = eigenpair(op, select_energy(op, RegimeTarget.interior(0.25)))
    return husimi(pair, p1), pair


class TestHusimi:
    def test_mass_near_one(self, field_and_pair):
        field, _ = field_and_pair
        assert 0.95 <= field.raw_mass <= 1.05
        assert np.all(field.H >= 0.0)

    def test_tube_concentration(self, field_and_pair, p1):
        field, _ = field_and_pair
        assert tube_mass_fraction(field, p1) >= 0.9

    def test_branch_balance_exact_for_real_eigenfunctions(self, field_and_pair):
        field, _ = field_and_pair
        assert branch_balance(field) == pytest.approx(0.5, abs=1e-12)

    def test_marginal_matches_smoothed_density(self, field_and_pair):
        field, pair = field_and_pair
        assert marginal_l1_distance(field, pair) <= 0.1

    def test_marginal_integrates_to_mass(self, field_and_pair):
        field, _ = field_and_pair
        dx = field.x[1] - field.x[0]
        assert float(np.sum(x_marginal(field, raw=False))) * dx == \
            pytest.approx(1.0, abs=1e-9)

    def test_window_too_small(self, field_and_pair, p1):
        _, pair = field_and_pair
        with pytest.raises(PhaseWindowTooSmall):
            husimi(pair, p1, xi_max=0.1)
