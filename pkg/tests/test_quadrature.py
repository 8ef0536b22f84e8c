import math

import numpy as np
import pytest
from scipy import integrate

from chameleon import model, quadrature
from chameleon.errors import EvaluationError
from chameleon.quadrature import PiecewiseIntegrand, integrate_piecewise

PI = math.pi
GRID16 = [2 * PI * i / 16 for i in range(16)]
GRID8 = [2 * PI * i / 8 for i in range(8)]


class TestIntegratePiecewise:
    def test_abs_cos(self):
        f = PiecewiseIntegrand(lambda x: np.abs(np.cos(x)), [PI / 2, 3 * PI / 2])
        assert integrate_piecewise(f, 0, 2 * PI, 1e-12) == pytest.approx(4.0, abs=1e-12)

    def test_cos_full_period(self):
        assert integrate_piecewise(PiecewiseIntegrand(np.cos), 0, 2 * PI, 1e-12) == pytest.approx(0.0, abs=1e-12)

    def test_constant(self):
        f = PiecewiseIntegrand(lambda x: np.ones_like(x))
        assert integrate_piecewise(f, 0, 2 * PI, 1e-12) == pytest.approx(2 * PI, rel=1e-15)

    def test_step_function_exact_with_breakpoint(self):
        f = PiecewiseIntegrand(lambda x: np.where(x < 1.0, -1.0, 2.0), [1.0])
        assert integrate_piecewise(f, 0, 3, 1e-12) == pytest.approx(-1.0 + 4.0, abs=1e-13)

    def test_empty_interval(self):
        assert integrate_piecewise(PiecewiseIntegrand(np.cos), 1.0, 1.0, 1e-8) == 0.0

    def test_non_finite_raises(self):
        f = PiecewiseIntegrand(lambda x: np.full_like(x, np.nan))
        with pytest.raises(EvaluationError):
            integrate_piecewise(f, 0, 1, 1e-8)

    @pytest.mark.parametrize("lo,hi,tol", [(1, 0, 1e-8), (0, 1, 0.0), (0, 1, -1.0)])
    def test_bad_arguments(self, lo, hi, tol):
        with pytest.raises(ValueError):
            integrate_piecewise(PiecewiseIntegrand(np.cos), lo, hi, tol)


class TestCorrelation:
    @pytest.mark.parametrize("a,b,e", [(0, 0, -1.0), (0, PI / 3, -0.5), (0, PI / 2, 0.0)])
    def test_examples(self, a, b, e):
        assert quadrature.correlation_quadrature(a, b) == pytest.approx(e, abs=1e-8)

    def test_grid_matches_closed_form(self):
        worst = max(abs(quadrature.correlation_quadrature(a, b) + math.cos(b - a)) for a in GRID16 for b in GRID16)
        assert worst <= 1e-8

    def test_depends_only_on_difference(self):
        rng = np.random.default_rng(11)
        for a, b in rng.uniform(0, 2 * PI, size=(20, 2)):
            assert abs(quadrature.correlation_quadrature(a, b) - quadrature.correlation_quadrature(0, b - a)) <= 1e-8

    def test_refinement_convergence(self):
        for a, b in [(0.1, 2.0), (3.0, 0.4), (PI / 4, 5 * PI / 4)]:
            coarse = quadrature.correlation_quadrature(a, b, 1e-8, min_nodes=8)
            fine = quadrature.correlation_quadrature(a, b, 1e-8, min_nodes=16)
            assert abs(coarse - fine) <= 1e-8

    @pytest.mark.parametrize("a,b", [(0.2, 1.7), (4.0, 0.5)])
    def test_against_scipy(self, a, b):
        # independent integrator on the raw integrand
        def f(lam):
            return float(
                model.observable_station1(a, lam) * model.observable_station2(b, lam)
                * model.weight_station1(a, lam) * model.weight_station2(b, lam)
            )

        ref, _ = integrate.quad(f, 0, 2 * PI, points=quadrature.setting_breakpoints(a, b), limit=200, epsabs=1e-13)
        assert quadrature.correlation_quadrature(a, b) == pytest.approx(ref / (2 * PI), abs=1e-10)


class TestNormalization:
    @pytest.mark.parametrize("a,b", [(0, 0), (1.0, 2.0), (PI, PI / 6)])
    def test_examples(self, a, b):
        assert quadrature.normalization_quadrature(a, b) == pytest.approx(1.0, abs=1e-10)

    def test_grid(self):
        assert max(abs(quadrature.normalization_quadrature(a, b) - 1) for a in GRID16 for b in GRID16) <= 1e-10


class TestMarginals:
    @pytest.mark.parametrize("station,a,b", [(1, 0, 0), (2, 0, PI / 2), (2, 0.7, 2.1)])
    def test_examples(self, station, a, b):
        assert quadrature.marginal_quadrature(station, a, b) == pytest.approx(0.0, abs=1e-8)

    def test_brute_force_oracle(self):
        # scipy adaptive quadrature of station 2's marginal, independent of our nodes
        a, b = 0.7, 2.1

        def f(lam):
            return float(model.observable_station2(b, lam) * model.weight_station1(a, lam) * model.weight_station2(b, lam))

        ref, _ = integrate.quad(f, 0, 2 * PI, points=quadrature.setting_breakpoints(a, b), limit=200, epsabs=1e-13)
        assert abs(ref / (2 * PI)) <= 1e-8
        assert quadrature.marginal_quadrature(2, a, b) == pytest.approx(ref / (2 * PI), abs=1e-10)

    def test_grid(self):
        for station in (1, 2):
            assert max(abs(quadrature.marginal_quadrature(station, a, b)) for a in GRID16 for b in GRID16) <= 1e-8

    def test_bad_station(self):
        with pytest.raises(ValueError):
            quadrature.marginal_quadrature(3, 0, 0)


class TestChangeOfVariables:
    @pytest.mark.parametrize("a,b,e", [(0, 0, -1.0), (0, PI / 4, -math.sqrt(2) / 2)])
    def test_examples(self, a, b, e):
        assert quadrature.correlation_change_of_variables(a, b) == pytest.approx(e, abs=1e-6)

    def test_grid_agrees_with_lambda_form(self):
        worst = max(
            abs(quadrature.correlation_change_of_variables(a, b) - quadrature.correlation_quadrature(a, b))
            for a in GRID8
            for b in GRID8
        )
        assert worst <= 1e-6

    def test_off_grid_settings(self):
        rng = np.random.default_rng(5)
        for a, b in rng.uniform(0, 2 * PI, size=(6, 2)):
            assert quadrature.correlation_change_of_variables(a, b) == pytest.approx(-math.cos(b - a), abs=1e-6)
