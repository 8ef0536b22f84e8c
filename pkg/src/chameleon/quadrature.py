"""Deterministic quadrature of the correlation, normalization and marginal integrals.

Every integrand here is smooth except at known angles (zeros of the cosines
inside ``sgn`` and ``|cos|``), so the domain is split at those breakpoints and
each smooth piece gets composite Gauss-Legendre with node doubling until two
successive estimates agree to the piece's share of the tolerance. The
singlet delta is removed analytically: every integral here is one-dimensional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import model
from .errors import EvaluationError, QuadratureError

TWO_PI = model.TWO_PI
HALF_PI = 0.5 * math.pi

DEFAULT_TOL_CORRELATION = 1e-8
DEFAULT_TOL_NORMALIZATION = 1e-10
DEFAULT_TOL_CHANGE_OF_VARIABLES = 1e-6

MIN_NODES = 8
MAX_NODES = 4096


@dataclass(frozen=True)
class PiecewiseIntegrand:
    """A vectorized real function, smooth between the listed breakpoints."""

    function: Callable[[np.ndarray], np.ndarray]
    breakpoints: Sequence[float] = field(default_factory=tuple)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _gl(f, lo: float, hi: float, n: int) -> float:
    x, w = _gauss_legendre(n)
    half = 0.5 * (hi - lo)
    vals = np.asarray(f(0.5 * (hi + lo) + half * x), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError(f"non-finite integrand value on [{lo!r}, {hi!r}]")
    return half * float(np.dot(w, vals))


def _piece(f, lo: float, hi: float, tol: float, min_nodes: int) -> float:
    n = min_nodes
    prev = _gl(f, lo, hi, n)
    while n < MAX_NODES:
        n *= 2
        cur = _gl(f, lo, hi, n)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"no convergence to {tol:g} on [{lo!r}, {hi!r}] with {n} nodes")


def integrate_piecewise(
    f: PiecewiseIntegrand, lo: float, hi: float, tol: float, *, min_nodes: int = MIN_NODES
) -> float:
    if not tol > 0:
        raise ValueError("tol must be positive")
    if hi < lo:
        raise ValueError("need lo <= hi")
    if hi == lo:
        return 0.0
    inner = sorted({float(p) for p in f.breakpoints if lo < p < hi})
    edges = [lo, *inner, hi]
    total = 0.0
    span = hi - lo
    for left, right in zip(edges[:-1], edges[1:]):
        if right > left:
            total += _piece(f.function, left, right, tol * (right - left) / span, min_nodes)
    return total


def setting_breakpoints(*settings: float) -> list[float]:
    """Angles in [0, 2pi) where cos(lam - x) vanishes for any of the settings."""
    pts = set()
    for x in settings:
        pts.add(model.normalize_angle(x + HALF_PI))
        pts.add(model.normalize_angle(x - HALF_PI))
    return sorted(pts)


def correlation_quadrature(a: float, b: float, tol: float = DEFAULT_TOL_CORRELATION, **kw) -> float:
    a, b = model.normalize_angle(a), model.normalize_angle(b)

    def integrand(lam):
        return (
            model.observable_station1(a, lam)
            * model.observable_station2(b, lam)
            * model.weight_station1(a, lam)
            * model.weight_station2(b, lam)
        )

    f = PiecewiseIntegrand(integrand, setting_breakpoints(a, b))
    return integrate_piecewise(f, 0.0, TWO_PI, tol * TWO_PI, **kw) / TWO_PI


def normalization_quadrature(a: float, b: float, tol: float = DEFAULT_TOL_NORMALIZATION, **kw) -> float:
    a, b = model.normalize_angle(a), model.normalize_angle(b)

    def integrand(lam):
        return model.weight_station1(a, lam) * model.weight_station2(b, lam)

    f = PiecewiseIntegrand(integrand, setting_breakpoints(a, b))
    return integrate_piecewise(f, 0.0, TWO_PI, tol * TWO_PI, **kw) / TWO_PI


def marginal_quadrature(station: int, a: float, b: float, tol: float = DEFAULT_TOL_CORRELATION, **kw) -> float:
    """Weighted mean of one station's sign; zero means no signalling at the level of averages."""
    a, b = model.normalize_angle(a), model.normalize_angle(b)
    if station == 1:
        sign = lambda lam: model.observable_station1(a, lam)  # noqa: E731
    elif station == 2:
        sign = lambda lam: model.observable_station2(b, lam)  # noqa: E731
    else:
        raise ValueError(f"station must be 1 or 2, got {station!r}")

    def integrand(lam):
        return sign(lam) * model.weight_station1(a, lam) * model.weight_station2(b, lam)

    f = PiecewiseIntegrand(integrand, setting_breakpoints(a, b))
    return integrate_piecewise(f, 0.0, TWO_PI, tol * TWO_PI, **kw) / TWO_PI


def correlation_change_of_variables(
    a: float, b: float, tol: float = DEFAULT_TOL_CHANGE_OF_VARIABLES, **kw
) -> float:
    """Correlation computed in the transported coordinate ``mu = T_1,a(lam)``.

    Integrating the delta out against ``mu_2`` (station 2's map is linear)
    leaves ``(2pi)^-1 ∫ S~1(mu) S~2(T2 T1^-1 mu) T2'(T1^-1 mu) dmu`` over
    ``[0, sqrt(2pi)]``, where ``T1^-1`` comes from bisection.
    """
    a, b = model.normalize_angle(a), model.normalize_angle(b)

    def integrand(mu):
        lam = model.invert_transport_station1(a, mu)
        mu2 = model.transport_map_station2(b, lam)
        # S~1(mu) = S1(T1^-1 mu); lam is reused rather than inverted twice
        return (
            model.observable_station1(a, lam)
            * model.measured_observable_station2(b, mu2)
            * model.weight_station2(b, lam)
        )

    mu_breaks = [model.transport_map_station1(a, p) for p in setting_breakpoints(a, b)]
    f = PiecewiseIntegrand(integrand, mu_breaks)
    return integrate_piecewise(f, 0.0, model.TRANSPORT1_TOTAL, tol * TWO_PI, **kw) / TWO_PI
