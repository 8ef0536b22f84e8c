"""Local deterministic model of the singlet correlations.

Station 1 measures ``sgn(cos(lam - a))`` and carries the dynamical weight
``sqrt(2 pi)/4 |cos(lam - a)|``; station 2 measures the opposite sign for its
own setting and carries the constant weight ``sqrt(2 pi)``. Averaging the
weighted product of signs over a uniform hidden angle gives ``-cos(b - a)``.

All functions accept floats or numpy arrays and broadcast.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(TWO_PI)
WEIGHT1_PEAK = SQRT_2PI / 4.0
# T_1,a(2 pi) and T_2,b(2 pi)
TRANSPORT1_TOTAL = SQRT_2PI
TRANSPORT2_TOTAL = TWO_PI * SQRT_2PI

_BISECTION_STEPS = 64


def normalize_angle(x):
    """Reduce an angle modulo 2*pi into [0, 2*pi)."""
    if np.ndim(x) == 0:
        r = float(x) % TWO_PI
        return 0.0 if r >= TWO_PI else r
    r = np.mod(np.asarray(x, dtype=np.float64), TWO_PI)
    return np.where(r >= TWO_PI, 0.0, r)


_PI_RE = re.compile(
    r"^(?P<sign>[+-]?)\s*(?P<num>\d+(?:\.\d+)?)?\s*\*?\s*(?:pi|π)\s*(?:/\s*(?P<den>\d+(?:\.\d+)?))?$"
)


def parse_angle(text) -> float:
    """Parse radians given as a decimal or as a multiple of pi (``3pi/4``, ``-pi/2``)."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value = float(text)
    else:
        s = str(text).strip().lower()
        m = _PI_RE.match(s)
        if m:
            num = Fraction(m.group("num") or "1")
            den = Fraction(m.group("den") or "1")
            if den == 0:
                raise ValueError(f"invalid angle: {text!r}")
            value = math.pi * float(num) / float(den)
            if m.group("sign") == "-":
                value = -value
        else:
            try:
                value = float(s)
            except ValueError:
                raise ValueError(f"invalid angle: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"invalid angle: {text!r}")
    return value


def sgn(x):
    """Sign with the tie convention ``sgn(0) = +1``."""
    if np.ndim(x) == 0:
        return 1 if x >= 0 else -1
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def observable_station1(a, lam):
    return sgn(np.cos(lam - normalize_angle(a)))


def observable_station2(b, lam):
    # singlet condition: opposite of station 1's observable at the same setting
    return -observable_station1(b, lam)


def weight_station1(a, lam):
    return WEIGHT1_PEAK * np.abs(np.cos(lam - normalize_angle(a)))


def weight_station2(b, lam):
    if np.ndim(b) == 0 and np.ndim(lam) == 0:
        return SQRT_2PI
    return np.full(np.broadcast(np.asarray(b), np.asarray(lam)).shape, SQRT_2PI)


def closed_form_correlation(a, b):
    return -np.cos(normalize_angle(b) - normalize_angle(a))


def _abs_cos_integral(v):
    # integral of |cos t| over [0, v]; each half period contributes 2
    v = np.asarray(v, dtype=np.float64)
    k = np.floor(v / math.pi)
    r = v - k * math.pi
    s = np.sin(r)
    return 2.0 * k + np.where(r <= math.pi / 2, s, 2.0 - s)


def transport_map_station1(a, lam):
    """Antiderivative of :func:`weight_station1` from 0; maps [0, 2pi] onto [0, sqrt(2pi)]."""
    a = normalize_angle(a)
    out = WEIGHT1_PEAK * (_abs_cos_integral(np.asarray(lam) - a) - _abs_cos_integral(-a))
    return float(out) if np.ndim(out) == 0 else out


def invert_transport_station1(a, y):
    """Smallest ``lam`` in [0, 2pi] with ``transport_map_station1(a, lam) >= y`` (bisection)."""
    y_arr = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(y_arr)) or np.any(y_arr < 0.0) or np.any(y_arr > TRANSPORT1_TOTAL):
        raise DomainError(f"transport value outside [0, sqrt(2 pi)]: {y!r}")
    a = normalize_angle(a)
    lo = np.zeros_like(y_arr)
    hi = np.full_like(y_arr, TWO_PI)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = transport_map_station1(a, mid) < y_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    hi = np.where(y_arr == 0.0, 0.0, hi)
    return float(hi) if np.ndim(hi) == 0 else hi


def transport_map_station2(b, lam):
    out = SQRT_2PI * np.asarray(lam, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def invert_transport_station2(b, y):
    y_arr = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(y_arr)) or np.any(y_arr < 0.0) or np.any(y_arr > TRANSPORT2_TOTAL):
        raise DomainError(f"transport value outside [0, 2 pi sqrt(2 pi)]: {y!r}")
    out = y_arr / SQRT_2PI
    return float(out) if np.ndim(out) == 0 else out


def measured_observable_station1(a, mu):
    """Station-1 observable on the transported state ``mu``, i.e. S(T^-1 mu)."""
    return observable_station1(a, invert_transport_station1(a, mu))


def measured_observable_station2(b, mu):
    return observable_station2(b, invert_transport_station2(b, mu))


# -- locality combinators ----------------------------------------------------


@dataclass(frozen=True)
class LocalDynamics:
    """A single-particle dynamics: transport map and its (nonnegative) density."""

    transport: Callable
    density: Callable


def dynamics_station1(a) -> LocalDynamics:
    a = normalize_angle(a)
    return LocalDynamics(
        transport=lambda lam: transport_map_station1(a, lam),
        density=lambda lam: weight_station1(a, lam),
    )


def dynamics_station2(b) -> LocalDynamics:
    b = normalize_angle(b)
    return LocalDynamics(
        transport=lambda lam: transport_map_station2(b, lam),
        density=lambda lam: weight_station2(b, lam),
    )


IDENTITY_DYNAMICS = LocalDynamics(transport=lambda x: x, density=lambda x: np.ones_like(np.asarray(x, dtype=float)))


def tensor(f: Callable, g: Callable) -> Callable:
    """``(f ⊗ g)(u, v) = f(u) g(v)``."""
    return lambda u, v: f(u) * g(v)


def local_dynamics_apply(d1: LocalDynamics, d2: LocalDynamics, F: Callable) -> Callable:
    """Joint evolution ``(u, v) -> tau1(u) F(T1 u, T2 v) tau2(v)`` of a two-point observable."""

    def evolved(u, v):
        return d1.density(u) * F(d1.transport(u), d2.transport(v)) * d2.density(v)

    return evolved


def reduced_dynamics_station1(d: LocalDynamics, f: Callable) -> Callable:
    return lambda u: d.density(u) * f(d.transport(u))


def reduced_dynamics_station2(d: LocalDynamics, g: Callable) -> Callable:
    return lambda v: g(d.transport(v)) * d.density(v)
