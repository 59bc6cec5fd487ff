"""Named driver fixtures.

Each factory returns a :class:`~jumpbsde.bsde.Driver` with its
regularity declarations filled in.  Registry names are the ones the
CLI config accepts.  All callables broadcast over array arguments.
"""

from __future__ import annotations

import math

import numpy as np

from .bsde import Driver

__all__ = ["zero", "constant", "linear", "osc_sqrtlog", "finance_discount",
           "shifted", "REGISTRY", "from_config"]

_E = math.e


def zero() -> Driver:
    """f = 0."""
    return Driver(
        f=lambda t, x, y, z, zn: 0.0 * y,
        growth_scale=1.0,
        growth_exponent=0.5,
        lipschitz_profile=lambda m: 0.0,
        global_lipschitz=0.0,
        universal_lipschitz=0.0,
    )


def constant(c: float) -> Driver:
    """f = c."""
    c = float(c)
    return Driver(
        f=lambda t, x, y, z, zn: c + 0.0 * y,
        growth_scale=max(abs(c), 1.0),
        growth_exponent=0.5,
        lipschitz_profile=lambda m: 0.0,
        global_lipschitz=0.0,
        universal_lipschitz=0.0,
    )


def linear(a: float, c: float = 0.0) -> Driver:
    """f = a*y + c, globally Lipschitz.

    Linear growth in y exceeds any sublinear profile far out, so the
    declared growth bound only holds on a finite ball (growth_ball).
    """
    a, c = float(a), float(c)
    return Driver(
        f=lambda t, x, y, z, zn: a * y + c,
        growth_scale=1.0 + abs(a) + abs(c),
        growth_exponent=0.5,
        lipschitz_profile=lambda m: abs(a),
        global_lipschitz=abs(a),
        universal_lipschitz=abs(a),
        growth_ball=10.0,
    )


def osc_sqrtlog(scale: float = 1.0) -> Driver:
    """f = scale * sin(y * sqrt(log(e + |y|))), locally Lipschitz.

    Bounded, so the growth bound holds everywhere; the Lipschitz
    constant on the radius-M ball grows like sqrt(log M), matching the
    admissible profile with offset 2*scale.
    """
    scale = float(scale)
    if scale <= 0.0:
        raise ValueError("scale must be positive")

    def f(t, x, y, z, zn):
        y = np.asarray(y, dtype=float)
        return scale * np.sin(y * np.sqrt(np.log(_E + np.abs(y))))

    # |f'(y)| <= sqrt(log(e+M)) + 1/2 on |y| <= M  (derivative bound)
    return Driver(
        f=f,
        growth_scale=scale,
        growth_exponent=0.5,
        lipschitz_profile=lambda m: scale * (math.sqrt(math.log(_E + m)) + 0.5),
        global_lipschitz=None,
        universal_lipschitz=2.0 * scale,
    )


def finance_discount(rate: float) -> Driver:
    """Wealth generator g = -rate * y (pure discounting)."""
    rate = float(rate)
    if rate < 0.0:
        raise ValueError("discount rate must be nonnegative")
    return Driver(
        f=lambda t, x, y, z, zn: -rate * y,
        growth_scale=1.0 + rate,
        growth_exponent=0.5,
        lipschitz_profile=lambda m: rate,
        global_lipschitz=rate,
        universal_lipschitz=rate,
        growth_ball=10.0,
    )


def shifted(driver: Driver, offset: float) -> Driver:
    """Driver plus a constant; same regularity, growth scale widened."""
    offset = float(offset)
    return Driver(
        f=lambda t, x, y, z, zn: driver.f(t, x, y, z, zn) + offset,
        growth_scale=driver.growth_scale + abs(offset),
        growth_exponent=driver.growth_exponent,
        lipschitz_profile=driver.lipschitz_profile,
        global_lipschitz=driver.global_lipschitz,
        universal_lipschitz=driver.universal_lipschitz,
        growth_ball=driver.growth_ball,
    )


REGISTRY = {
    "zero": zero,
    "const": constant,
    "linear": linear,
    "osc_sqrtlog": osc_sqrtlog,
    "finance_discount": finance_discount,
}


def from_config(name: str, params: dict | None = None) -> Driver:
    if name not in REGISTRY:
        raise ValueError(f"unknown driver {name!r}; known: {sorted(REGISTRY)}")
    try:
        return REGISTRY[name](**(params or {}))
    except TypeError as exc:
        raise ValueError(f"bad parameters for driver {name!r}: {exc}") from None
