"""Preference and market parameters for Epstein-Zin utility with theta > 1.

All records are frozen and validated on construction, so downstream code can
rely on their invariants without re-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import IllPosed, ThetaOutOfRegime


@dataclass(frozen=True)
class PreferenceParams:
    """Risk aversion ``R`` and elasticity parameter ``S`` of the agent.

    ``theta = (1-R)/(1-S)`` and ``rho = (theta-1)/theta`` are derived.  Only
    the regime ``theta > 1`` (i.e. ``R < S < 1`` or ``1 < S < R``) is accepted.
    """

    R: float
    S: float
    theta: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self):
        R, S = float(self.R), float(self.S)
        for name, v in (("R", R), ("S", S)):
            if not (v > 0 and v != 1 and math.isfinite(v)):
                raise ThetaOutOfRegime(f"{name} must lie in (0,1) or (1,inf), got {v}")
        if (1 - R) * (1 - S) <= 0:
            raise ThetaOutOfRegime(f"1-R and 1-S have different signs (R={R}, S={S})")
        theta = (1 - R) / (1 - S)
        if theta <= 1:
            raise ThetaOutOfRegime(f"theta = {theta:.6g} <= 1 (R={R}, S={S})")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "theta", theta)
        # (S-R)/(1-R) is algebraically equal to (theta-1)/theta and rounds better
        object.__setattr__(self, "rho", (S - R) / (1 - R))

    @property
    def one_minus_R(self) -> float:
        return 1.0 - self.R


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes-Merton market with Sharpe ratio ``lam`` and constant ``eta``."""

    r: float
    mu: float
    sigma: float
    lam: float
    eta: float


@dataclass(frozen=True)
class Strategy:
    """Constant proportional strategy: fraction ``pi`` in the risky asset and
    consumption rate ``xi`` per unit wealth.  ``H`` is its growth constant."""

    pi: float
    xi: float
    H: float

    @property
    def in_D(self) -> bool:
        return self.xi > 0 and self.H > 0


def derive_preferences(R: float, S: float) -> PreferenceParams:
    return PreferenceParams(R, S)


def derive_market(r: float, mu: float, sigma: float, prefs: PreferenceParams) -> MarketParams:
    """Build the market record; raises :class:`IllPosed` when ``eta <= 0``."""
    if not sigma > 0:
        raise IllPosed(f"volatility must be positive, got {sigma}")
    lam = (mu - r) / sigma
    eta = (prefs.S - 1) / prefs.S * (r + lam**2 / (2 * prefs.R))
    if not eta > 0:
        raise IllPosed(f"eta = {eta:.6g} <= 0: the Merton problem is ill-posed")
    return MarketParams(float(r), float(mu), float(sigma), float(lam), float(eta))


def growth_H(pi, xi, market: MarketParams, prefs: PreferenceParams):
    """H(pi, xi) = (R-1)(r + pi(mu-r) - xi - pi^2 sigma^2 R / 2).

    Vectorises over numpy arrays.  Negative values are returned as-is; the
    caller decides whether the pair lies in D.
    """
    R = prefs.R
    return (R - 1) * (
        market.r + pi * (market.mu - market.r) - xi - 0.5 * pi**2 * market.sigma**2 * R
    )


def make_strategy(pi: float, xi: float, market: MarketParams, prefs: PreferenceParams) -> Strategy:
    if xi < 0:
        raise ValueError(f"consumption rate must be nonnegative, got {xi}")
    return Strategy(float(pi), float(xi), float(growth_H(pi, xi, market, prefs)))
