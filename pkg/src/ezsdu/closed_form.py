"""Closed forms for constant proportional strategies.

Covers the candidate value function, the utility coefficient ``h(pi, xi)``,
the optimal pair and the family of utility processes
``V_t = A(t) xi^{1-R} X_t^{1-R} / (1-R)`` that are absorbed at zero at a time
``T``.  Infinite absorption times are represented by ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergentFamily, IllPosed, OutsideD
from .params import MarketParams, PreferenceParams, Strategy, growth_H, make_strategy


@dataclass(frozen=True)
class ProportionalSolution:
    strategy: Strategy
    h_value: float
    J_coefficient: float  # 1/H, so that J^{C^{1-R}}_t = C_t^{1-R} / H


def candidate_value(x, market: MarketParams, prefs: PreferenceParams):
    """``eta^{-theta S} x^{1-R} / (1-R)``, the value of the optimal strategy."""
    if not market.eta > 0:
        raise IllPosed(f"eta = {market.eta} <= 0")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("wealth must be positive")
    out = market.eta ** (-prefs.theta * prefs.S) * x ** prefs.one_minus_R / prefs.one_minus_R
    return float(out) if out.ndim == 0 else out


def h_surface(pi, xi, market: MarketParams, prefs: PreferenceParams):
    """Vectorised ``h(pi, xi)``; NaN outside D."""
    pi, xi = np.broadcast_arrays(np.asarray(pi, float), np.asarray(xi, float))
    H = growth_H(pi, xi, market, prefs)
    ok = (xi > 0) & (H > 0)
    out = np.full(H.shape, np.nan)
    th, a = prefs.theta, prefs.one_minus_R
    out[ok] = xi[ok] ** a / a * (th / H[ok]) ** th
    return out


def proportional_h(strategy: Strategy, market: MarketParams, prefs: PreferenceParams) -> ProportionalSolution:
    if not strategy.in_D:
        raise OutsideD(f"(pi, xi) = ({strategy.pi}, {strategy.xi}) has H = {strategy.H:.6g}")
    th, a = prefs.theta, prefs.one_minus_R
    h = strategy.xi**a / a * (th / strategy.H) ** th
    return ProportionalSolution(strategy, float(h), 1.0 / strategy.H)


def optimal_strategy(market: MarketParams, prefs: PreferenceParams) -> Strategy:
    """Maximiser of ``h`` over D: ``(lam / (sigma R), eta)``."""
    if not market.eta > 0:
        raise IllPosed(f"eta = {market.eta} <= 0")
    return make_strategy(market.lam / (market.sigma * prefs.R), market.eta, market, prefs)


@dataclass(frozen=True)
class ImproperFamilyMember:
    """One member ``A(t)`` of the absorbed family for a fixed strategy.

    ``A(t)^{1/theta}`` is affine in ``exp(H t / theta)``, which is how the
    profile is evaluated; ``T`` is ``math.inf`` for the constant member.
    """

    A0: float
    T: float
    H: float
    theta: float

    @property
    def A_const(self) -> float:
        return (self.theta / self.H) ** self.theta

    @property
    def is_constant(self) -> bool:
        return math.isinf(self.T)

    def root(self, t):
        """Unclipped ``A(t)^{1/theta}``; negative past ``T``."""
        th, H = self.theta, self.H
        y0 = self.A0 ** (1 / th)
        t = np.asarray(t, dtype=float)
        return (th - (th - H * y0) * np.exp(H * t / th)) / H

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            out = np.full(t.shape, self.A_const)
        else:
            y = np.where(t < self.T, self.root(t), 0.0)
            out = np.maximum(y, 0.0) ** self.theta
        return float(out) if out.ndim == 0 else out

    def __call__(self, t):
        return self.profile(t)


def _absorption_time(A0: float, H: float, theta: float) -> float:
    if A0 <= 0:
        return 0.0
    gap = theta - H * A0 ** (1 / theta)
    if gap <= 0:
        return math.inf
    return theta / H * math.log(theta / gap)


def family_member(A0: float, strategy: Strategy, prefs: PreferenceParams) -> ImproperFamilyMember:
    H, th = strategy.H, prefs.theta
    if not H > 0:
        raise OutsideD(f"H = {H:.6g} <= 0")
    if A0 < 0:
        raise ValueError("A0 must be nonnegative")
    a_const = (th / H) ** th
    # tolerate rounding when callers pass the constant level computed elsewhere
    if A0 > a_const * (1 + 1e-12):
        raise DivergentFamily(f"A0 = {A0:.6g} exceeds the constant level {a_const:.6g}")
    if A0 >= a_const * (1 - 1e-14):
        return ImproperFamilyMember(a_const, math.inf, H, th)
    return ImproperFamilyMember(float(A0), _absorption_time(A0, H, th), H, th)


def family_member_from_T(T: float, strategy: Strategy, prefs: PreferenceParams) -> ImproperFamilyMember:
    """Member absorbed at ``T`` (``math.inf`` gives the constant member)."""
    H, th = strategy.H, prefs.theta
    if not H > 0:
        raise OutsideD(f"H = {H:.6g} <= 0")
    if T < 0:
        raise ValueError("absorption time must be nonnegative")
    if math.isinf(T):
        return ImproperFamilyMember((th / H) ** th, math.inf, H, th)
    A0 = (th / H * -math.expm1(-H * T / th)) ** th
    return ImproperFamilyMember(A0, float(T), H, th)


def default_fd_step(member: ImproperFamilyMember) -> float:
    return 1e-4 * member.theta / member.H


def ode_residual(member: ImproperFamilyMember, t_grid, dt: float | None = None) -> float:
    """Max over ``t_grid`` of ``|A'(t) - (H A - theta A^rho)|``.

    ``A'`` comes from central differences; points whose stencil would cross
    ``T`` use a second-order backward stencil instead.  Points at or after
    ``T`` sit on the zero branch and contribute nothing.
    """
    if dt is None:
        dt = default_fd_step(member)
    t = np.asarray(t_grid, dtype=float)
    th, H = member.theta, member.H
    rho = (th - 1) / th
    A = member.profile
    alive = t < member.T
    central = alive & (t + dt < member.T)
    back = alive & ~central
    dA = np.zeros_like(t)
    dA[central] = (A(t[central] + dt) - A(t[central] - dt)) / (2 * dt)
    tb = t[back]
    dA[back] = (3 * A(tb) - 4 * A(tb - dt) + A(tb - 2 * dt)) / (2 * dt)
    a = np.where(alive, A(t), 0.0)
    rhs = H * a - th * a**rho
    res = np.where(alive, np.abs(dA - rhs), 0.0)
    return float(res.max()) if res.size else 0.0
