"""Numerical laboratory for Epstein-Zin stochastic differential utility with theta > 1."""

from .closed_form import (
    ImproperFamilyMember,
    ProportionalSolution,
    candidate_value,
    family_member,
    family_member_from_T,
    ode_residual,
    optimal_strategy,
    proportional_h,
)
from .errors import EZSDUError
from .params import (
    MarketParams,
    PreferenceParams,
    Strategy,
    derive_market,
    derive_preferences,
    growth_H,
    make_strategy,
)

__all__ = [
    "EZSDUError",
    "ImproperFamilyMember",
    "MarketParams",
    "PreferenceParams",
    "ProportionalSolution",
    "Strategy",
    "candidate_value",
    "derive_market",
    "derive_preferences",
    "family_member",
    "family_member_from_T",
    "growth_H",
    "make_strategy",
    "ode_residual",
    "optimal_strategy",
    "proportional_h",
]
