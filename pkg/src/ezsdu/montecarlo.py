"""Monte Carlo check of the Epstein-Zin equation for closed-form candidates.

Wealth is stepped exactly in log space, so the only discretisation left is
the time integral of the aggregator (trapezoid rule on the simulation grid).
Paths are generated in fixed-size chunks, each with its own child seed from
``numpy.random.SeedSequence(seed)``, so a batch is reproducible and chunk
results can be reduced in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from .closed_form import ImproperFamilyMember
from .params import MarketParams, PreferenceParams, Strategy

CHUNK = 4096


@dataclass(frozen=True)
class SimSpec:
    n_paths: int
    n_steps: int
    horizon: float
    seed: int = 0
    x0: float = 1.0

    def __post_init__(self):
        if self.n_paths < 2 or self.n_steps < 1:
            raise ValueError("need at least two paths and one step")
        if not self.horizon > 0 or not self.x0 > 0:
            raise ValueError("horizon and x0 must be positive")


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Wealth paths of a proportional strategy.

    Paths are produced chunk by chunk from :meth:`chunks`; ``paths``
    materialises the whole ``(n_paths, n_steps + 1)`` array.
    """

    n_paths: int
    n_steps: int
    horizon: float
    seed: int
    x0: float
    strategy: Strategy
    market: MarketParams

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def chunks(self) -> Iterator[np.ndarray]:
        n_chunks = -(-self.n_paths // CHUNK)
        seeds = np.random.SeedSequence(self.seed).spawn(n_chunks)
        st, mk = self.strategy, self.market
        vol = st.pi * mk.sigma
        drift = mk.r + st.pi * (mk.mu - mk.r) - st.xi - 0.5 * vol**2
        sq = math.sqrt(self.dt)
        for c, ss in enumerate(seeds):
            m = min(CHUNK, self.n_paths - c * CHUNK)
            z = np.random.default_rng(ss).standard_normal((m, self.n_steps))
            logx = np.empty((m, self.n_steps + 1))
            logx[:, 0] = math.log(self.x0)
            np.cumsum(drift * self.dt + vol * sq * z, axis=1, out=logx[:, 1:])
            logx[:, 1:] += math.log(self.x0)
            yield np.exp(logx)

    @cached_property
    def paths(self) -> np.ndarray:
        return np.concatenate(list(self.chunks()), axis=0)


def simulate(strategy: Strategy, market: MarketParams, spec: SimSpec) -> PathBatch:
    """Exact log-space simulation of ``X`` under ``(pi, xi)``."""
    return PathBatch(spec.n_paths, spec.n_steps, spec.horizon, spec.seed, spec.x0, strategy, market)


@dataclass(frozen=True)
class Candidate:
    """Utility candidate ``V(t, x) = scale A(t) (xi x)^{1-R} / (1-R)``."""

    profile: Callable[[np.ndarray], np.ndarray]
    scale: float = 1.0
    label: str = ""

    def value(self, t: np.ndarray, x: np.ndarray, xi: float, prefs: PreferenceParams) -> np.ndarray:
        a = prefs.one_minus_R
        return self.scale * np.asarray(self.profile(t), float) * (xi * x) ** a / a


def proportional_candidate(strategy: Strategy, prefs: PreferenceParams, scale: float = 1.0) -> Candidate:
    A = (prefs.theta / strategy.H) ** prefs.theta
    return Candidate(lambda t: np.full(np.shape(t), A), scale, f"proportional x{scale:g}")


def family_candidate(member: ImproperFamilyMember, scale: float = 1.0) -> Candidate:
    return Candidate(member.profile, scale, f"family T={member.T:g}")


def f_ez(c, v, prefs: PreferenceParams):
    """Aggregator ``c^{1-S}/(1-S) ((1-R) v)^rho``."""
    w = np.maximum(prefs.one_minus_R * v, 0.0)
    return c ** (1 - prefs.S) / (1 - prefs.S) * w**prefs.rho


def residual_estimates(candidates, batch: PathBatch, prefs: PreferenceParams) -> list[tuple[float, float]]:
    """:func:`residual_estimate` for several candidates on one pass over the paths."""
    xi = batch.strategy.xi
    t = batch.times
    dt = batch.dt
    stats = [(0, 0.0, 0.0) for _ in candidates]
    for X in batch.chunks():
        for k, cand in enumerate(candidates):
            V = cand.value(t[None, :], X, xi, prefs)
            f = f_ez(xi * X, V, prefs)
            integral = dt * (f.sum(axis=1) - 0.5 * (f[:, 0] + f[:, -1]))
            d = V[:, 0] - (integral + V[:, -1])
            stats[k] = _merge(stats[k], d)
    out = []
    for n_tot, mean, m2 in stats:
        out.append((mean, math.sqrt(m2 / (n_tot - 1) / n_tot)))
    return out


def _merge(stat, d: np.ndarray):
    # pairwise mean/variance update, applied in chunk order
    n_a, mean_a, m2_a = stat
    n_b, mean_b = d.size, float(d.mean())
    m2_b = float(((d - mean_b) ** 2).sum())
    tot = n_a + n_b
    delta = mean_b - mean_a
    return tot, mean_a + delta * n_b / tot, m2_a + m2_b + delta**2 * n_a * n_b / tot


def residual_estimate(candidate: Candidate, batch: PathBatch, prefs: PreferenceParams) -> tuple[float, float]:
    """Estimate ``V_0 - E[int_0^T f(C, V) ds + V_T]`` and its standard error.

    The aggregator integral uses the trapezoid rule on the simulation grid.
    Chunk statistics are merged in chunk order, so the result is deterministic
    for a given seed.
    """
    return residual_estimates([candidate], batch, prefs)[0]
