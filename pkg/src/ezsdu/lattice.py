"""Recombining binomial lattice and exact backward induction for SDU.

Node ``(i, j)`` sits at time ``t_i = i * step`` after ``j`` up-moves; its
children are ``(i+1, j)`` (down) and ``(i+1, j+1)`` (up).  Per-node processes
are stored as ``(n+1, n+1)`` arrays whose entries above the diagonal are zero.

In transformed coordinates ``W = (1-R) V`` and ``U = theta C^{1-S}`` the
Epstein-Zin recursion has generator ``U W^rho``.  Between grid times the
consumption is deterministic, so ``W^{1/theta}`` moves linearly in the running
integral of ``U`` and each backward step is closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import OutsideD
from .params import MarketParams, PreferenceParams, Strategy

CALIBRATIONS = ("moment", "power")


def phi(a, dt: float):
    """``int_0^dt exp(-a s) ds``, stable as ``a -> 0``."""
    a = np.asarray(a, dtype=float)
    small = np.abs(a * dt) < 1e-12
    safe = np.where(small, 1.0, a)
    out = np.where(small, dt * (1 - 0.5 * a * dt), -np.expm1(-safe * dt) / safe)
    return float(out) if out.ndim == 0 else out


def default_horizon(rate: float, tol: float = 1e-8) -> float:
    """Horizon after which ``exp(-rate * T)`` falls below ``tol``."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    return math.log(1.0 / tol) / rate


@dataclass(frozen=True)
class LatticeSpec:
    """Shape of the tree.

    ``calibration`` selects the log-increment drift.  ``"moment"`` matches the
    mean and variance of the continuous log-wealth increment.  ``"power"`` keeps
    the variance but shifts the drift so that ``E[X_{t+dt}^{1-R}]`` equals
    ``X_t^{1-R} e^{-H dt}`` exactly, which makes proportional streams solve
    without time-discretisation error.
    """

    n_steps: int
    horizon: float
    up_prob: float = 0.5
    calibration: str = "moment"
    x0: float = 1.0

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 < self.up_prob < 1:
            raise ValueError(f"up_prob must lie in (0,1), got {self.up_prob}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps


@dataclass(frozen=True, eq=False)
class Lattice:
    spec: LatticeSpec
    times: np.ndarray
    X: np.ndarray
    brownian: np.ndarray
    mask: np.ndarray
    b_up: float
    b_down: float
    log_drift: float
    strategy: Strategy | None = None

    @property
    def n(self) -> int:
        return self.spec.n_steps

    @property
    def p(self) -> float:
        return self.spec.up_prob

    @property
    def dt(self) -> float:
        return self.spec.step

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.n + 1)

    def nodes(self):
        for i in range(self.n + 1):
            for j in range(i + 1):
                yield i, j

    def expect_row(self, next_row: np.ndarray, i: int) -> np.ndarray:
        """``E_i`` of a step-``i+1`` row; returns the ``i+1`` node values."""
        p = self.p
        return p * next_row[1 : i + 2] + (1 - p) * next_row[: i + 1]

    def cond_expect(self, V: np.ndarray) -> np.ndarray:
        """One-step conditional expectation at every node with ``i < n``.

        The last row of the result is zero.
        """
        V = np.asarray(V, dtype=float)
        n, p = self.n, self.p
        E = np.zeros_like(V)
        E[:n, :n] = p * V[1:, 1:] + (1 - p) * V[1:, :n]
        return np.where(self.mask & (np.arange(n + 1) < n)[:, None], E, 0.0)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def build_lattice(
    spec: LatticeSpec,
    market: MarketParams,
    strategy: Strategy | None = None,
    prefs: PreferenceParams | None = None,
) -> Lattice:
    """Build the tree and the wealth ``X`` of a proportional strategy on it.

    Without a strategy wealth stays at ``x0``.  ``prefs`` is only needed for
    the ``"power"`` calibration.
    """
    n, p, dt = spec.n_steps, spec.up_prob, spec.step
    sq = math.sqrt(dt)
    b_up = sq * math.sqrt((1 - p) / p)
    b_down = -sq * math.sqrt(p / (1 - p))
    i_idx, j_idx = np.indices((n + 1, n + 1))
    mask = j_idx <= i_idx
    brownian = np.where(mask, j_idx * b_up + (i_idx - j_idx) * b_down, 0.0)
    times = np.arange(n + 1) * dt

    if strategy is None:
        drift, vol = 0.0, 0.0
    else:
        pi, xi = strategy.pi, strategy.xi
        vol = pi * market.sigma
        drift = market.r + pi * (market.mu - market.r) - xi - 0.5 * vol**2
        if spec.calibration == "power":
            if prefs is None:
                raise ValueError("the power calibration needs preference parameters")
            a = prefs.one_minus_R * vol
            if a != 0:
                # log E[exp(a b)] for the two-point increment, computed stably
                lme = np.logaddexp(math.log(p) + a * b_up, math.log(1 - p) + a * b_down)
                drift = (-strategy.H * dt - float(lme)) / (prefs.one_minus_R * dt)
            else:
                drift = -strategy.H / prefs.one_minus_R
    logX = math.log(spec.x0) + drift * i_idx * dt + vol * brownian
    X = np.where(mask, np.exp(logX), 0.0)
    return Lattice(spec, times, X, brownian, mask, b_up, b_down, drift, strategy)


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """Per-node values with an exponential within-step profile.

    On ``[t_i, t_{i+1})`` the process equals ``values[i, j] * exp(-rate (s - t_i))``.
    ``rate`` is a scalar or an array of node rates; ``rate = 0`` is the constant
    profile.
    """

    values: np.ndarray
    rate: float | np.ndarray = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("process values must be finite")
        if np.any(v < 0):
            raise ValueError("process values must be nonnegative")
        object.__setattr__(self, "values", v)

    def step_integral(self, dt: float, power: float = 1.0) -> np.ndarray:
        """``int_{t_i}^{t_{i+1}} u(s)^power ds`` at every node."""
        return self.values**power * phi(power * np.asarray(self.rate, dtype=float), dt)

    def powered(self, power: float) -> AdaptedProcess:
        return AdaptedProcess(self.values**power, np.asarray(self.rate) * power)

    def scaled(self, factor) -> AdaptedProcess:
        """Multiply node values by ``factor`` (scalar or per-node array)."""
        return AdaptedProcess(self.values * factor, self.rate)


def maximum(a: AdaptedProcess, b: AdaptedProcess) -> AdaptedProcess:
    """Node-wise maximum, keeping the rate of whichever value wins."""
    take_a = a.values >= b.values
    ra = np.broadcast_to(np.asarray(a.rate, float), a.values.shape)
    rb = np.broadcast_to(np.asarray(b.rate, float), b.values.shape)
    return AdaptedProcess(np.where(take_a, a.values, b.values), np.where(take_a, ra, rb))


@dataclass(frozen=True, eq=False)
class StoppingSpec:
    """Stopping times ``sigma <= tau`` encoded by their hit sets.

    ``sigma_hit[i, j]`` is true when ``sigma <= t_i`` at node ``(i, j)``.  A
    hit set must contain both children of each of its nodes, which is exactly
    adaptedness for a stopping time on a recombining tree.
    """

    sigma_hit: np.ndarray
    tau_hit: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma_hit, dtype=bool)
        t = np.asarray(self.tau_hit, dtype=bool)
        if s.shape != t.shape or s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("hit sets must be square arrays of equal shape")
        n = s.shape[0] - 1
        lower = np.tril(np.ones_like(s))
        s, t = s & lower, t & lower
        for name, hit in (("sigma", s), ("tau", t)):
            closed = hit[:n, :n] <= (hit[1:, :n] & hit[1:, 1:])
            if not np.all(closed | ~lower[:n, :n]):
                raise ValueError(f"{name} hit set is not closed under taking children")
        if np.any(t & ~s):
            raise ValueError("tau must not precede sigma")
        object.__setattr__(self, "sigma_hit", s)
        object.__setattr__(self, "tau_hit", t)

    @property
    def active(self) -> np.ndarray:
        return self.sigma_hit & ~self.tau_hit

    @classmethod
    def whole_line(cls, lattice: Lattice) -> StoppingSpec:
        """``sigma = 0`` and ``tau = inf``."""
        return cls(lattice.mask.copy(), np.zeros(lattice.shape, bool))

    @classmethod
    def empty(cls, lattice: Lattice) -> StoppingSpec:
        """``sigma = tau = 0``: an empty interval."""
        return cls(lattice.mask.copy(), lattice.mask.copy())

    @classmethod
    def from_counts(
        cls, lattice: Lattice, sigma_ups: int | None = None, tau_downs: int | None = None
    ) -> StoppingSpec:
        """``sigma`` is the first time the path has ``sigma_ups`` up-moves and
        ``tau`` the first time it has ``tau_downs`` down-moves after that
        (``None`` means ``sigma = 0`` and ``tau = inf`` respectively)."""
        i_idx, j_idx = np.indices(lattice.shape)
        s = lattice.mask.copy() if sigma_ups is None else lattice.mask & (j_idx >= sigma_ups)
        if tau_downs is None:
            t = np.zeros(lattice.shape, bool)
        else:
            t = lattice.mask & (i_idx - j_idx >= tau_downs) & s
        return cls(s, t)

    @classmethod
    def random(cls, lattice: Lattice, rng: np.random.Generator, seed_prob: float = 0.15) -> StoppingSpec:
        """Random pair of stopping times built by growing closed hit sets."""

        def grow():
            hit = np.zeros(lattice.shape, bool)
            for i in range(lattice.n + 1):
                if i > 0:
                    prev = hit[i - 1, :i]
                    hit[i, :i] |= prev
                    hit[i, 1 : i + 1] |= prev
                hit[i, : i + 1] |= rng.random(i + 1) < seed_prob
            return hit

        s = grow()
        return cls(s, grow() & s)


@dataclass(frozen=True, eq=False)
class TailCondition:
    """Terminal data at the truncation horizon.

    ``zero`` sets ``W = 0``.  ``geometric`` assumes the last-step consumption
    continues with ``E[U_s^theta] = U_N^theta e^{-rate (s - t_N)}``, which gives
    ``W = rate^{-theta} U_N^theta`` and ``J = U_N^theta / rate``.  The
    proportional tail is the geometric one with ``rate = H``.  ``explicit``
    supplies terminal rows directly.
    """

    kind: str
    rate: float | None = None
    w: np.ndarray | None = None
    j: np.ndarray | None = None

    @classmethod
    def zero(cls) -> TailCondition:
        return cls("zero")

    @classmethod
    def proportional(cls, strategy: Strategy) -> TailCondition:
        if not strategy.H > 0:
            raise OutsideD(f"proportional tail needs H > 0, got {strategy.H:.6g}")
        return cls("proportional", rate=strategy.H)

    @classmethod
    def geometric(cls, rate) -> TailCondition:
        """``rate`` may be a scalar or one rate per terminal node."""
        r = np.asarray(rate, dtype=float)
        if not np.all(r > 0):
            raise ValueError("geometric tail needs a positive rate")
        return cls("geometric", rate=float(r) if r.ndim == 0 else r)

    @classmethod
    def from_profile(cls, U: AdaptedProcess, prefs: PreferenceParams) -> TailCondition:
        """Geometric tail that continues the last within-step decay of ``U``."""
        rate = prefs.theta * np.broadcast_to(np.asarray(U.rate, float), U.values.shape)[-1]
        live = U.values[-1] > 0
        if np.any(rate[live] <= 0):
            raise ValueError("consumption with a non-decaying profile has no geometric tail")
        # nodes without terminal consumption contribute nothing; any rate will do
        return cls.geometric(np.where(live, rate, 1.0))

    @classmethod
    def explicit(cls, w, j=None) -> TailCondition:
        return cls("explicit", w=np.asarray(w, float), j=None if j is None else np.asarray(j, float))

    def terminal_W(self, u_last: np.ndarray, prefs: PreferenceParams) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u_last)
        if self.kind == "explicit":
            return np.array(self.w, dtype=float)
        return u_last**prefs.theta * self.rate ** (-prefs.theta)

    def terminal_J(self, u_last: np.ndarray, prefs: PreferenceParams) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u_last)
        if self.kind == "explicit":
            return np.zeros_like(u_last) if self.j is None else np.array(self.j, dtype=float)
        return u_last**prefs.theta / self.rate


def backward_step(xi, step_integral, prefs: PreferenceParams):
    """``(xi^{1/theta} + I/theta)^theta``: exact flow of ``W' = -u W^rho``."""
    th = prefs.theta
    out = (np.asarray(xi, float) ** (1 / th) + np.asarray(step_integral, float) / th) ** th
    return float(out) if np.ndim(out) == 0 else out


def proportional_consumption(strategy: Strategy, lattice: Lattice, prefs: PreferenceParams) -> AdaptedProcess:
    """``U = theta (xi X)^{1-S}`` decaying at ``H/theta`` within each step."""
    C = strategy.xi * lattice.X
    U = np.where(lattice.mask, prefs.theta * np.where(lattice.mask, C, 1.0) ** (1 - prefs.S), 0.0)
    return AdaptedProcess(U, strategy.H / prefs.theta)


def indicator_consumption(gamma: float, stops: StoppingSpec, lattice: Lattice) -> AdaptedProcess:
    """``U_t = exp(-gamma t) 1{sigma <= t < tau}`` on the grid."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    u = np.exp(-gamma * lattice.times)[:, None] * stops.active
    return AdaptedProcess(np.where(lattice.mask, u, 0.0), float(gamma))


def default_tail(U: AdaptedProcess, lattice: Lattice, prefs: PreferenceParams) -> TailCondition:
    """Proportional tail when the lattice carries a strategy in D, else zero.

    A zero tail can select an improper solution, so it triggers a warning.
    """
    st = lattice.strategy
    if st is not None and st.H > 0 and st.xi > 0:
        return TailCondition.proportional(st)
    if np.any(U.values[-1] > 0):
        warnings.warn("zero tail with positive terminal consumption may select an improper solution")
    return TailCondition.zero()


def solve_backward(
    U: AdaptedProcess, tail: TailCondition, lattice: Lattice, prefs: PreferenceParams
) -> AdaptedProcess:
    """Exact discrete-filtration solution ``W`` for consumption ``U``."""
    n, th = lattice.n, prefs.theta
    W = np.zeros(lattice.shape)
    W[n] = np.where(lattice.mask[n], tail.terminal_W(U.values[n], prefs), 0.0)
    I = U.step_integral(lattice.dt)
    for i in range(n - 1, -1, -1):
        xi = lattice.expect_row(W[i + 1], i)
        W[i, : i + 1] = (xi ** (1 / th) + I[i, : i + 1] / th) ** th
    return AdaptedProcess(W)


def accumulate(step_values: np.ndarray, tail_row: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Linear backward sum ``L_i = E_i[L_{i+1}] + step_values_i``."""
    n = lattice.n
    L = np.zeros(lattice.shape)
    L[n] = np.where(lattice.mask[n], tail_row, 0.0)
    for i in range(n - 1, -1, -1):
        L[i, : i + 1] = lattice.expect_row(L[i + 1], i) + step_values[i, : i + 1]
    return L


def jensen_lower_bound(
    U: AdaptedProcess, tail: TailCondition, lattice: Lattice, prefs: PreferenceParams
) -> AdaptedProcess:
    """``((1/theta) E_t[int_t^{t_N} U_s ds] + E_t[W_N^{1/theta}])^theta``.

    Since ``x -> x^{1/theta}`` is concave, every backward step of
    :func:`solve_backward` raises ``W^{1/theta}`` above the conditional mean of
    its children, so this bound sits below the solution for the same tail.
    """
    th = prefs.theta
    w_last = tail.terminal_W(U.values[-1], prefs)
    L = accumulate(U.step_integral(lattice.dt), th * w_last ** (1 / th), lattice)
    return AdaptedProcess((L / th) ** th)


def appendix_lower_bound(
    gamma: float, stops: StoppingSpec, lattice: Lattice, prefs: PreferenceParams
) -> AdaptedProcess:
    """``((1/theta) E_t int_t^inf U_s ds)^theta`` for the indicator stream.

    The tail beyond the horizon assumes the last-step indicator persists,
    matching :meth:`TailCondition.geometric` with rate ``gamma * theta``.
    """
    U = indicator_consumption(gamma, stops, lattice)
    return jensen_lower_bound(U, TailCondition.geometric(gamma * prefs.theta), lattice, prefs)
