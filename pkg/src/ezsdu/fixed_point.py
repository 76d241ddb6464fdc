"""Picard iteration, order certificates and the extremal-solution scheme.

The fixed-point operator in transformed coordinates is

    F(W)_t = E_t[ int_t^inf (U_s W_s^rho + eps e^{nu s} Lambda_s^theta) ds ]

on the lattice, truncated at the horizon by a tail condition.  Within a step
the iterate is carried along the consumption profile, ``W_s / U_s^theta`` held
at its left-node value, so the generator integral over a step is
``u W^rho int e^{-gamma theta s} ds``.  With that quadrature the bounds
``A U^theta <= W <= B U^theta`` are preserved by ``F`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded, NoContraction, NotDominated, NotSelfOrder
from .lattice import (
    AdaptedProcess,
    Lattice,
    TailCondition,
    accumulate,
    maximum,
    phi,
)
from .params import PreferenceParams

NU_FRACTIONS = (0.5, 0.25, 0.1)


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """Source ``eps e^{nu t} Lambda_t^theta`` added to the generator."""

    epsilon: float = 0.0
    nu: float = 0.0
    Lambda: AdaptedProcess | None = None

    def __post_init__(self):
        if self.epsilon < 0 or self.nu < 0:
            raise ValueError("epsilon and nu must be nonnegative")
        if self.epsilon > 0 and self.Lambda is None:
            raise ValueError("a positive epsilon needs a dominating process Lambda")

    @property
    def active(self) -> bool:
        return self.epsilon > 0

    def discounted(self, lattice: Lattice, prefs: PreferenceParams) -> AdaptedProcess:
        """``e^{nu t / theta} Lambda``, whose theta-th power carries the source."""
        return discounted(self.Lambda, self.nu, lattice, prefs)

    def source(self, lattice: Lattice, prefs: PreferenceParams):
        """Per-step source integrals and the terminal source tail (both without eps)."""
        lam = self.discounted(lattice, prefs)
        rate = prefs.theta * np.broadcast_to(np.asarray(lam.rate, float), lam.values.shape)
        steps = lam.step_integral(lattice.dt, prefs.theta)
        last = lam.values[-1] ** prefs.theta
        live = last > 0
        if np.any(rate[-1][live] <= 0):
            raise NoContraction("nu is too large: the discounted source does not decay")
        tail = np.where(live, last / np.where(rate[-1] > 0, rate[-1], 1.0), 0.0)
        return steps, tail


@dataclass(frozen=True, eq=False)
class OrderCertificate:
    """Self-order constants of ``U^theta`` and the bounds they imply.

    ``lower = k A J`` and ``upper = K B J``.  ``m`` and ``M`` bound the source
    relative to ``U^theta`` (both 1 when it is unperturbed).
    """

    k: float
    K: float
    A: float
    B: float
    lower: AdaptedProcess
    upper: AdaptedProcess
    m: float = 1.0
    M: float = 1.0
    verified: bool = False


@dataclass(eq=False)
class PicardResult:
    W: AdaptedProcess
    certificate: OrderCertificate | None
    iterations: int
    gaps: list[float] = field(default_factory=list)

    def __iter__(self):
        # unpacks as (W, certificate, iterations)
        return iter((self.W, self.certificate, self.iterations))


def discounted(Lambda: AdaptedProcess, nu: float, lattice: Lattice, prefs: PreferenceParams) -> AdaptedProcess:
    g = nu / prefs.theta
    vals = Lambda.values * np.exp(g * lattice.times)[:, None]
    return AdaptedProcess(vals, np.asarray(Lambda.rate, float) - g)


def compute_J(
    U: AdaptedProcess, tail: TailCondition, lattice: Lattice, prefs: PreferenceParams
) -> AdaptedProcess:
    """``J_t = E_t int_t^inf U_s^theta ds`` by linear backward accumulation."""
    steps = U.step_integral(lattice.dt, prefs.theta)
    return AdaptedProcess(accumulate(steps, tail.terminal_J(U.values[-1], prefs), lattice))


def self_order_constants(U: AdaptedProcess, J: AdaptedProcess, prefs: PreferenceParams) -> tuple[float, float]:
    """Tightest ``k, K`` with ``k J <= U^theta <= K J`` over nodes with ``J > 0``."""
    ut = U.values**prefs.theta
    Jv = J.values
    if np.any((Jv <= 0) & (ut > 0)):
        raise NotSelfOrder("J vanishes at a node with positive consumption")
    pos = Jv > 0
    if not np.any(pos):
        raise NotSelfOrder("J vanishes everywhere")
    ratio = ut[pos] / Jv[pos]
    k, K = float(ratio.min()), float(ratio.max())
    if not k > 0:
        raise NotSelfOrder("consumption vanishes at a node with positive J")
    if not np.isfinite(K):
        raise NotSelfOrder("self-order ratio is unbounded")
    return k, K


def solve_fixed(a, s, rho: float, rtol: float = 1e-15):
    """Largest root of ``w = a w^rho + s`` element-wise (``a, s >= 0``).

    Bisection in log space on a bracket that always contains the root; the
    right-hand side minus ``w`` is positive below the root and negative above.
    Each element stops on its own bracket width, so equal inputs give
    bit-identical roots regardless of the rest of the array.  The cases
    ``a = 0`` (root ``s``) and ``s = 0`` (root ``a^theta``) are exact.
    """
    a, s = np.broadcast_arrays(np.asarray(a, float), np.asarray(s, float))
    theta = 1.0 / (1.0 - rho)
    out = np.where(a == 0, s, a**theta)
    pos = (a > 0) & (s > 0)
    ap, sp = a[pos], s[pos]
    lo_l = np.log(np.maximum(sp, ap**theta))
    hi_l = np.log(np.maximum(2.0 * sp, (2.0 * ap) ** theta))
    for _ in range(200):
        open_ = hi_l - lo_l >= rtol
        if not np.any(open_):
            break
        mid = 0.5 * (lo_l + hi_l)
        w = np.exp(mid)
        up = ap * w**rho + sp - w > 0
        lo_l = np.where(open_ & up, mid, lo_l)
        hi_l = np.where(open_ & ~up, mid, hi_l)
    out[pos] = np.exp(0.5 * (lo_l + hi_l))
    return float(out) if out.ndim == 0 else out


def solve_AB(k: float, K: float, epsilon: float, prefs: PreferenceParams, m: float = 1.0, M: float = 1.0):
    """Roots of ``A = (A^rho + eps m)/K`` and ``B = (B^rho + eps M)/k``."""
    if not 0 < k <= K:
        raise ValueError("need 0 < k <= K")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    th, rho = prefs.theta, prefs.rho
    if epsilon == 0:
        return K ** (-th), k ** (-th)
    A = solve_fixed(1.0 / K, epsilon * m / K, rho)
    B = solve_fixed(1.0 / k, epsilon * M / k, rho)
    return A, B


def _terminal_W(U, tail, src_tail, eps, lattice, prefs):
    """Tail row solving ``w = w^rho U_N / rate + eps s_N`` for geometric tails."""
    u_last = U.values[-1]
    if tail.kind in ("zero", "explicit") or eps == 0:
        return np.where(lattice.mask[-1], tail.terminal_W(u_last, prefs), 0.0)
    rate = np.broadcast_to(np.asarray(tail.rate, float), u_last.shape)
    w = solve_fixed(u_last / rate, eps * src_tail, prefs.rho)
    return np.where(lattice.mask[-1], w, 0.0)


def _source_ratio(U, J, src_steps, src_tail, lattice, prefs):
    """Range of (source) / (U^theta) step integrals, terminal tail included."""
    ut_steps = U.step_integral(lattice.dt, prefs.theta)[:-1]
    mask = lattice.mask[:-1]
    num = np.concatenate([src_steps[:-1][mask], src_tail[lattice.mask[-1]]])
    den = np.concatenate([ut_steps[mask], J.values[-1][lattice.mask[-1]]])
    if np.any((den <= 0) & (num > 0)):
        raise NoContraction("source is not dominated by the consumption stream")
    ok = den > 0
    r = num[ok] / den[ok]
    return float(r.min()), float(r.max())


def certify(
    U: AdaptedProcess,
    lattice: Lattice,
    prefs: PreferenceParams,
    tail: TailCondition | None = None,
    perturbation: PerturbationSpec | None = None,
) -> OrderCertificate:
    """Order certificate for the (perturbed) fixed point of ``U``."""
    tail = TailCondition.from_profile(U, prefs) if tail is None else tail
    pert = perturbation or PerturbationSpec()
    J = compute_J(U, tail, lattice, prefs)
    try:
        k, K = self_order_constants(U, J, prefs)
    except NotSelfOrder as exc:
        raise NoContraction(f"no order certificate: {exc}") from exc
    m = M = 1.0
    if pert.active:
        src_steps, src_tail = pert.source(lattice, prefs)
        m, M = _source_ratio(U, J, src_steps, src_tail, lattice, prefs)
    A, B = solve_AB(k, K, pert.epsilon, prefs, m, M)
    return OrderCertificate(k, K, A, B, AdaptedProcess(k * A * J.values), AdaptedProcess(K * B * J.values), m, M)


def picard_solve(
    U: AdaptedProcess,
    perturbation: PerturbationSpec | None,
    lattice: Lattice,
    prefs: PreferenceParams,
    tail: TailCondition | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    W0: np.ndarray | None = None,
    history: list | None = None,
) -> PicardResult:
    """Iterate ``W <- F(W)`` from ``W0`` (default ``B U^theta``).

    Stops when the sup-node relative gap falls below ``tol``.  The returned
    certificate is marked verified when ``kA J <= W <= KB J`` holds.  Pass a
    list as ``history`` to collect every iterate, starting with ``W0``.
    """
    pert = perturbation or PerturbationSpec()
    th, rho, dt = prefs.theta, prefs.rho, lattice.dt
    tail = TailCondition.from_profile(U, prefs) if tail is None else tail
    if not np.any(U.values > 0) and not pert.active:
        return PicardResult(AdaptedProcess(np.zeros(lattice.shape)), None, 1, [0.0])

    cert = certify(U, lattice, prefs, tail, pert)
    if pert.active:
        src_steps, src_tail = pert.source(lattice, prefs)
        src_steps = pert.epsilon * src_steps
    else:
        src_steps, src_tail = np.zeros(lattice.shape), np.zeros(lattice.n + 1)
    W_N = _terminal_W(U, tail, src_tail, pert.epsilon, lattice, prefs)

    ut = U.values**th
    # generator integral per unit of W^rho, with W/U^theta frozen over the step
    kernel = U.values * phi(th * np.asarray(U.rate, float), dt)
    W = cert.B * ut if W0 is None else np.array(W0, dtype=float)
    W = np.where(lattice.mask, W, 0.0)
    if history is not None:
        history.append(W)
    gaps: list[float] = []
    for it in range(1, max_iter + 1):
        step = kernel * W**rho + src_steps
        W_new = accumulate(step, W_N, lattice)
        scale = np.maximum(np.abs(W_new), 1e-300)
        gap = float(np.max(np.abs(W_new - W) / scale))
        gaps.append(gap)
        W = W_new
        if history is not None:
            history.append(W)
        if gap < tol:
            break
    else:
        raise MaxIterExceeded(f"no convergence after {max_iter} iterations (gap {gaps[-1]:.3g})")
    slack = 1e-9
    ok = bool(
        np.all(cert.lower.values <= W * (1 + slack) + 1e-300)
        and np.all(W <= cert.upper.values * (1 + slack) + 1e-300)
    )
    cert = OrderCertificate(cert.k, cert.K, cert.A, cert.B, cert.lower, cert.upper, cert.m, cert.M, ok)
    return PicardResult(AdaptedProcess(W), cert, it, gaps)


def perturbed_solve(
    U: AdaptedProcess,
    perturbation: PerturbationSpec,
    lattice: Lattice,
    prefs: PreferenceParams,
    tail: TailCondition | None = None,
) -> AdaptedProcess:
    """Backward solve of the perturbed equation with exact sub-flows.

    Each step is split symmetrically: half the source integral is added,
    the consumption part moves ``W^{1/theta}`` linearly, then the other half
    of the source is added.  Every sub-flow is monotone in ``W``, ``U`` and
    ``eps``, so comparison properties survive discretisation.
    """
    th = prefs.theta
    tail = TailCondition.from_profile(U, prefs) if tail is None else tail
    if perturbation.active:
        src_steps, src_tail = perturbation.source(lattice, prefs)
        src_steps = perturbation.epsilon * src_steps
    else:
        src_steps, src_tail = np.zeros(lattice.shape), np.zeros(lattice.n + 1)
    n = lattice.n
    W = np.zeros(lattice.shape)
    W[n] = _terminal_W(U, tail, src_tail, perturbation.epsilon, lattice, prefs)
    I = U.step_integral(lattice.dt)
    for i in range(n - 1, -1, -1):
        half = 0.5 * src_steps[i, : i + 1]
        xi = lattice.expect_row(W[i + 1], i) + half
        W[i, : i + 1] = (xi ** (1 / th) + I[i, : i + 1] / th) ** th + half
    return AdaptedProcess(W)


def check_dominated(U: AdaptedProcess, Lambda: AdaptedProcess, rtol: float = 1e-12) -> None:
    excess = U.values - Lambda.values * (1 + rtol)
    if np.any(excess > 0):
        i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
        raise NotDominated(f"U exceeds Lambda at node ({i}, {j})")


def choose_nu(
    Lambda: AdaptedProcess, lattice: Lattice, prefs: PreferenceParams, fractions=NU_FRACTIONS
) -> float:
    """Largest ``nu`` from a small grid keeping ``e^{nu t} Lambda^theta`` self-order.

    Candidates are fractions of the slowest decay rate of ``Lambda^theta``.
    Returns 0 when ``Lambda`` has no decaying profile.
    """
    rates = prefs.theta * np.asarray(Lambda.rate, float)
    live = Lambda.values > 0
    base = float(np.min(np.broadcast_to(rates, Lambda.values.shape)[live])) if np.any(live) else 0.0
    if base <= 0:
        return 0.0
    for f in sorted(fractions, reverse=True):
        nu = f * base
        lam = discounted(Lambda, nu, lattice, prefs)
        try:
            tail = TailCondition.from_profile(lam, prefs)
            J = compute_J(lam, tail, lattice, prefs)
            k, K = self_order_constants(lam, J, prefs)
        except (NotSelfOrder, ValueError):
            continue
        if np.isfinite(K / k):
            return nu
    return 0.0


def extremal_solve(
    U: AdaptedProcess,
    Lambda: AdaptedProcess,
    nu: float | None,
    lattice: Lattice,
    prefs: PreferenceParams,
    eps_sequence=None,
    tol: float = 1e-9,
    tail: TailCondition | None = None,
    history: list | None = None,
) -> AdaptedProcess:
    """Decreasing limit of perturbed solutions as ``eps_n -> 0``.

    For each ``eps_n`` the consumption is raised to
    ``U^n = max(U, eps_n e^{nu t/theta} Lambda)`` and the perturbed equation
    is solved with source ``eps_n e^{nu t} Lambda^theta``.  The sequence stops
    once successive solutions differ by less than ``tol`` relative to their
    maximum.  Pass a list as ``history`` to collect the intermediate solutions.
    """
    check_dominated(U, Lambda)
    if nu is None:
        nu = choose_nu(Lambda, lattice, prefs)
    if eps_sequence is None:
        eps_sequence = [2.0 ** (-n) for n in range(1, 21)]
    eps_sequence = list(eps_sequence)
    if any(e <= 0 for e in eps_sequence) or any(b > a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise ValueError("eps_sequence must be positive and decreasing")
    lam_nu = discounted(Lambda, nu, lattice, prefs)
    prev = None
    for eps in eps_sequence:
        Un = maximum(U, lam_nu.scaled(eps))
        tail_n = TailCondition.from_profile(Un, prefs) if tail is None else tail
        pert = PerturbationSpec(eps, nu, Lambda)
        W = perturbed_solve(Un, pert, lattice, prefs, tail_n).values
        if history is not None:
            history.append((eps, W))
        if prev is not None:
            scale = max(float(np.max(np.abs(W))), 1e-300)
            if float(np.max(np.abs(W - prev))) < tol * scale:
                prev = W
                break
        prev = W
    return AdaptedProcess(prev)
