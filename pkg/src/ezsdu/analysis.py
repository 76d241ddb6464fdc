"""Classification of lattice solutions and comparison checks.

A node counts as zero when its value is below ``tol`` times the largest value
of the same process; ``J`` positivity uses the same relative floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closed_form import family_member
from .errors import HypothesisUnmet, NoContraction, NotDominated
from .fixed_point import (
    PerturbationSpec,
    check_dominated,
    compute_J,
    extremal_solve,
    perturbed_solve,
    picard_solve,
)
from .lattice import AdaptedProcess, Lattice, TailCondition, proportional_consumption
from .params import PreferenceParams, Strategy

PROPER_TOL = 1e-10


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x, dtype=float)


def _nodes(mask: np.ndarray) -> list[tuple[int, int]]:
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))]


@dataclass(eq=False)
class SolutionReport:
    """A lattice solution with its diagnostics.

    ``crra_order`` is ``None`` when no positive band ``kJ <= W <= KJ`` exists.
    ``extremal_gap`` and ``concept_agreement`` are filled only by
    :func:`concept_agreement`.
    """

    W: AdaptedProcess
    residual: float
    proper: bool
    witnesses: list[tuple[int, int]] = field(default_factory=list)
    crra_order: tuple[float, float] | None = None
    extremal_gap: float | None = None
    concept_agreement: bool | None = None
    label: str = ""
    notes: list[str] = field(default_factory=list)


def residual(W, U: AdaptedProcess, lattice: Lattice, prefs: PreferenceParams) -> float:
    """Largest relative node defect of the discrete SDU equation.

    At a node whose children carry ``xi = E[W_next] > 0`` the defect is
    ``|W - backward_step(xi, I)|``.  When ``xi = 0`` the within-step equation
    ``W' = -u W^rho`` started from zero admits every value in
    ``[0, (I/theta)^theta]`` (the zero branch may be left at any time), so
    only the excess above that interval counts.
    """
    W = _values(W)
    th = prefs.theta
    n = lattice.n
    xi = lattice.cond_expect(W)[:n]
    I = U.step_integral(lattice.dt)[:n]
    Wi = W[:n]
    mask = lattice.mask[:n]
    with np.errstate(invalid="ignore"):
        target = (xi ** (1 / th) + I / th) ** th
    defect = np.where(xi > 0, np.abs(Wi - target), np.maximum(0.0, Wi - (I / th) ** th))
    wmax = float(np.max(np.abs(W))) if W.size else 0.0
    scale = np.maximum(np.maximum(np.abs(Wi), 1e-10 * wmax), 1e-300)
    rel = np.where(mask, defect / scale, 0.0)
    return float(rel.max()) if rel.size else 0.0


def _floors(W: np.ndarray, J: np.ndarray, tol: float):
    return tol * float(np.max(np.abs(W), initial=0.0)), tol * float(np.max(J, initial=0.0))


def is_proper(W, J, lattice: Lattice, tol: float = PROPER_TOL) -> tuple[bool, list[tuple[int, int]]]:
    """``W`` is proper when it is nonzero wherever future consumption ``J`` is.

    Returns the verdict and the violating nodes.
    """
    W, J = _values(W), _values(J)
    w_floor, j_floor = _floors(W, J, tol)
    live = lattice.mask & (J > j_floor)
    if w_floor == 0:
        bad = live
    else:
        bad = live & (W <= w_floor)
    return (not bool(np.any(bad))), _nodes(bad)


def crra_order_check(W, J, lattice: Lattice, tol: float = PROPER_TOL) -> tuple[float, float] | None:
    """Tightest ``(k, K)`` with ``k J <= W <= K J``, or ``None`` if ``k`` would be 0."""
    W, J = _values(W), _values(J)
    w_floor, j_floor = _floors(W, J, tol)
    live = lattice.mask & (J > j_floor)
    if not np.any(live) or np.any(W[live] <= w_floor):
        return None
    ratio = W[live] / J[live]
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True)
class ComparisonResult:
    passed: bool
    first_violation: tuple[int, int] | None
    strict_somewhere: bool
    max_excess: float

    def __bool__(self) -> bool:
        return self.passed


def comparison_check(
    W1,
    W2,
    U1: AdaptedProcess,
    U2: AdaptedProcess,
    eps1: float,
    eps2: float,
    lattice: Lattice,
    Lambda: AdaptedProcess | None = None,
    rtol: float = 1e-12,
) -> ComparisonResult:
    """Check ``W1 <= W2`` node-wise for ordered perturbed problems.

    Requires ``0 <= eps1 <= eps2``, ``eps2 > 0`` and ``U1 <= U2 (<= Lambda)``;
    otherwise :class:`HypothesisUnmet` is raised.
    """
    if not eps2 > 0:
        raise HypothesisUnmet("the comparison needs eps2 > 0")
    if not 0 <= eps1 <= eps2:
        raise HypothesisUnmet("the comparison needs 0 <= eps1 <= eps2")
    try:
        check_dominated(U1, U2, rtol)
        if Lambda is not None:
            check_dominated(U2, Lambda, rtol)
    except NotDominated as exc:
        raise HypothesisUnmet(str(exc)) from exc
    a, b = _values(W1), _values(W2)
    scale = np.maximum(np.abs(b), 1e-300)
    excess = np.where(lattice.mask, (a - b) / scale, -np.inf)
    bad = excess > rtol
    first = None
    if np.any(bad):
        # earliest step first, then lowest node
        first = _nodes(bad)[0]
    strict = bool(np.any(lattice.mask & (a < b * (1 - rtol))))
    return ComparisonResult(first is None, first, strict, float(excess.max()))


def solve_perturbed_pair(
    U1: AdaptedProcess,
    U2: AdaptedProcess,
    eps1: float,
    eps2: float,
    Lambda: AdaptedProcess,
    nu: float,
    lattice: Lattice,
    prefs: PreferenceParams,
    tail: TailCondition | None = None,
):
    """Solve the two perturbed problems compared by :func:`comparison_check`."""
    tail = TailCondition.from_profile(Lambda, prefs) if tail is None else tail
    W1 = perturbed_solve(U1, PerturbationSpec(eps1, nu, Lambda), lattice, prefs, tail)
    W2 = perturbed_solve(U2, PerturbationSpec(eps2, nu, Lambda), lattice, prefs, tail)
    return W1, W2


def concept_agreement(
    U: AdaptedProcess,
    lattice: Lattice,
    prefs: PreferenceParams,
    tail: TailCondition | None = None,
    Lambda: AdaptedProcess | None = None,
    nu: float | None = None,
    rtol: float = 1e-4,
    picard_tol: float = 1e-12,
    eps_sequence=None,
) -> SolutionReport:
    """Compare the CRRA-order (Picard) and extremal solutions for ``U``.

    When ``U^theta`` is not of self-order the Picard certificate is
    unavailable; the report then carries the extremal solution, a note and
    ``concept_agreement = False`` instead of raising.
    """
    given_tail = tail
    tail = TailCondition.from_profile(U, prefs) if tail is None else tail
    J = compute_J(U, tail, lattice, prefs)
    Lambda = U if Lambda is None else Lambda
    notes: list[str] = []
    try:
        pic = picard_solve(U, None, lattice, prefs, tail=tail, tol=picard_tol)
    except NoContraction as exc:
        pic = None
        notes.append(f"self-order membership fails: {exc}")
    ext = extremal_solve(U, Lambda, nu, lattice, prefs, eps_sequence=eps_sequence, tail=given_tail)
    ext_proper, _ = is_proper(ext, J, lattice)
    if pic is None:
        ok, wit = is_proper(ext, J, lattice)
        return SolutionReport(
            ext, residual(ext, U, lattice, prefs), ok, wit, crra_order_check(ext, J, lattice),
            None, False, "extremal", notes,
        )
    W = pic.W
    proper, wit = is_proper(W, J, lattice)
    crra = crra_order_check(W, J, lattice)
    a, b = W.values, ext.values
    gap = float(np.max(np.where(lattice.mask, np.abs(a - b) / np.maximum(np.abs(a), 1e-300), 0.0)))
    if not pic.certificate.verified:
        notes.append("Picard iterate left the certified order band")
    agree = bool(proper and ext_proper and crra is not None and gap < rtol and pic.certificate.verified)
    return SolutionReport(W, residual(W, U, lattice, prefs), proper, wit, crra, gap, agree, "crra-order", notes)


def embed_family(member, strategy: Strategy, lattice: Lattice, prefs: PreferenceParams) -> AdaptedProcess:
    """``W = A(t) C^{1-R}`` with ``C = xi X`` on every node."""
    A = np.asarray(member.profile(lattice.times), dtype=float)
    C = np.where(lattice.mask, strategy.xi * lattice.X, 1.0)
    return AdaptedProcess(A[:, None] * np.where(lattice.mask, C ** prefs.one_minus_R, 0.0))


def improper_family_demo(
    strategy: Strategy, A0_list, lattice: Lattice, prefs: PreferenceParams
) -> list[SolutionReport]:
    """Embed family members on the lattice, then check and classify each.

    Only the constant member is expected to come out proper.
    """
    U = proportional_consumption(strategy, lattice, prefs)
    J = compute_J(U, TailCondition.proportional(strategy), lattice, prefs)
    reports = []
    for A0 in A0_list:
        member = family_member(A0, strategy, prefs)
        W = embed_family(member, strategy, lattice, prefs)
        proper, wit = is_proper(W, J, lattice)
        crra = crra_order_check(W, J, lattice)
        reports.append(
            SolutionReport(
                W, residual(W, U, lattice, prefs), proper, wit, crra,
                label=f"A0={member.A0:.17g} T={member.T!r}",
            )
        )
    return reports
