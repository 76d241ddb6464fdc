"""Independent reference computations for the test-suite.

Closed forms are re-derived in mpmath at 50 digits; lattice quantities are
recomputed by enumerating every path of a non-recombining binary tree, so
neither recombination nor the package's vectorised expectations are reused.
"""

from __future__ import annotations

import itertools

import mpmath as mp

mp.mp.dps = 50


def market_constants(R, S, r, mu, sigma):
    R, S, r, mu, sigma = map(mp.mpf, (R, S, r, mu, sigma))
    theta = (1 - R) / (1 - S)
    lam = (mu - r) / sigma
    eta = (S - 1) / S * (r + lam**2 / (2 * R))
    return dict(theta=theta, rho=(theta - 1) / theta, lam=lam, eta=eta, pi_hat=lam / (sigma * R))


def H(pi, xi, R, S, r, mu, sigma):
    R, r, mu, sigma, pi, xi = map(mp.mpf, (R, r, mu, sigma, pi, xi))
    return (R - 1) * (r + pi * (mu - r) - xi - pi**2 * sigma**2 * R / 2)


def h(pi, xi, R, S, r, mu, sigma):
    theta = (1 - mp.mpf(R)) / (1 - mp.mpf(S))
    Hv = H(pi, xi, R, S, r, mu, sigma)
    return mp.mpf(xi) ** (1 - mp.mpf(R)) / (1 - mp.mpf(R)) * (theta / Hv) ** theta


def V_hat(x, R, S, r, mu, sigma):
    c = market_constants(R, S, r, mu, sigma)
    return c["eta"] ** (-c["theta"] * mp.mpf(S)) * mp.mpf(x) ** (1 - mp.mpf(R)) / (1 - mp.mpf(R))


def absorption_time(A0, Hv, theta):
    A0, Hv, theta = map(mp.mpf, (A0, Hv, theta))
    return theta / Hv * mp.log(theta / (theta - Hv * A0 ** (1 / theta)))


def integrate_A(A0, Hv, theta, t):
    """Numerically integrate ``A' = H A - theta A^rho`` from ``A(0) = A0``."""
    A0, Hv, theta = map(mp.mpf, (A0, Hv, theta))
    rho = (theta - 1) / theta
    f = mp.odefun(lambda s, a: Hv * a - theta * a**rho, 0, A0)
    return f(mp.mpf(t))


def backward_ode(xi, u, theta, dt):
    """Integrate ``W' = -u W^rho`` backward over one step from ``W(dt) = xi``.

    For ``xi = 0`` the maximal branch is taken by starting from a tiny value.
    """
    theta = mp.mpf(theta)
    rho = (theta - 1) / theta
    start = mp.mpf(xi) if xi > 0 else mp.mpf("1e-60")
    # reverse time: s = dt - t, dW/ds = u(dt - s) W^rho
    f = mp.odefun(lambda s, w: u(mp.mpf(dt) - s) * w**rho, 0, start)
    return f(mp.mpf(dt))


def enumerate_paths(n_from, n_to):
    """All up/down sequences of length ``n_to - n_from``."""
    return itertools.product((0, 1), repeat=n_to - n_from)


def path_backward(u_fn, rate_fn, tail_fn, i, j, n, dt, theta, p=mp.mpf("0.5")):
    """``W`` at node ``(i, j)`` by recursion over a non-recombining tree.

    ``u_fn(k, m)`` is the node consumption, ``rate_fn(k, m)`` its within-step
    decay, ``tail_fn(m)`` the terminal ``W`` at ``n`` after ``m`` ups.  Step
    integrals come from mpmath quadrature.
    """
    theta = mp.mpf(theta)

    def rec(k, m):
        if k == n:
            return mp.mpf(tail_fn(m))
        xi = p * rec(k + 1, m + 1) + (1 - p) * rec(k + 1, m)
        u, g = mp.mpf(u_fn(k, m)), mp.mpf(rate_fn(k, m))
        I = mp.quad(lambda s: u * mp.e ** (-g * s), [0, dt])
        return (xi ** (1 / theta) + I / theta) ** theta

    return rec(i, j)


def telescoping_bound(active, i, j, n, dt, gamma, theta, p=mp.mpf("0.5")):
    """``((1/(gamma theta)) E[e^{-gamma(t v sigma)} - e^{-gamma(t v tau)}])^theta``.

    The expectation is written as the sum over steps of
    ``1{sigma <= t_k < tau}(e^{-gamma t_k} - e^{-gamma t_{k+1}})`` along each
    path, with the indicator frozen after the last step.  Paths are enumerated
    explicitly.
    """
    gamma, theta, dt = map(mp.mpf, (gamma, theta, dt))
    total = mp.mpf(0)
    for moves in enumerate_paths(i, n):
        prob = mp.mpf(1)
        m = j
        s = mp.mpf(0)
        for step, up in enumerate(moves):
            k = i + step
            if active[k][m]:
                s += mp.e ** (-gamma * k * dt) - mp.e ** (-gamma * (k + 1) * dt)
            prob *= p if up else 1 - p
            m += up
        if active[n][m]:
            s += mp.e ** (-gamma * n * dt)
        total += prob * s
    return (total / (gamma * theta)) ** theta
