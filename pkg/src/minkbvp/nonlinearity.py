"""Nonlinearities g(u), their primitives G(u) and growth diagnostics.

Large arguments are handled in the log domain: ``log_g`` and ``log_G`` stay
finite long after ``g`` itself overflows a double, so growth ratios such as
g/G can be estimated far out in the tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .weight import WeightFunction, neg_sup_norm, sign_partition, window_min_l1

KINDS = ("power", "exp_power", "power_exp", "custom")
QUAD_EPSREL = 1e-12
# u^p beyond this and exp(u^p) overflows
_EXP_LIMIT = 700.0


class NonlinearityError(ValueError):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    """A nonlinearity ``scale * g(u)`` on [0, inf).

    Builtins know their derivative, logarithm and (where available) a closed
    form primitive; custom ones only need ``g`` and fall back to quadrature
    and finite differences.
    """

    kind: str
    g: Callable[[float], float] = field(compare=False)
    p: float | None = None
    kappa: float | None = None
    scale: float = 1.0
    g_prime: Callable[[float], float] | None = field(default=None, compare=False)
    G_closed: Callable[[float], float] | None = field(default=None, compare=False)
    log_g_fn: Callable[[float], float] | None = field(default=None, compare=False)
    log_G_fn: Callable[[float], float] | None = field(default=None, compare=False)
    # g'/g, needed where both overflow
    log_deriv: Callable[[float], float] | None = field(default=None, compare=False)
    R_hat: float | None = None
    name: str = ""

    def __call__(self, u: float) -> float:
        return self.g(u)

    @property
    def is_builtin(self) -> bool:
        return self.kind != "custom"

    def with_kappa(self, kappa: float) -> "Nonlinearity":
        if self.kind != "power_exp":
            raise NonlinearityError(f"kappa is not a parameter of kind {self.kind!r}")
        return make_builtin(self.kind, self.p, kappa, self.scale)

    def with_scale(self, scale: float) -> "Nonlinearity":
        if self.is_builtin:
            return make_builtin(self.kind, self.p, self.kappa, scale)
        base, factor = self, scale / self.scale
        gp = None if base.g_prime is None else (lambda u: factor * base.g_prime(u))
        Gc = None if base.G_closed is None else (lambda u: factor * base.G_closed(u))
        return Nonlinearity("custom", lambda u: factor * base.g(u), scale=scale,
                            g_prime=gp, G_closed=Gc, R_hat=base.R_hat, name=base.name)

    def derivative(self, u: float) -> float:
        if self.g_prime is not None:
            return self.g_prime(u)
        h = 1e-6 * max(1.0, abs(u))
        lo = max(u - h, 0.0)
        return (self.g(u + h) - self.g(lo)) / (u + h - lo)


def custom(g: Callable[[float], float], *, g_prime=None, G=None, R_hat: float | None = None,
           name: str = "custom") -> Nonlinearity:
    """Wrap a user function. ``R_hat`` (monotonicity threshold) must be declared for certificates."""
    if g(0.0) != 0.0:
        raise NonlinearityError("g(0) must vanish")
    return Nonlinearity("custom", g, g_prime=g_prime, G_closed=G, R_hat=R_hat, name=name)


def make_builtin(kind: str, p: float, kappa: float | None = None,
                 scale: float | None = None) -> Nonlinearity:
    """Catalogue nonlinearity ``scale * g`` with g = u^p, e^{u^p}-1 or u^p e^{kappa u}."""
    scale = 1.0 if scale is None else float(scale)
    p = float(p)
    if kind not in KINDS[:3]:
        raise NonlinearityError(f"unknown builtin kind {kind!r}")
    if not p > 1:
        raise NonlinearityError("p must exceed 1")
    if not scale > 0:
        raise NonlinearityError("scale (lambda) must be positive")
    ls = math.log(scale)

    if kind == "power":
        def g(u):
            return scale * u ** p if u > 0 else 0.0

        def gp(u):
            return scale * p * u ** (p - 1) if u > 0 else 0.0

        def Gc(u):
            return scale * u ** (p + 1) / (p + 1)

        def lg(u):
            return ls + p * math.log(u)

        def lG(u):
            return ls + (p + 1) * math.log(u) - math.log(p + 1)

        def ld(u):
            return p / u

        return Nonlinearity(kind, g, p=p, scale=scale, g_prime=gp, G_closed=Gc, log_g_fn=lg,
                            log_G_fn=lG, log_deriv=ld, R_hat=0.0, name=f"u^{p:g}")

    if kind == "exp_power":
        def g(u):
            return scale * math.expm1(u ** p) if u > 0 else 0.0

        def gp(u):
            return scale * p * u ** (p - 1) * math.exp(u ** p) if u > 0 else 0.0

        def lg(u):
            x = u ** p
            return ls + x + math.log(-math.expm1(-x))

        def ld(u):
            x = u ** p
            return p * u ** (p - 1) / -math.expm1(-x)

        return Nonlinearity(kind, g, p=p, scale=scale, g_prime=gp, log_g_fn=lg,
                            log_deriv=ld, R_hat=0.0, name=f"exp(u^{p:g})-1")

    if kappa is None or not kappa > 0:
        raise NonlinearityError("power_exp needs kappa > 0")
    kappa = float(kappa)
    lk = math.log(kappa)

    def g(u):
        return scale * u ** p * math.exp(kappa * u) if u > 0 else 0.0

    def gp(u):
        return scale * math.exp(kappa * u) * (kappa * u ** p + p * u ** (p - 1)) if u > 0 else 0.0

    def lg(u):
        return ls + p * math.log(u) + kappa * u

    def ld(u):
        return kappa + p / u

    Gc = lG = None
    if p == int(p) and p <= 8:
        n = int(p)
        falling = [math.perm(n, j) for j in range(n + 1)]

        def bracket(u):
            # sum_j (-1)^j n!/(n-j)! u^{n-j} / kappa^{j+1}
            return sum((-1) ** j * falling[j] * u ** (n - j) / kappa ** (j + 1) for j in range(n + 1))

        tail_const = (-1) ** n * falling[n] / kappa ** (n + 1)

        def series(u):
            # sum_k kappa^k u^{n+k+1} / (k! (n+k+1)), used where the closed form cancels
            x = kappa * u
            total, term, k = 0.0, u ** (n + 1), 0
            while True:
                add = term / (n + k + 1)
                total += add
                if abs(add) <= 1e-17 * abs(total):
                    break
                k += 1
                term *= x / k
            return total

        def Gc(u):
            if u <= 0:
                return 0.0
            if kappa * u < 2.0:
                return scale * series(u)
            return scale * (math.exp(kappa * u) * bracket(u) - tail_const)

        def lG(u):
            if kappa * u < 2.0:
                return ls + math.log(series(u))
            return ls + kappa * u + math.log(bracket(u) - tail_const * math.exp(-kappa * u))

    return Nonlinearity(kind, g, p=p, kappa=kappa, scale=scale, g_prime=gp, G_closed=Gc,
                        log_g_fn=lg, log_G_fn=lG, log_deriv=ld, R_hat=0.0,
                        name=f"u^{p:g} exp({kappa:g} u)")


# -- primitive -------------------------------------------------------------------

def _quad_G(n: Nonlinearity, u: float) -> float:
    pts = None
    if n.kind == "exp_power" and u > 1:
        # integrand is concentrated near the right end
        w = 30.0 / (n.p * u ** (n.p - 1))
        pts = [u - w] if u - w > 0 else None
    val, _ = integrate.quad(n.g, 0.0, u, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400, points=pts)
    return val


def eval_G(n: Nonlinearity, u: float) -> float:
    """G(u) = integral of g over [0, u]; closed form when known, else adaptive quadrature."""
    if u < 0:
        raise NonlinearityError("G is defined for u >= 0 only")
    if u == 0:
        return 0.0
    if n.G_closed is not None:
        return n.G_closed(u)
    return _quad_G(n, u)


def log_g(n: Nonlinearity, u: float) -> float:
    """log g(u) for u > 0, without overflow for builtins."""
    if u <= 0:
        return -math.inf
    if n.log_g_fn is not None:
        return n.log_g_fn(u)
    val = n.g(u)
    return math.log(val) if val > 0 else -math.inf


def log_G(n: Nonlinearity, u: float) -> float:
    """log G(u) for u > 0.

    Without a closed form this evaluates log g(u) + log of the integral of
    exp(log g(s) - log g(u)) over [0, u], whose integrand is bounded for
    nondecreasing g, so it never overflows.
    """
    if u <= 0:
        return -math.inf
    if n.log_G_fn is not None:
        return n.log_G_fn(u)
    if n.log_g_fn is None or n.log_g_fn(u) < _EXP_LIMIT:
        val = eval_G(n, u)
        if val > 0 and math.isfinite(val):
            return math.log(val)
    top = log_g(n, u)

    def rel(s):
        return math.exp(log_g(n, s) - top) if s > 0 else 0.0

    # below u - 60 / (g'/g) the integrand is under e^-60, so skip that stretch
    lo = 0.0
    if n.log_deriv is not None:
        lo = max(0.0, u - 60.0 / n.log_deriv(u))
    val, _ = integrate.quad(rel, lo, u, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400)
    return top + math.log(val)


def log_derivative(n: Nonlinearity, u: float) -> float:
    """g'(u)/g(u); closed form for builtins, central difference of log g otherwise."""
    if n.log_deriv is not None:
        return n.log_deriv(u)
    h = 1e-5 * u
    return (log_g(n, u + h) - log_g(n, u - h)) / (2 * h)


def ratio_g_over_G(n: Nonlinearity, u: float) -> float:
    return math.exp(log_g(n, u) - log_G(n, u))


# -- diagnostics ----------------------------------------------------------------

class ZeroReport(NamedTuple):
    passed: bool
    superlinear: bool
    regular_oscillation: bool
    u_grid: tuple[float, ...]
    q_values: tuple[float, ...]
    local_exponent: float
    oscillation: tuple[float, ...]
    shrinking_window: tuple[float, ...]


def check_zero_conditions(n: Nonlinearity, omega_window: float = 0.1, n_omega: int = 21) -> ZeroReport:
    """Probe superlinearity (g(u)/u -> 0) and regular oscillation of g near zero.

    The first holds when q = g/u decreases along u = 1e-1 ... 1e-8 with a positive
    fitted log-log exponent. The second is probed by
    sup over omega in [1-w, 1+w] of |g(omega u)/g(u) - 1|: it must settle to a
    finite limit as u -> 0, and at the smallest u it must vanish as the window shrinks.
    """
    us = [10.0 ** -k for k in range(1, 9)]
    qs = [n.g(u) / u for u in us]
    logs = np.log([max(q, 1e-300) for q in qs])
    slope = float(np.polyfit(np.log(us), logs, 1)[0])
    decreasing = all(q1 < q0 for q0, q1 in zip(qs, qs[1:]))
    superlinear = bool(decreasing and slope > 1e-3 and qs[-1] < qs[0])

    omegas = np.linspace(1 - omega_window, 1 + omega_window, n_omega)

    def probe(u, ws):
        gu = n.g(u)
        if gu <= 0:
            return math.inf
        return max(abs(n.g(w * u) / gu - 1.0) for w in ws)

    osc = [probe(u, omegas) for u in us]
    tail = osc[-4:]
    settled = all(math.isfinite(x) for x in osc) and (max(tail) - min(tail)) < 0.05
    shrink = [probe(us[-1], np.linspace(1 - eta, 1 + eta, n_omega)) for eta in (1e-1, 1e-2, 1e-3, 1e-4)]
    vanishing = all(b <= a for a, b in zip(shrink, shrink[1:])) and shrink[-1] < 1e-2
    regular = bool(settled and vanishing)
    return ZeroReport(superlinear and regular, superlinear, regular, tuple(us), tuple(qs),
                      slope, tuple(float(x) for x in osc), tuple(float(x) for x in shrink))


def growth_ratio_tail(n: Nonlinearity, u_max: float, samples: int = 201) -> tuple[float, float]:
    """Liminf estimates of g/G and g'/g: minima over the last decade of a geometric grid on [u_max/100, u_max]."""
    if u_max < 10:
        raise NonlinearityError("u_max must be at least 10")
    us = np.geomspace(u_max / 100.0, u_max, samples)
    last = us[us >= u_max / 10.0 * (1 - 1e-12)]
    gG = min(ratio_g_over_G(n, float(u)) for u in last)
    gpg = min(log_derivative(n, float(u)) for u in last)
    return gG, gpg


def se_threshold(w: WeightFunction) -> float:
    """||a^-||_inf / min_i A_i."""
    part = sign_partition(w)
    A = [window_min_l1(w, i, part) for i in range(1, part.m + 1)]
    return neg_sup_norm(w) / min(A)


class SECheck(NamedTuple):
    passed: bool
    margin: float
    threshold: float
    ratio_gG: float
    ratio_gpg: float


def check_se_condition(n: Nonlinearity, w: WeightFunction, u_max: float = 1000.0) -> SECheck:
    """Compare the tail growth of g against the weight threshold; margin uses g/G.

    Passes when the g/G estimate exceeds the threshold, or (derivative form)
    when g'/g does.
    """
    K = se_threshold(w)
    gG, gpg = growth_ratio_tail(n, u_max)
    passed = gG > K or gpg > K
    return SECheck(passed, gG - K, K, gG, gpg)


class NonexistenceReport(NamedTuple):
    holds: bool
    eta: float
    log_ratio_tail: tuple[float, ...]
    tail_exponent: float


def check_nonexistence_condition(n: Nonlinearity, eta: float, u_lo: float = 10.0,
                                 u_hi: float = 1e4, samples: int = 41) -> NonexistenceReport:
    """Is |g'|/g^eta bounded at infinity? Judged by the fitted log-log slope of the ratio on the tail.

    log(|g'|/g^eta) = log|g'/g| + (1 - eta) log g, which stays finite in the log domain.
    """
    if not 0 <= eta < 1:
        raise NonlinearityError("eta must lie in [0, 1)")
    us = np.geomspace(u_lo, u_hi, samples)
    vals = []
    for u in us:
        d = log_derivative(n, float(u))
        vals.append(math.log(abs(d)) + (1 - eta) * log_g(n, float(u)) if d != 0 else -math.inf)
    vals = np.array(vals)
    half = samples // 2
    slope = float(np.polyfit(np.log(us[half:]), vals[half:], 1)[0])
    return NonexistenceReport(bool(slope <= 1e-2), eta, tuple(vals.tolist()), slope)
