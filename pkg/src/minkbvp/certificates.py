"""A-priori constants, homotopy probes, the 1-D degree and the wedge-shape check.

The probes are falsification searches: an empty report means no counterexample
was found at the scanned resolution, nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .nonlinearity import Nonlinearity, check_se_condition, log_G, log_g
from .phase_flow import Trajectory, forcing_indicator, phi, phi_inv
from .shooting import BoundaryCondition, Problem, scan_neumann, solve_periodic
from .weight import (SignPartition, WeightFunction, gamma, l1_norm, mean_value, neg_sup_norm,
                     positive_indicator_l1, sign_partition, window_min_l1)

ALPHA0_SAFETY = 1.01


@dataclass(frozen=True)
class TheoremConstants:
    K: float
    A: tuple[float, ...]
    delta: tuple[float, ...]
    gamma: tuple[float, ...]
    eps: float
    beta: tuple[float, ...]
    R_star: float
    R: float
    r: float
    alpha0: float
    log_alpha0: float
    liminf_estimate: float
    lengths: tuple[float, ...]

    def items(self) -> list[tuple[str, float]]:
        """Flat (key, value) pairs, indexed keys for per-interval values."""
        out: list[tuple[str, float]] = [("K", self.K)]
        for name in ("A", "delta", "gamma", "beta"):
            for i, x in enumerate(getattr(self, name), start=1):
                out.append((f"{name}_{i}", x))
        out += [("eps", self.eps), ("R_star", self.R_star), ("R", self.R), ("r", self.r),
                ("alpha0", self.alpha0), ("log_alpha0", self.log_alpha0),
                ("liminf_g_over_G", self.liminf_estimate)]
        return out


@dataclass(frozen=True)
class ConstantsFailure:
    condition: str
    message: str
    K: float
    estimate: float

    def items(self) -> list[tuple[str, float | str]]:
        return [("failed_condition", self.condition), ("message", self.message),
                ("K", self.K), ("liminf_g_over_G", self.estimate)]


def _log_phi_bound(eps: float) -> float:
    # log(-phi(-1 + eps)) = log |phi(1 - eps)|
    return math.log(phi(1.0 - eps))


def descent_bound_holds(n: Nonlinearity, rho: float, gam: float, delta: float, eps: float,
                        R_hat: float = 0.0) -> bool:
    """-gamma * min_{[rho - delta, rho]} g <= phi(-1 + eps), in log form."""
    lo = rho - delta
    if lo <= 0:
        return False
    if lo >= R_hat:
        lg = log_g(n, lo)
    else:
        lg = min(log_g(n, s) for s in np.linspace(lo, rho, 65))
    return math.log(gam) + lg >= _log_phi_bound(eps)


def growth_bound_holds(n: Nonlinearity, rho: float, gam: float, delta: float, beta: float,
                       eps: float, neg_sup: float) -> bool:
    """gamma g(x) > ||a^-|| G(x - beta) - phi(-1 + eps) with x = rho - delta, in log form."""
    x = rho - delta
    y = x - beta
    if y <= 0:
        return False
    lhs = math.log(gam) + log_g(n, x)
    first = math.log(neg_sup) + log_G(n, y) if neg_sup > 0 else -math.inf
    return lhs > np.logaddexp(first, _log_phi_bound(eps))


def _all_hold(n, rho, gams, deltas, betas, eps, neg_sup, R_hat) -> bool:
    return all(descent_bound_holds(n, rho, g, d, eps, R_hat)
               and growth_bound_holds(n, rho, g, d, b, eps, neg_sup)
               for g, d, b in zip(gams, deltas, betas))


def compute_constants(w: WeightFunction, n: Nonlinearity, r: float = 1e-3,
                      u_max: float = 1000.0) -> TheoremConstants | ConstantsFailure:
    part = sign_partition(w)
    A = tuple(window_min_l1(w, i, part) for i in range(1, part.m + 1))
    neg = neg_sup_norm(w)
    K = neg / min(A)
    se = check_se_condition(n, w, u_max)
    L = se.ratio_gG if math.isfinite(se.ratio_gG) else se.ratio_gpg
    if not se.passed:
        return ConstantsFailure("g_SE", f"liminf g/G ~ {L:.6g} does not exceed K = {K:.6g}", K, L)

    lengths = tuple(t - s for s, t in part.positivity_intervals)
    deltas, gams = [], []
    for i, length in enumerate(lengths, start=1):
        cap = length / 4
        for k in range(1, 53):
            d = cap * (1.0 - 2.0 ** -k)
            gm = gamma(w, i, d, part)
            if gm > 0 and L > neg / gm:
                break
        else:
            return ConstantsFailure("delta", f"no admissible delta on positivity interval {i}", K, L)
        deltas.append(d)
        gams.append(gm)

    eps = 0.5 * min((Li - 4 * d) / (Li - 2 * d) for Li, d in zip(lengths, deltas))
    betas = [eps * (d - Li / 2) + Li / 2 - 2 * d for Li, d in zip(lengths, deltas)]
    R_hat = n.R_hat if n.R_hat is not None else 0.0

    holds = lambda rho: _all_hold(n, rho, gams, deltas, betas, eps, neg, R_hat)  # noqa: E731
    start = max(R_hat, 1.0)
    R_star = None
    lo_fail = None
    rho = start
    for _ in range(200):
        # geometric search for a passing point, then bisection back to the threshold
        hi = rho
        while not holds(hi):
            lo_fail = hi
            hi *= 2.0
            if hi > 2.0 ** 40 * start:
                return ConstantsFailure("R_star", "R* search did not terminate", K, L)
        if lo_fail is None or lo_fail >= hi:
            cand = hi
        else:
            a, b = lo_fail, hi
            while b - a > 1e-6:
                mid = 0.5 * (a + b)
                if holds(mid):
                    b = mid
                else:
                    a = mid
            cand = b
        bad = [x for x in np.linspace(cand, cand + 10.0, 100) if not holds(float(x))]
        if not bad:
            R_star = cand
            break
        lo_fail = rho = float(bad[-1])
    if R_star is None:
        return ConstantsFailure("R_star", "R* search did not stabilise", K, L)

    R = max(R_star, R_hat) + 2 * max(deltas) + w.period_T
    log_gmax = max(log_g(n, R), max(log_g(n, s) for s in np.linspace(R / 64, R, 64)))
    log_alpha0 = (math.log(l1_norm(w)) + log_gmax - math.log(positive_indicator_l1(w))
                  + math.log(ALPHA0_SAFETY))
    alpha0 = math.exp(log_alpha0) if log_alpha0 < 709 else math.inf
    return TheoremConstants(K, A, tuple(deltas), tuple(gams), eps, tuple(betas), R_star, R, r,
                            alpha0, log_alpha0, L, lengths)


# -- degree ----------------------------------------------------------------------

class DegenerateBoundaryError(ValueError):
    pass


def f_sharp(w: WeightFunction, n: Nonlinearity, s: float) -> float:
    """g(s) * integral of a for s >= 0, -s for s < 0."""
    return n.g(s) * mean_value(w) if s >= 0 else -s


def brouwer_degree_f_sharp(w: WeightFunction, n: Nonlinearity, r: float) -> int:
    """Degree of -f_sharp on (-r, r) from the boundary signs."""
    if not r > 0:
        raise ValueError("r must be positive")
    hi, lo = -f_sharp(w, n, r), -f_sharp(w, n, -r)
    if hi == 0 or lo == 0:
        raise DegenerateBoundaryError(f"f_sharp vanishes at an endpoint of (-{r}, {r})")
    return int((np.sign(hi) - np.sign(lo)) // 2)


# -- homotopy probes -------------------------------------------------------------

@dataclass
class ProbeReport:
    name: str
    level: float
    band: tuple[float, float]
    resolution: int
    hits: list[tuple[float, float, float]] = field(default_factory=list)  # (param, u0, sup_norm)
    failures: int = 0

    @property
    def passed(self) -> bool:
        return not self.hits

    @property
    def summary(self) -> str:
        if self.hits:
            return f"{len(self.hits)} solution(s) with sup-norm in [{self.band[0]:.6g}, {self.band[1]:.6g}]"
        return f"no counterexample found at resolution {self.resolution}"


def _solutions(problem: Problem, c_abs: float, resolution: int):
    if problem.bc is BoundaryCondition.NEUMANN:
        grid = np.linspace(-c_abs, c_abs, resolution)
        grid = grid[grid != 0.0]
        return scan_neumann(problem, grid, positive_only=False)
    guesses = [(float(u), float(v)) for u in np.linspace(-c_abs, c_abs, max(3, resolution // 20))
               for v in np.linspace(-1.0, 1.0, 5) if u != 0.0]
    return solve_periodic(problem, guesses)


def probe_H1(problem: Problem, r: float, thetas: Sequence[float], resolution: int = 400,
             band: tuple[float, float] = (0.9, 1.1)) -> ProbeReport:
    """Search the theta-scaled problem (alpha = 0) for solutions with sup-norm near r."""
    lo, hi = band[0] * r, band[1] * r
    rep = ProbeReport("H1", r, (lo, hi), resolution)
    for th in thetas:
        prob = problem.with_(theta=float(th), alpha=0.0)
        sols = _solutions(prob, hi, resolution)
        rep.failures += len(sols.failures)
        rep.hits += [(float(th), s.u0, s.sup_norm) for s in sols if lo <= s.sup_norm <= hi]
    return rep


def probe_H2(problem: Problem, R: float, alphas: Sequence[float], resolution: int = 400,
             band: tuple[float, float] = (0.95, 1.05)) -> ProbeReport:
    """Search the alpha-forced problem (theta = 1) for solutions with sup-norm near R."""
    lo, hi = band[0] * R, band[1] * R
    rep = ProbeReport("H2", R, (lo, hi), resolution)
    for al in alphas:
        prob = problem.with_(theta=1.0, alpha=float(al))
        sols = _solutions(prob, hi, resolution)
        rep.failures += len(sols.failures)
        rep.hits += [(float(al), s.u0, s.sup_norm) for s in sols if lo <= s.sup_norm <= hi]
    return rep


def probe_H3(problem: Problem, R: float, alpha0: float, resolution: int = 400) -> ProbeReport:
    """At alpha = alpha0: search for any solution with sup-norm at most R."""
    rep = ProbeReport("H3", R, (0.0, R), resolution)
    prob = problem.with_(theta=1.0, alpha=float(alpha0))
    sols = _solutions(prob, R, resolution)
    rep.failures += len(sols.failures)
    rep.hits += [(float(alpha0), s.u0, s.sup_norm) for s in sols if s.sup_norm <= R]
    return rep


# -- wedge shape -----------------------------------------------------------------

@dataclass(frozen=True)
class WedgeReport:
    passed: bool
    inconclusive: bool
    t_hat: float
    delta: float
    eps: float
    rise_min_slope: float | None
    fall_max_slope: float | None
    message: str = ""


def wedge_certificate(traj: Trajectory, partition: SignPartition | None, eps: float,
                      delta: float | None = None, samples: int = 4001) -> WedgeReport:
    """Check u' >= 1 - eps before t_hat - delta and u' <= -1 + eps after t_hat + delta."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if delta is None:
        if partition is None:
            raise ValueError("need a partition or an explicit delta")
        delta = max(t - s for s, t in partition.positivity_intervals) / 8
    t0, t1 = min(traj.t0, traj.t1), max(traj.t0, traj.t1)
    t_hat, _ = traj.max_point()
    if t1 - t0 < 2 * delta:
        return WedgeReport(False, True, t_hat, delta, eps, None, None, "trajectory shorter than 2 delta")
    rise = fall = None
    ok = True
    if t_hat - delta > t0:
        ts = np.linspace(t0, t_hat - delta, samples)
        _, vs = traj.sample(ts)
        rise = float(np.min(vs / np.hypot(1.0, vs)))
        ok &= rise >= 1 - eps
    if t_hat + delta < t1:
        ts = np.linspace(t_hat + delta, t1, samples)
        _, vs = traj.sample(ts)
        fall = float(np.max(vs / np.hypot(1.0, vs)))
        ok &= fall <= -1 + eps
    if rise is None and fall is None:
        return WedgeReport(False, True, t_hat, delta, eps, None, None, "peak leaves no room on either side")
    return WedgeReport(bool(ok), False, t_hat, delta, eps, rise, fall)
