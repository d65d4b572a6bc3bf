"""Shooting solvers for the Neumann and periodic problems."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ._parallel import pmap
from .nonlinearity import Nonlinearity
from .phase_flow import (DEFAULT_ATOL, DEFAULT_RTOL, BlowUpError, ForcingSpec, HomotopyParams,
                         IntegrationError, PhaseState, Trajectory, forcing_indicator, integrate,
                         phi_inv)
from .weight import WeightError, WeightFunction, normalize_periodic, segment_points

ROOT_TOL = 1e-10
DEDUP_RADIUS = 1e-8
WEAK_CELLS = 64


class BoundaryCondition(enum.Enum):
    NEUMANN = "neumann"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, text: str) -> "BoundaryCondition":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown boundary condition {text!r}") from None


@dataclass(frozen=True)
class Problem:
    weight: WeightFunction
    nonlin: Nonlinearity
    bc: BoundaryCondition = BoundaryCondition.NEUMANN
    lam: float = 1.0
    theta: float = 1.0
    alpha: float = 0.0
    forcing: ForcingSpec = "positive_indicator"
    extension: str = "negative_part"
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL

    @property
    def T(self) -> float:
        return self.weight.period_T

    @property
    def hp(self) -> HomotopyParams:
        return HomotopyParams(theta=self.theta, alpha=self.alpha, lam=self.lam)

    def with_(self, **changes) -> "Problem":
        return replace(self, **changes)

    def shoot(self, s0, t_span=None, dense=True) -> Trajectory:
        return integrate(self.weight, self.nonlin, self.hp, self.forcing, s0,
                         t_span or (0.0, self.T), (self.rtol, self.atol),
                         dense=dense, extension=self.extension)

    def source(self, t: np.ndarray, u: np.ndarray) -> np.ndarray:
        """theta [lam a(t) g(u) + alpha w(t)] with the configured extension for u < 0."""
        t = np.asarray(t, dtype=float)
        u = np.asarray(u, dtype=float)
        a = np.array([self.weight.periodic(x) for x in t])
        gu = np.array([self.nonlin.g(x) if x >= 0 or self.extension == "natural" else 0.0 for x in u])
        src = self.lam * a * gu
        if self.extension == "negative_part":
            src = np.where(u < 0, -u, src)
        if self.alpha:
            wf = self.forcing if callable(self.forcing) else forcing_indicator(self.weight)
            src = src + self.alpha * np.array([wf(x) for x in t])
        return self.theta * src


@dataclass(frozen=True)
class SolutionCertificate:
    bc_residual: float
    weak_residual: float
    min_u: float
    max_abs_slope: float

    @property
    def positive(self) -> bool:
        return self.min_u > 0


@dataclass(frozen=True)
class Solution:
    trajectory: Trajectory
    problem: Problem
    sup_norm: float
    max_point: float
    certificate: SolutionCertificate | None = None
    time_shift: float = 0.0

    @property
    def bc(self) -> BoundaryCondition:
        return self.problem.bc

    @property
    def u0(self) -> float:
        return self.trajectory.u[0]

    @property
    def v0(self) -> float:
        return self.trajectory.v[0]

    @property
    def positive(self) -> bool:
        return self.certificate is not None and self.certificate.positive


class SolutionSet(list):
    """List of solutions plus the scan points where integration failed."""

    def __init__(self, items=(), failures=()):
        super().__init__(items)
        self.failures: list[tuple[float, str]] = list(failures)


class ShootingBlowUp(BlowUpError):
    def __init__(self, c: float, cause: BlowUpError):
        super().__init__(cause.t_last, f"initial value c={c!r}")
        self.c = c


def make_solution(traj: Trajectory, problem: Problem, time_shift: float = 0.0) -> Solution:
    t_max, u_max = traj.max_point()
    us = np.asarray(traj.u)
    sol = Solution(traj, problem, float(max(u_max, np.max(np.abs(us)))), float(t_max), None, time_shift)
    return replace(sol, certificate=verify_solution(sol))


# -- Neumann ---------------------------------------------------------------------

def neumann_residual(c: float, problem: Problem) -> float:
    """v(T) for the trajectory starting at (c, 0)."""
    try:
        return problem.shoot((c, 0.0), dense=False).v[-1]
    except BlowUpError as exc:
        raise ShootingBlowUp(c, exc) from exc


def _refine(problem: Problem, lo: float, hi: float, r_lo: float, r_hi: float) -> float | None:
    if r_lo == 0.0:
        return lo
    if r_hi == 0.0:
        return hi
    f = lambda c: neumann_residual(c, problem)  # noqa: E731
    root = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return root


def _accept_root(problem: Problem, c: float) -> Trajectory | None:
    # a sign change without a small residual means the shooting map jumps inside the bracket
    traj = problem.shoot((c, 0.0))
    scale = 1.0 + max(abs(x) for x in traj.v)
    if abs(traj.v[-1]) <= ROOT_TOL * scale:
        return traj
    return None


def solve_neumann(problem: Problem, scan: tuple[float, float, int] | None = None,
                  positive_only: bool = True) -> SolutionSet:
    """All Neumann solutions u(0) = c found by bracketing v(T) on a uniform scan of c."""
    if scan is None:
        scan = (1e-3, 10.0 + problem.T, 2000)
    c_min, c_max, n_pts = scan
    if not 0 < c_min < c_max:
        raise ValueError("scan requires 0 < c_min < c_max")
    return scan_neumann(problem, np.linspace(c_min, c_max, int(n_pts)), positive_only)


def scan_neumann(problem: Problem, grid: Sequence[float], positive_only: bool = False) -> SolutionSet:
    """Neumann roots of c -> v(T) bracketed on an arbitrary increasing grid (any sign of c)."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise ValueError("scan needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("scan grid must be strictly increasing")

    def eval_point(c):
        try:
            return neumann_residual(float(c), problem), None
        except IntegrationError as exc:
            return math.nan, str(exc)

    values = pmap(eval_point, grid)
    failures = [(float(c), msg) for c, (_, msg) in zip(grid, values) if msg is not None]
    res = [r for r, _ in values]

    # exact zeros are roots in their own right (a whole run of them for degenerate g)
    roots: list[float] = [float(c) for c, r in zip(grid, res) if r == 0.0]
    for k in range(len(grid) - 1):
        r0, r1 = res[k], res[k + 1]
        if not (math.isfinite(r0) and math.isfinite(r1)):
            continue
        if not r0 * r1 < 0:
            continue
        try:
            c = _refine(problem, float(grid[k]), float(grid[k + 1]), r0, r1)
        except (IntegrationError, ValueError) as exc:
            failures.append((float(grid[k]), f"refinement failed: {exc}"))
            continue
        if c is not None:
            roots.append(c)

    out: list[Solution] = []
    for c in sorted(roots):
        if out and abs(c - out[-1].u0) < DEDUP_RADIUS:
            continue
        traj = _accept_root(problem, c)
        if traj is None:
            failures.append((c, "residual above acceptance threshold"))
            continue
        sol = make_solution(traj, problem)
        if positive_only and not sol.positive:
            continue
        out.append(sol)
    return SolutionSet(out, failures)


def refine_neumann(problem: Problem, c_guess: float, radius: float = 0.05) -> Solution | None:
    """Neumann solution closest to ``c_guess``, bracketing outward from it."""
    for r in (radius, 2 * radius, 4 * radius):
        lo, hi = max(c_guess - r, 1e-12), c_guess + r
        found = solve_neumann(problem, (lo, hi, 21), positive_only=False)
        if found:
            return min(found, key=lambda s: abs(s.u0 - c_guess))
    return None


# -- periodic --------------------------------------------------------------------

def periodic_map(s0, problem: Problem) -> tuple[np.ndarray, Trajectory]:
    traj = problem.shoot(s0, dense=False)
    return np.array([traj.u[-1] - s0[0], traj.v[-1] - s0[1]]), traj


@dataclass
class NewtonReport:
    guess: PhaseState
    converged: bool
    iterations: int
    residual: float
    message: str = ""
    state: PhaseState | None = None


def _newton_periodic(problem: Problem, guess, tol=ROOT_TOL, max_iter=50, step_tol=1e-9) -> NewtonReport:
    # convergence needs a small residual and a small last step: near the trivial state the
    # map is degenerate, the residual is tiny long before the iterate has settled
    x = np.array([float(guess[0]), float(guess[1])])
    last_step = math.inf
    history: list[float] = []
    try:
        S, _ = periodic_map(x, problem)
    except IntegrationError as exc:
        return NewtonReport(PhaseState(*guess), False, 0, math.inf, f"integration failed: {exc}")
    for it in range(1, max_iter + 1):
        norm = float(np.linalg.norm(S))
        if norm < tol and last_step <= step_tol * (1.0 + np.abs(x).max()):
            return NewtonReport(PhaseState(*guess), True, it - 1, norm, "", PhaseState(*x))
        J = np.empty((2, 2))
        try:
            for j in range(2):
                h = 1e-7 * max(1.0, abs(x[j]))
                xp = x.copy()
                xp[j] += h
                Sp, _ = periodic_map(xp, problem)
                J[:, j] = (Sp - S) / h
        except IntegrationError as exc:
            return NewtonReport(PhaseState(*guess), False, it, norm, f"integration failed: {exc}")
        if abs(np.linalg.det(J)) < 1e-14 * max(1.0, np.abs(J).max() ** 2):
            return NewtonReport(PhaseState(*guess), False, it, norm, "singular Jacobian")
        history.append(norm)
        if len(history) > 10 and norm > 0.5 * history[-11]:
            return NewtonReport(PhaseState(*guess), False, it, norm, "stagnated")
        dx = np.linalg.solve(J, -S)
        step = 1.0
        for _ in range(12):
            xn = x + step * dx
            try:
                Sn, _ = periodic_map(xn, problem)
            except IntegrationError:
                step *= 0.5
                continue
            if np.linalg.norm(Sn) < (1 - 1e-4 * step) * norm or np.linalg.norm(Sn) < tol:
                last_step = float(np.abs(xn - x).max())
                x, S = xn, Sn
                break
            step *= 0.5
        else:
            return NewtonReport(PhaseState(*guess), False, it, norm, "line search failed")
    norm = float(np.linalg.norm(S))
    ok = norm < tol and last_step <= step_tol * (1.0 + np.abs(x).max())
    return NewtonReport(PhaseState(*guess), ok, max_iter, norm, "" if ok else "iteration limit",
                        PhaseState(*x) if ok else None)


def solve_periodic(problem: Problem, initial_guesses: Sequence, positive_only: bool = False
                   ) -> SolutionSet:
    """Periodic solutions by damped Newton on (u0, v0) -> (u(T) - u0, v(T) - v0).

    The weight is first time-shifted so that it is positive right after t = 0; the
    returned solutions live in the shifted time and carry the shift.
    """
    try:
        w_norm, shift = normalize_periodic(problem.weight)
    except WeightError:
        # single-signed weights have nothing to align
        w_norm, shift = problem.weight, 0.0
    prob = problem.with_(weight=w_norm, bc=BoundaryCondition.PERIODIC)
    reports = pmap(lambda g: _newton_periodic(prob, g), list(initial_guesses))
    out: list[Solution] = []
    failures = []
    for rep in reports:
        if not rep.converged:
            failures.append((rep.guess.u, rep.message))
            continue
        s = rep.state
        if max(abs(s.u), abs(s.v)) < 1e-6 and np.linalg.norm(periodic_map((0.0, 0.0), prob)[0]) == 0.0:
            s = PhaseState(0.0, 0.0)  # the degenerate approach to the trivial state
        if any(abs(s.u - o.u0) < DEDUP_RADIUS and abs(s.v - o.v0) < DEDUP_RADIUS for o in out):
            continue
        sol = make_solution(prob.shoot(s), prob, shift)
        if positive_only and not sol.positive:
            continue
        out.append(sol)
    out.sort(key=lambda s: (s.u0, s.v0))
    return SolutionSet(out, failures)


def periodic_guesses(problem: Problem, c_max: float | None = None, n_u: int = 12, n_v: int = 7,
                     neumann: Sequence[Solution] = ()) -> list[PhaseState]:
    """Seeds from Neumann solutions and a coarse grid over (0, c_max] x [-3, 3]."""
    c_max = c_max or 10.0 + problem.T
    seeds = [PhaseState(s.u0, s.v0) for s in neumann]
    for u in np.linspace(c_max / n_u, c_max, n_u):
        for v in np.linspace(-3.0, 3.0, n_v):
            seeds.append(PhaseState(float(u), float(v)))
    return seeds


# -- certificate -----------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def verify_solution(sol: Solution) -> SolutionCertificate:
    """Boundary residual, weak-form residual against hat functions, min u, max |u'|.

    Residuals are measured relative to 1 + max|v| so that they stay meaningful for
    solutions whose momentum is large.
    """
    traj, prob = sol.trajectory, sol.problem
    T = prob.T
    us = np.asarray(traj.u)
    vs = np.asarray(traj.v)
    scale = 1.0 + float(np.max(np.abs(vs)))
    if prob.bc is BoundaryCondition.NEUMANN:
        bc = max(abs(vs[0]), abs(vs[-1])) / scale
    else:
        bc = max(abs(us[-1] - us[0]) / (1.0 + float(np.max(np.abs(us)))), abs(vs[-1] - vs[0]) / scale)

    if not traj.has_dense or len(traj.t) < 2:
        weak = 0.0 if np.all(vs == 0) and np.all(prob.source(np.asarray(traj.t), us) == 0) else math.inf
        return SolutionCertificate(float(bc), float(weak), float(us.min()), float(np.max(np.abs(vs / np.hypot(1, vs)))))

    # quadrature nodes: split every cell at trajectory nodes and weight breakpoints
    h = T / WEAK_CELLS
    cuts = set(np.linspace(0.0, T, WEAK_CELLS + 1).tolist())
    cuts.update(traj.t)
    cuts.update(segment_points(prob.weight))
    edges = np.array(sorted(c for c in cuts if 0.0 <= c <= T))
    lo, hi = edges[:-1], edges[1:]
    keep = hi - lo > 1e-14 * T
    lo, hi = lo[keep], hi[keep]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    tq = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wq = (half[:, None] * _GL_W[None, :]).ravel()
    uq, vq = traj.sample(tq)
    src = prob.source(tq, uq)

    # hat centred at node j: psi = 1 - |t - t_j| / h on [t_{j-1}, t_{j+1}]
    cell = np.minimum((tq / h).astype(int), WEAK_CELLS - 1)
    frac = tq / h - cell
    # each point lies in one cell and touches hats j = cell (descending part) and cell + 1 (rising)
    n_hats = WEAK_CELLS + 1
    res = np.zeros(n_hats)
    np.add.at(res, cell, wq * (vq * (-1.0 / h) - src * (1.0 - frac)))
    np.add.at(res, cell + 1, wq * (vq * (1.0 / h) - src * frac))
    # Neumann: the two boundary half-hats test v(0) = v(T) = 0 directly.
    # Periodic: glue them into one hat across t = 0 = T.
    if prob.bc is BoundaryCondition.PERIODIC:
        res[0] += res[-1]
        res = res[:-1]
    weak = float(np.max(np.abs(res))) / scale
    slopes = np.abs(vq / np.hypot(1.0, vq))
    return SolutionCertificate(float(bc), weak, float(min(us.min(), uq.min())),
                               float(max(slopes.max(), np.max(np.abs(vs / np.hypot(1, vs))))))
