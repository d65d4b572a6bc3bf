"""Pseudo-arclength continuation of Neumann solutions in lam or kappa."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .phase_flow import IntegrationError
from .shooting import ROOT_TOL, Problem, Solution, make_solution, refine_neumann, solve_neumann

PARAMS = ("lam", "kappa")


class ContinuationError(RuntimeError):
    pass


def problem_at(problem: Problem, name: str, value: float) -> Problem:
    """Copy of ``problem`` with the continuation parameter set to ``value``."""
    if name == "lam":
        return problem.with_(lam=value)
    if name == "kappa":
        return problem.with_(nonlin=problem.nonlin.with_kappa(value))
    raise ValueError(f"unknown continuation parameter {name!r}; expected one of {PARAMS}")


def _param_value(problem: Problem, name: str) -> float:
    return problem.lam if name == "lam" else problem.nonlin.kappa


@dataclass(frozen=True)
class BranchPoint:
    param: float
    u0: float
    sup_norm: float
    bc_residual: float
    weak_residual: float
    ds: float = 0.0  # arclength step (normalized units) that produced this point

    @classmethod
    def from_solution(cls, param: float, sol: Solution, ds: float = 0.0) -> "BranchPoint":
        c = sol.certificate
        return cls(param, sol.u0, sol.sup_norm, c.bc_residual, c.weak_residual, ds)


@dataclass
class Branch:
    problem: Problem
    param_name: str
    points: list[BranchPoint]
    direction: int
    param_scale: float
    folds: list[int] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    @property
    def u0s(self) -> np.ndarray:
        return np.array([p.u0 for p in self.points])

    def solve_at(self, value: float) -> Solution | None:
        """Neumann solution at exactly ``value``, seeded from the nearest branch point(s)."""
        return solve_at(self.problem, self.param_name, value, self.nearest_u0(value))

    def nearest_u0(self, value: float) -> float:
        ps = self.params
        k = int(np.argmin(np.abs(ps - value)))
        return self.points[k].u0

    def solutions_at(self, value: float) -> list[Solution]:
        """One corrected solution per branch crossing of ``value``."""
        out = []
        ps, cs = self.params, self.u0s
        for k in range(len(ps) - 1):
            lo, hi = ps[k], ps[k + 1]
            if min(lo, hi) <= value <= max(lo, hi) and lo != hi:
                guess = cs[k] + (value - lo) / (hi - lo) * (cs[k + 1] - cs[k])
                sol = solve_at(self.problem, self.param_name, value, guess,
                               radius=max(abs(cs[k + 1] - cs[k]), 1e-3))
                if sol is not None and not any(abs(sol.u0 - s.u0) < 1e-8 for s in out):
                    out.append(sol)
        return out


def _shoot_vT(problem: Problem, c: float) -> tuple[float, float]:
    traj = problem.shoot((c, 0.0), dense=False)
    return traj.v[-1], max(abs(x) for x in traj.v)


def solve_at(problem: Problem, name: str, value: float, c_guess: float,
             radius: float = 0.05) -> Solution | None:
    """Neumann solution at a fixed parameter value nearest to ``c_guess``."""
    prob = problem_at(problem, name, value)
    # Newton in c first; fall back to local bracketing
    c = c_guess
    try:
        for _ in range(30):
            r, vmax = _shoot_vT(prob, c)
            if abs(r) <= 1e-3 * ROOT_TOL * (1 + vmax) and c > 0:
                return make_solution(prob.shoot((c, 0.0)), prob)
            h = 1e-7 * max(1.0, abs(c))
            rp, _ = _shoot_vT(prob, c + h)
            d = (rp - r) / h
            if d == 0:
                break
            dc = -r / d
            if abs(dc) > radius:
                break
            c += dc
            if abs(dc) < 1e-13 * max(1.0, abs(c)) or abs(r) < 1e-3 * ROOT_TOL * (1 + vmax):
                r, vmax = _shoot_vT(prob, c)
                if abs(r) <= ROOT_TOL * (1 + vmax) and c > 0:
                    return make_solution(prob.shoot((c, 0.0)), prob)
                break
    except IntegrationError:
        pass
    return refine_neumann(prob, c_guess, radius)


@dataclass
class _Corrected:
    y: np.ndarray
    iterations: int


def trace_branch(problem: Problem, param_name: str, start: tuple[float, Solution],
                 p_range: tuple[float, float], step: float = 0.02, *, direction: int = -1,
                 sup_ceiling: float = 50.0, max_points: int = 2000) -> Branch:
    """Follow the Neumann branch through ``start`` until it leaves ``p_range``.

    Arclength is measured in (param / (p_max - p_min), u0). The step halves on
    corrector failure (down to step/64) and doubles after five easy steps
    (up to 4 step). Tracing also stops when sup|u| exceeds ``sup_ceiling``.
    """
    if param_name not in PARAMS:
        raise ValueError(f"unknown continuation parameter {param_name!r}")
    if step <= 0:
        raise ValueError("step must be positive")
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    p_min, p_max = p_range
    if not p_min < p_max:
        raise ValueError("empty parameter range")
    scale = p_max - p_min
    p0, sol0 = start
    base = problem_at(problem, param_name, p0)

    def F(y):
        prob = problem_at(problem, param_name, y[0] * scale)
        return _shoot_vT(prob, y[1])

    def in_range(p):
        return p_min - 1e-12 * scale <= p <= p_max + 1e-12 * scale

    points = [BranchPoint.from_solution(p0, sol0)]
    branch = Branch(base, param_name, points, direction, scale)

    # initial secant from a natural-parameter step
    y_prev = np.array([p0 / scale, sol0.u0])
    second = None
    for frac in (0.5, 0.125, 0.03125):
        p1 = p0 + direction * frac * step * scale
        if not in_range(p1) or (param_name == "lam" and p1 <= 0):
            continue
        second = solve_at(problem, param_name, p1, sol0.u0)
        if second is not None:
            break
    if second is None:
        branch.stop_reason = "could not take the first step"
        return branch
    y_cur = np.array([p1 / scale, second.u0])
    points.append(BranchPoint.from_solution(p1, second, float(np.linalg.norm(y_cur - y_prev))))

    ds = step
    easy = 0
    while len(points) < max_points:
        tangent = y_cur - y_prev
        tangent /= np.linalg.norm(tangent)
        y_pred = y_cur + ds * tangent
        if not in_range(y_pred[0] * scale):
            # land exactly on the range boundary
            p_end = p_max if y_pred[0] * scale > p_max else p_min
            sol = solve_at(problem, param_name, p_end,
                           y_cur[1] + (p_end / scale - y_cur[0]) / tangent[0] * tangent[1]
                           if tangent[0] else y_cur[1])
            if sol is not None:
                d = float(np.hypot(p_end / scale - y_cur[0], sol.u0 - y_cur[1]))
                if d <= 1.5 * max(ds, step):
                    points.append(BranchPoint.from_solution(p_end, sol, d))
                    branch.stop_reason = "left parameter range"
                    break
            if ds > step / 64:
                ds *= 0.5
                easy = 0
                continue
            branch.stop_reason = "left parameter range"
            break
        corr = _correct(F, y_pred, tangent, ds, problem, param_name, scale)
        if corr is None or np.linalg.norm(corr.y - y_cur) > 1.5 * ds:
            if ds / 2 < step / 64:
                branch.stop_reason = "corrector failed at minimum step"
                break
            ds *= 0.5
            easy = 0
            continue
        y_new = corr.y
        p_new = y_new[0] * scale
        prob = problem_at(problem, param_name, p_new)
        sol = make_solution(prob.shoot((y_new[1], 0.0)), prob)
        points.append(BranchPoint.from_solution(p_new, sol, ds))
        y_prev, y_cur = y_cur, y_new
        if sol.sup_norm > sup_ceiling:
            branch.stop_reason = "sup-norm ceiling reached"
            break
        easy = easy + 1 if corr.iterations <= 3 else 0
        if easy >= 5 and ds < 4 * step:
            ds = min(2 * ds, 4 * step)
            easy = 0
    else:
        branch.stop_reason = "point limit reached"

    branch.folds = fold_indices(branch.params)
    return branch


def _correct(F, y_pred, tangent, ds, problem, name, scale, max_iter=8) -> _Corrected | None:
    y = y_pred.copy()
    for it in range(1, max_iter + 1):
        if name == "lam" and y[0] <= 0:
            return None
        if y[1] <= 0:
            return None
        try:
            r, vmax = F(y)
            J = np.empty((2, 2))
            for j in range(2):
                h = 1e-7 * max(1.0, abs(y[j]))
                yp = y.copy()
                yp[j] += h
                J[0, j] = (F(yp)[0] - r) / h
        except (IntegrationError, ValueError, OverflowError):
            return None
        J[1] = tangent
        G = np.array([r, tangent @ (y - y_pred)])
        dy = np.linalg.lstsq(J, -G, rcond=None)[0]
        if not np.all(np.isfinite(dy)) or np.linalg.norm(dy) > ds:
            return None
        y = y + dy
        if np.linalg.norm(dy) < 1e-11 * (1 + np.linalg.norm(y)) and abs(r) <= ROOT_TOL * (1 + vmax):
            return _Corrected(y, it)
        if abs(r) <= 1e-3 * ROOT_TOL * (1 + vmax) and np.linalg.norm(dy) < 1e-9:
            return _Corrected(y, it)
    try:
        r, vmax = F(y)
    except (IntegrationError, ValueError, OverflowError):
        return None
    return _Corrected(y, max_iter) if abs(r) <= ROOT_TOL * (1 + vmax) else None


def fold_indices(params: Sequence[float]) -> list[int]:
    """Interior indices where the parameter turns back."""
    p = np.asarray(params, dtype=float)
    if len(p) < 3:
        return []
    d = np.diff(p)
    out = []
    for k in range(1, len(d)):
        if d[k - 1] * d[k] < 0:
            out.append(k)
    return out


def detect_folds(b: Branch | tuple[Sequence[float], Sequence[float]]) -> list[tuple[float, float]]:
    """Fold locations (param, u0), each refined by the vertex of param as a quadratic in u0."""
    if isinstance(b, Branch):
        ps, cs = b.params, b.u0s
    else:
        ps, cs = (np.asarray(x, dtype=float) for x in b)
    out = []
    for k in fold_indices(ps):
        x = cs[k - 1:k + 2]
        y = ps[k - 1:k + 2]
        a2, a1, a0 = np.polyfit(x, y, 2)
        if a2 == 0:
            out.append((float(ps[k]), float(cs[k])))
            continue
        xv = -a1 / (2 * a2)
        if not min(x) - 1e-12 <= xv <= max(x) + 1e-12:
            xv = float(cs[k])
        out.append((float(np.polyval([a2, a1, a0], xv)), float(xv)))
    return out


@dataclass(frozen=True)
class BlowupRow:
    lam: float
    u0: float
    sup_norm: float


def blowup_probe(problem: Problem, lambdas: Iterable[float], start: Solution | None = None,
                 scan: tuple[float, float, int] | None = None) -> tuple[list[BlowupRow], str]:
    """Follow the positive Neumann solution along a decreasing lam sequence.

    Each value is seeded by extrapolating u0 linearly in log(lam) from the two
    previous values. Returns the table and a truncation note (empty when complete).
    """
    lambdas = [float(x) for x in lambdas]
    if any(x <= 0 for x in lambdas):
        raise ValueError("lam values must be positive")
    if any(b > a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lam sequence must be nonincreasing")
    rows: list[BlowupRow] = []
    if not lambdas:
        return rows, ""
    if start is None:
        found = solve_neumann(problem.with_(lam=lambdas[0]), scan or (1e-3, 10.0 + problem.T, 1000))
        if not found:
            return rows, f"no positive solution at lam={lambdas[0]}"
        start = found[0]
    rows.append(BlowupRow(lambdas[0], start.u0, start.sup_norm))
    for lam in lambdas[1:]:
        if len(rows) >= 2 and rows[-1].lam != rows[-2].lam:
            l1, l2 = math.log(rows[-2].lam), math.log(rows[-1].lam)
            slope = (rows[-1].u0 - rows[-2].u0) / (l2 - l1)
            guess = rows[-1].u0 + slope * (math.log(lam) - l2)
        else:
            guess = rows[-1].u0
        sol = _follow(problem, lam, rows[-1], guess)
        if sol is None:
            return rows, f"lost the branch at lam={lam}"
        rows.append(BlowupRow(lam, sol.u0, sol.sup_norm))
    return rows, ""


def _follow(problem: Problem, lam: float, last: BlowupRow, guess: float) -> Solution | None:
    if lam == last.lam:
        return solve_at(problem, "lam", lam, last.u0)
    sol = solve_at(problem, "lam", lam, guess, radius=max(0.05, abs(guess - last.u0)))
    if sol is not None:
        return sol
    # many decades in one jump: walk geometrically
    n = max(2, int(math.ceil(abs(math.log10(last.lam / lam)) * 4)))
    c = last.u0
    for k in range(1, n + 1):
        mid = last.lam * (lam / last.lam) ** (k / n)
        s = solve_at(problem, "lam", mid, c, radius=0.2)
        if s is None:
            return None
        c = s.u0
    return s
