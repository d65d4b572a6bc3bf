"""Data behind the three reference figures, with deltas against stored anchors."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .certificates import wedge_certificate
from .continuation import Branch, detect_folds, trace_branch
from .nonlinearity import make_builtin
from .phase_flow import PhaseState, Trajectory, phi_inv
from .shooting import Problem, solve_neumann
from .weight import build_step_weight, sign_partition

# Negative-part value of the step weight that each figure's stored data are consistent with.
DEFAULT_NEGATIVE = {1: -4.0, 2: -10.0, 3: -4.0}
FIG3_OFFSET = -2.0  # t on [0, 4] maps to t + FIG3_OFFSET on [-2, 2]
FIG3_FAMILY = tuple(round(0.493648 + 0.2 * k, 6) for k in range(11))


class FigureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Anchor:
    figure: int
    label: str
    x: float
    y: float


@dataclass(frozen=True)
class Comparison:
    label: str
    x: float
    reference: float
    computed: float

    @property
    def rel_error(self) -> float:
        return abs(self.computed - self.reference) / abs(self.reference)


@dataclass
class FigureResult:
    figure: int
    files: list[Path] = field(default_factory=list)
    comparisons: list[Comparison] = field(default_factory=list)
    notes: dict[str, str] = field(default_factory=dict)
    branch: Branch | None = None


def load_anchors(figure: int | None = None) -> list[Anchor]:
    text = resources.files("minkbvp").joinpath("data/anchors.csv").read_text(encoding="utf-8")
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    out = [Anchor(int(r["figure"]), r["label"], float(r["x"]), float(r["y"])) for r in rows]
    return [a for a in out if figure is None or a.figure == figure]


def fig1_problem(a_neg: float = DEFAULT_NEGATIVE[1], lam: float = 1.0) -> Problem:
    return Problem(build_step_weight([1.0], [1.0, a_neg], 2.0), make_builtin("exp_power", 2), lam=lam)


def fig2_problem(a_neg: float = DEFAULT_NEGATIVE[2], kappa: float = 1.0) -> Problem:
    return Problem(build_step_weight([1.0], [1.0, a_neg], 2.0), make_builtin("power_exp", 2, kappa))


def fig3_problem(a_neg: float = DEFAULT_NEGATIVE[3], extension: str = "zero") -> Problem:
    """Symmetric weight of [-2, 2] translated to [0, 4]."""
    w = build_step_weight([1.0, 3.0], [a_neg, 1.0, a_neg], 4.0)
    return Problem(w, make_builtin("exp_power", 2), extension=extension)


def cauchy_symmetric(problem: Problem, u0: float) -> Trajectory:
    """Trajectory through (u0, 0) at the centre of [0, T], integrated both ways."""
    mid = 0.5 * problem.T
    fwd = problem.shoot(PhaseState(u0, 0.0), (mid, problem.T))
    bwd = problem.shoot(PhaseState(u0, 0.0), (mid, 0.0))
    return Trajectory.join(bwd, fwd)


# -- writers ----------------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows, comments: list[str] = ()) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def branch_rows(b: Branch):
    folds = set(b.folds)
    for k, pt in enumerate(b.points):
        yield k, pt.param, pt.u0, pt.sup_norm, pt.bc_residual, int(k in folds)


BRANCH_HEADER = ["arclength_index", "param", "u0", "sup_norm", "bc_residual", "is_fold"]


def trajectory_rows(traj: Trajectory, n: int):
    return traj.to_csv_rows(n)


def _summary(res: FigureResult, out: Path) -> None:
    rows = [(c.label, c.x, c.reference, c.computed, c.rel_error) for c in res.comparisons]
    comments = [f"{k} = {v}" for k, v in sorted(res.notes.items())]
    res.files.append(write_csv(out / f"fig{res.figure}_summary.csv",
                               ["label", "x", "reference", "computed", "rel_error"], rows, comments))


# -- figures ----------------------------------------------------------------------

def figure1(out: Path, a_neg: float = DEFAULT_NEGATIVE[1], step: float = 0.02) -> FigureResult:
    prob = fig1_problem(a_neg, 3.0)
    start = solve_neumann(prob, (1e-3, 3.0, 600))
    if not start:
        raise FigureError("no positive Neumann solution at lam = 3")
    b = trace_branch(prob, "lam", (3.0, start[0]), (1e-4, 3.0), step, direction=-1)
    res = FigureResult(1, notes={"negative_weight": repr(a_neg), "stop_reason": b.stop_reason})
    res.files.append(write_csv(out / "fig1_branch.csv", BRANCH_HEADER, branch_rows(b)))
    for a in load_anchors(1):
        sol = b.solve_at(a.x)
        if sol is None:
            raise FigureError(f"could not correct the branch at lam = {a.x}")
        res.comparisons.append(Comparison(a.label, a.x, a.y, sol.u0))
    _summary(res, out)
    res.branch = b
    return res


def figure2(out: Path, a_neg: float = DEFAULT_NEGATIVE[2], step: float = 0.02) -> FigureResult:
    prob = fig2_problem(a_neg, 10.0)
    start = solve_neumann(prob, (1e-3, 10.0, 2000))
    if not start:
        raise FigureError("no positive Neumann solution at kappa = 10")
    b = trace_branch(prob, "kappa", (10.0, start[0]), (0.1, 50.0), step, direction=-1)
    folds = detect_folds(b)
    res = FigureResult(2, notes={"negative_weight": repr(a_neg), "stop_reason": b.stop_reason,
                                 "fold_count": str(len(folds))})
    res.files.append(write_csv(out / "fig2_branch.csv", BRANCH_HEADER, branch_rows(b)))
    res.files.append(write_csv(out / "fig2_folds.csv", ["param", "u0"], folds))
    for a in load_anchors(2):
        if a.label == "fold":
            if folds:
                k, c = min(folds, key=lambda f: abs(f[0] - a.x))
                res.comparisons.append(Comparison("fold_param", a.x, a.x, k))
                res.comparisons.append(Comparison("fold_u0", a.x, a.y, c))
            continue
        sols = sorted(b.solutions_at(a.x), key=lambda s: s.u0)
        if not sols:
            raise FigureError(f"branch does not cross kappa = {a.x}")
        sol = sols[0] if a.label == "lower" else sols[-1]
        res.comparisons.append(Comparison(a.label, a.x, a.y, sol.u0))
    _summary(res, out)
    res.branch = b
    return res


def figure3(out: Path, a_neg: float = DEFAULT_NEGATIVE[3], n_samples: int = 401,
            extension: str = "zero") -> FigureResult:
    prob = fig3_problem(a_neg, extension)
    part = sign_partition(prob.weight)
    res = FigureResult(3, notes={"negative_weight": repr(a_neg), "t_offset": repr(FIG3_OFFSET),
                                 "extension": extension})
    comments = [f"t_offset = {FIG3_OFFSET!r} (symmetric-domain time = t + t_offset)",
                f"negative_weight = {a_neg!r}"]
    family_rows = []
    red = None
    for k, u0 in enumerate(FIG3_FAMILY):
        traj = cauchy_symmetric(prob, u0)
        s_left, s_right = phi_inv(traj.v[0]), phi_inv(traj.v[-1])
        neumann = abs(s_left) < 1e-3 and abs(s_right) < 1e-3
        wedge = wedge_certificate(traj, part, 0.1)
        family_rows.append((k, u0, traj.u[0], traj.u[-1], s_left, s_right, float(min(traj.u)),
                            int(neumann), int(wedge.passed)))
        res.files.append(write_csv(out / f"fig3_member_{k:02d}.csv", ["t", "u", "uprime", "v"],
                                   trajectory_rows(traj, n_samples), comments + [f"u0 = {u0!r}"]))
        if neumann and (red is None or abs(u0 - 0.693648) < abs(red[0] - 0.693648)):
            red = (u0, traj)
    res.files.append(write_csv(out / "fig3_family.csv",
                               ["index", "u0", "u_left", "u_right", "slope_left", "slope_right",
                                "min_u", "is_neumann", "wedge_pass"], family_rows, comments))
    for a in load_anchors(3):
        if red is None:
            break
        t = a.x - FIG3_OFFSET
        res.comparisons.append(Comparison(a.label, a.x, a.y, red[1](t).u))
    res.notes["neumann_member"] = repr(red[0]) if red else "none"
    _summary(res, out)
    return res


def reproduce_figure(which: int, out_dir: str | Path, a_neg: float | None = None) -> FigureResult:
    out = Path(out_dir)
    fns = {1: figure1, 2: figure2, 3: figure3}
    if which not in fns:
        raise ValueError("figure must be 1, 2 or 3")
    return fns[which](out, DEFAULT_NEGATIVE[which] if a_neg is None else a_neg)
