"""Sign-changing weight functions a(t) on [0, T] and the constants derived from them."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

# grid density for window minimisation and sign scans of smooth pieces
WINDOW_GRID = 4096
QUAD_EPSREL = 1e-12


class WeightError(ValueError):
    """Raised for malformed weights or queries outside their domain."""


@dataclass(frozen=True)
class Piece:
    """One piece of a weight: constant ``value`` or a bounded callable ``fn``."""

    t_start: float
    t_end: float
    value: float | None = None
    fn: Callable[[float], float] | None = field(default=None, compare=False)

    @property
    def kind(self) -> str:
        return "constant" if self.fn is None else "smooth"

    def __call__(self, t: float) -> float:
        if self.fn is None:
            return self.value
        return float(self.fn(t))

    def integral(self, t0: float, t1: float) -> float:
        """Integral of the piece over [t0, t1] (clipped to the piece)."""
        t0 = max(t0, self.t_start)
        t1 = min(t1, self.t_end)
        if t1 <= t0:
            return 0.0
        if self.fn is None:
            return self.value * (t1 - t0)
        val, _ = integrate.quad(self.fn, t0, t1, epsabs=1e-13 * (t1 - t0), epsrel=QUAD_EPSREL, limit=200)
        return val


@dataclass(frozen=True)
class SignPartition:
    """Alternating decomposition of [0, T] into positivity and nonpositivity intervals.

    ``positivity_intervals[i]`` is ``(sigma_i, tau_i)`` with ``a > 0`` a.e. inside;
    ``negativity_intervals`` lists the nondegenerate stretches where ``a <= 0``
    (a leading stretch ``[0, sigma_1]`` and trailing ``[tau_m, T]`` included when present).
    """

    positivity_intervals: tuple[tuple[float, float], ...]
    negativity_intervals: tuple[tuple[float, float], ...]
    period: float

    @property
    def m(self) -> int:
        return len(self.positivity_intervals)

    def points(self) -> list[float]:
        pts = {0.0, self.period}
        for s, t in self.positivity_intervals:
            pts.update((s, t))
        return sorted(pts)

    def is_positive(self, t: float) -> bool:
        return any(s <= t < e for s, e in self.positivity_intervals)


@dataclass(frozen=True)
class WeightFunction:
    """Piecewise weight on [0, T]. Pieces tile the interval in order."""

    period_T: float
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if not (self.period_T > 0 and math.isfinite(self.period_T)):
            raise WeightError("T must be a positive finite number")
        if not self.pieces:
            raise WeightError("weight needs at least one piece")
        t = 0.0
        for k, pc in enumerate(self.pieces):
            if abs(pc.t_start - t) > 1e-12 * self.period_T:
                raise WeightError(f"piece {k} starts at {pc.t_start}, expected {t}")
            if not pc.t_start < pc.t_end:
                raise WeightError(f"piece {k} has t_start >= t_end")
            if pc.fn is None and not math.isfinite(pc.value):
                raise WeightError(f"piece {k} has a non-finite value")
            t = pc.t_end
        if abs(t - self.period_T) > 1e-12 * self.period_T:
            raise WeightError("pieces do not reach T")
        object.__setattr__(self, "_starts", [pc.t_start for pc in self.pieces])
        cum = [0.0]
        for pc in self.pieces:
            cum.append(cum[-1] + pc.integral(pc.t_start, pc.t_end))
        object.__setattr__(self, "_cumulative", cum)

    # -- evaluation -------------------------------------------------------

    @property
    def breakpoints(self) -> list[float]:
        """Interior piece boundaries."""
        return [pc.t_start for pc in self.pieces[1:]]

    @property
    def is_step(self) -> bool:
        return all(pc.fn is None for pc in self.pieces)

    def piece_index(self, t: float) -> int:
        k = bisect.bisect_right(self._starts, t) - 1
        return min(max(k, 0), len(self.pieces) - 1)

    def __call__(self, t: float) -> float:
        return self.pieces[self.piece_index(t)](t)

    def periodic(self, t: float) -> float:
        """Value of the T-periodic extension."""
        return self(t - math.floor(t / self.period_T) * self.period_T)

    def antiderivative(self, t: float) -> float:
        """A(t) = integral of a over [0, t], for t in [0, T]."""
        t = min(max(t, 0.0), self.period_T)
        k = self.piece_index(t)
        pc = self.pieces[k]
        return self._cumulative[k] + pc.integral(pc.t_start, t)

    def integral(self, t0: float, t1: float) -> float:
        return self.antiderivative(t1) - self.antiderivative(t0)

    # -- derived weights --------------------------------------------------

    def scaled(self, factor: float) -> "WeightFunction":
        pieces = []
        for pc in self.pieces:
            if pc.fn is None:
                pieces.append(Piece(pc.t_start, pc.t_end, value=factor * pc.value))
            else:
                f = pc.fn
                pieces.append(Piece(pc.t_start, pc.t_end, fn=lambda t, f=f: factor * f(t)))
        return WeightFunction(self.period_T, tuple(pieces))

    def shifted(self, shift: float) -> "WeightFunction":
        """Weight t -> a((t + shift) mod T), again on [0, T]."""
        T = self.period_T
        shift = shift % T
        if shift == 0.0:
            return self
        pieces = []
        for lo, hi, offset in ((shift, T, -shift), (0.0, shift, T - shift)):
            for pc in self.pieces:
                a, b = max(pc.t_start, lo), min(pc.t_end, hi)
                if b - a <= 1e-14 * T:
                    continue
                if pc.fn is None:
                    pieces.append(Piece(a + offset, b + offset, value=pc.value))
                else:
                    f = pc.fn
                    pieces.append(Piece(a + offset, b + offset,
                                        fn=lambda t, f=f, o=offset: f(t - o)))
        # snap ends to remove rounding gaps
        fixed = []
        t = 0.0
        for k, pc in enumerate(pieces):
            end = T if k == len(pieces) - 1 else pc.t_end
            fixed.append(Piece(t, end, value=pc.value, fn=pc.fn))
            t = end
        return WeightFunction(T, tuple(fixed))

    def mirrored(self) -> "WeightFunction":
        """Weight on [0, 2T] equal to a(t) on [0, T] and a(2T - t) on [T, 2T]."""
        T = self.period_T
        pieces = list(self.pieces)
        for pc in reversed(self.pieces):
            if pc.fn is None:
                pieces.append(Piece(2 * T - pc.t_end, 2 * T - pc.t_start, value=pc.value))
            else:
                f = pc.fn
                pieces.append(Piece(2 * T - pc.t_end, 2 * T - pc.t_start,
                                    fn=lambda t, f=f: f(2 * T - t)))
        return WeightFunction(2 * T, tuple(pieces))


# -- constructors ------------------------------------------------------------

def build_step_weight(breaks: Sequence[float], values: Sequence[float], T: float) -> WeightFunction:
    """Piecewise-constant weight: ``values[k]`` on ``[breaks[k-1], breaks[k])``."""
    breaks = [float(b) for b in breaks]
    values = [float(v) for v in values]
    if not values:
        raise WeightError("values must not be empty")
    if len(values) != len(breaks) + 1:
        raise WeightError(f"expected {len(breaks) + 1} values for {len(breaks)} breaks, got {len(values)}")
    edges = [0.0, *breaks, float(T)]
    for lo, hi in zip(edges, edges[1:]):
        if not lo < hi:
            raise WeightError("breaks must be strictly increasing inside (0, T)")
    return WeightFunction(float(T), tuple(Piece(lo, hi, value=v)
                                          for lo, hi, v in zip(edges, edges[1:], values)))


def build_smooth_weight(fn: Callable[[float], float], T: float,
                        breaks: Sequence[float] = ()) -> WeightFunction:
    """Weight given by a bounded callable, optionally split at ``breaks``."""
    edges = [0.0, *[float(b) for b in breaks], float(T)]
    for lo, hi in zip(edges, edges[1:]):
        if not lo < hi:
            raise WeightError("breaks must be strictly increasing inside (0, T)")
    return WeightFunction(float(T), tuple(Piece(lo, hi, fn=fn) for lo, hi in zip(edges, edges[1:])))


def build_sampled_weight(ts: Sequence[float], values: Sequence[float]) -> WeightFunction:
    """Weight from samples (t_k, a_k), linearly interpolated; t_0 must be 0 and t_N = T."""
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(values, dtype=float)
    if ts.ndim != 1 or ts.shape != vs.shape or ts.size < 2:
        raise WeightError("need at least two (t, a) samples")
    if np.any(np.diff(ts) <= 0):
        raise WeightError("sample times must be strictly increasing")
    if ts[0] != 0.0:
        raise WeightError("sample times must start at 0")
    if not np.all(np.isfinite(vs)):
        raise WeightError("sample values must be finite")
    tl, vl = ts.tolist(), vs.tolist()

    def fn(t, tl=tl, vl=vl):
        k = min(max(bisect.bisect_right(tl, t) - 1, 0), len(tl) - 2)
        w = (t - tl[k]) / (tl[k + 1] - tl[k])
        return vl[k] + w * (vl[k + 1] - vl[k])

    return build_smooth_weight(fn, float(ts[-1]))


def load_sampled_weight(path) -> WeightFunction:
    """Read a two-column text file ``t a(t)`` (whitespace or comma separated)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise WeightError(f"{path}: expected two columns, got {line!r}")
            rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise WeightError(f"{path}: no samples")
    ts, vs = zip(*rows)
    return build_sampled_weight(ts, vs)


# -- sign structure --------------------------------------------------------------

def _sign_segments(w: WeightFunction) -> list[tuple[float, float, bool]]:
    """(start, end, positive) segments with constant sign class."""
    cached = w.__dict__.get("_segments")
    if cached is None:
        cached = _compute_sign_segments(w)
        object.__setattr__(w, "_segments", cached)
    return cached


def _compute_sign_segments(w: WeightFunction) -> list[tuple[float, float, bool]]:
    segs: list[tuple[float, float, bool]] = []
    for pc in w.pieces:
        if pc.fn is None:
            segs.append((pc.t_start, pc.t_end, pc.value > 0))
            continue
        ts = np.linspace(pc.t_start, pc.t_end, WINDOW_GRID + 1)
        vals = np.array([pc.fn(t) for t in ts])
        cuts = [pc.t_start]
        for k in range(WINDOW_GRID):
            if vals[k] == 0.0 or vals[k] * vals[k + 1] >= 0:
                continue
            cuts.append(optimize.brentq(pc.fn, ts[k], ts[k + 1], xtol=1e-14))
        zero_runs = np.flatnonzero(vals == 0.0)
        for k in zero_runs:
            if 0 < k < WINDOW_GRID:
                cuts.append(ts[k])
        cuts = sorted(set(cuts)) + [pc.t_end]
        for lo, hi in zip(cuts, cuts[1:]):
            if hi - lo <= 0:
                continue
            mid = np.linspace(lo, hi, 7)[1:-1]
            segs.append((lo, hi, max(pc.fn(t) for t in mid) > 0))
    merged: list[list] = []
    for lo, hi, pos in segs:
        if merged and merged[-1][2] == pos:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi, pos])
    return [tuple(s) for s in merged]


def sign_partition(w: WeightFunction) -> SignPartition:
    """Positivity/nonpositivity intervals of ``w``; zero stretches count as nonpositive."""
    segs = _sign_segments(w)
    pos = tuple((lo, hi) for lo, hi, p in segs if p)
    neg = tuple((lo, hi) for lo, hi, p in segs if not p)
    if not pos:
        raise WeightError("no positivity interval")
    return SignPartition(pos, neg, w.period_T)


def segment_points(w: WeightFunction) -> list[float]:
    """All times where the vector field may be non-smooth: piece ends and sign changes."""
    pts = {0.0, w.period_T, *w.breakpoints}
    for lo, hi, _ in _sign_segments(w):
        pts.update((lo, hi))
    return sorted(pts)


def normalize_periodic(w: WeightFunction) -> tuple[WeightFunction, float]:
    """Time-shift so the weight is positive right after 0 and nonpositive right before T.

    Returns the shifted weight and the shift ``s`` (new weight is ``a((t + s) mod T)``).
    """
    segs = _sign_segments(w)
    if all(p for _, _, p in segs):
        raise WeightError("weight has no nonpositivity interval; periodic normalisation impossible")
    if not any(p for _, _, p in segs):
        raise WeightError("no positivity interval")
    if segs[0][2] and not segs[-1][2]:
        return w, 0.0
    # first positive segment that is preceded by a nonpositive one
    for k in range(1, len(segs)):
        if segs[k][2] and not segs[k - 1][2]:
            shift = segs[k][0]
            return w.shifted(shift), shift
    # positive only at the very end and wrapping into the start
    shift = segs[-1][0]
    return w.shifted(shift), shift


# -- integral constants ---------------------------------------------------------

def mean_value(w: WeightFunction) -> float:
    """Integral of a over [0, T]."""
    return w.antiderivative(w.period_T)


def l1_norm(w: WeightFunction, t0: float = 0.0, t1: float | None = None) -> float:
    """Integral of |a| over [t0, t1]."""
    t1 = w.period_T if t1 is None else t1
    total = 0.0
    for lo, hi, _ in _sign_segments(w):
        a, b = max(lo, t0), min(hi, t1)
        if b > a:
            total += abs(w.integral(a, b))
    return total


_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def _window_table(w: WeightFunction, right: np.ndarray, width: float) -> np.ndarray:
    """A(t) - A(t - width) at every ``right`` end, from one Gauss-Legendre antiderivative table."""
    nodes = np.union1d(np.union1d(right, right - width), segment_points(w))
    nodes = nodes[(nodes >= right[0] - width) & (nodes <= right[-1])]
    lo, hi = nodes[:-1], nodes[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    # evaluate each node on the piece its cell belongs to, so jumps stay at cell edges
    vals = np.empty_like(pts)
    for k, (m, row) in enumerate(zip(mid, pts)):
        pc = w.pieces[w.piece_index(m)]
        vals[k] = [pc(x) for x in row]
    cells = half * (vals @ _GL_W)
    A = np.concatenate([[0.0], np.cumsum(cells)])
    return np.interp(right, nodes, A) - np.interp(right - width, nodes, A)


def _min_window(w: WeightFunction, lo: float, hi: float, width: float) -> float:
    """min over t in [lo + width, hi] of A(t) - A(t - width)."""
    if width <= 0.0:
        return 0.0
    a, b = lo + width, hi
    if b - a <= 1e-15 * max(1.0, abs(hi)):
        return w.integral(lo, hi)

    def diff(t):
        return w.antiderivative(t) - w.antiderivative(t - width)

    grid = np.linspace(a, b, WINDOW_GRID + 1)
    # kinks of the window integral sit where either end crosses a breakpoint
    extra = []
    for bp in segment_points(w):
        for t in (bp, bp + width):
            if a < t < b:
                extra.append(t)
    ts = np.union1d(grid, extra)
    if w.is_step:
        vals = np.array([diff(t) for t in ts])
    else:
        vals = _window_table(w, ts, width)
    k = int(np.argmin(vals))
    best = vals[k]
    if not w.is_step:
        best = diff(ts[k])
        lo_b = ts[max(k - 1, 0)]
        hi_b = ts[min(k + 1, len(ts) - 1)]
        if hi_b > lo_b:
            res = optimize.minimize_scalar(diff, bounds=(lo_b, hi_b), method="bounded",
                                           options={"xatol": 1e-12})
            if res.fun < best:
                best = res.fun
    return float(best)


def _positivity(w: WeightFunction, i: int, part: SignPartition | None) -> tuple[float, float]:
    part = part or sign_partition(w)
    if not 1 <= i <= part.m:
        raise WeightError(f"positivity interval index {i} out of range 1..{part.m}")
    return part.positivity_intervals[i - 1]


def window_min_l1(w: WeightFunction, i: int, part: SignPartition | None = None) -> float:
    """Smallest integral of a over subwindows of length |I_i|/4 inside the i-th positivity interval (1-based)."""
    s, t = _positivity(w, i, part)
    return _min_window(w, s, t, (t - s) / 4.0)


def gamma(w: WeightFunction, i: int, delta: float, part: SignPartition | None = None) -> float:
    """Smallest integral of a over windows of length ``delta`` inside the i-th positivity interval."""
    s, t = _positivity(w, i, part)
    cap = (t - s) / 4.0
    if delta < 0 or delta > cap * (1 + 1e-12):
        raise WeightError(f"delta={delta} outside [0, {cap}]")
    return _min_window(w, s, t, min(delta, cap))


def neg_sup_norm(w: WeightFunction) -> float:
    """Essential supremum of the negative part max(-a, 0)."""
    worst = 0.0
    for pc in w.pieces:
        if pc.fn is None:
            worst = max(worst, -pc.value)
            continue
        ts = np.linspace(pc.t_start, pc.t_end, WINDOW_GRID + 1)
        vals = np.array([pc.fn(t) for t in ts])
        k = int(np.argmin(vals))
        best = -vals[k]
        lo_b, hi_b = ts[max(k - 1, 0)], ts[min(k + 1, WINDOW_GRID)]
        res = optimize.minimize_scalar(pc.fn, bounds=(lo_b, hi_b), method="bounded",
                                       options={"xatol": 1e-12})
        worst = max(worst, best, -float(res.fun))
    return float(max(worst, 0.0))


def positive_indicator_l1(w: WeightFunction) -> float:
    """Measure of the union of positivity intervals."""
    return sum(t - s for s, t in sign_partition(w).positivity_intervals)
