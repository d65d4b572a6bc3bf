"""Phase-plane integration of (phi(u'))' + theta [lam a(t) g(u) + alpha w(t)] = 0.

With v = phi(u') = u'/sqrt(1 - u'^2) the equation becomes the smooth system

    u' = v / sqrt(1 + v^2),    v' = -theta [lam a(t) g(u) + alpha w(t)],

so the slope bound |u'| < 1 holds by construction. Integration uses the
Dormand-Prince 5(4) pair with its 4th order continuous extension; steps never
cross a point where a(t) or w(t) jumps.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .nonlinearity import Nonlinearity, eval_G
from .weight import WeightFunction, segment_points, sign_partition

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
EXTENSIONS = ("negative_part", "zero", "natural")


class IntegrationError(RuntimeError):
    pass


class StiffnessError(IntegrationError):
    """Step size fell below the floor."""

    def __init__(self, t: float, h: float):
        super().__init__(f"step size {h:.3e} underflow at t={t:.12g}")
        self.t = t
        self.h = h


class BlowUpError(IntegrationError):
    """State became non-finite; ``t_last`` is the last time with a finite state."""

    def __init__(self, t_last: float, detail: str = ""):
        super().__init__(f"solution blew up after t={t_last:.12g}" + (f" ({detail})" if detail else ""))
        self.t_last = t_last


_BELOW_ONE = math.nextafter(1.0, 0.0)
_RMS = math.sqrt(0.5)


def phi(s: float) -> float:
    """Minkowski curvature map s / sqrt(1 - s^2) on (-1, 1)."""
    if not -1.0 < s < 1.0:
        raise ValueError(f"phi is defined on (-1, 1), got {s}")
    return s / math.sqrt((1.0 - s) * (1.0 + s))


def phi_inv(v: float) -> float:
    """Inverse of ``phi``: v / sqrt(1 + v^2), always in (-1, 1) for finite v.

    For |v| above ~1e8 the quotient rounds to 1.0; it is clamped to the largest
    double below 1 so the slope bound stays strict.
    """
    s = v / math.hypot(1.0, v)
    return s if abs(s) < 1.0 else math.copysign(_BELOW_ONE, s)


class PhaseState(NamedTuple):
    u: float
    v: float

    @property
    def slope(self) -> float:
        return phi_inv(self.v)


@dataclass(frozen=True)
class HomotopyParams:
    """theta scales the whole field, alpha the forcing, lam the weight term."""

    theta: float = 1.0
    alpha: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.lam > 0:
            raise ValueError("lam must be positive")


def energy(s: PhaseState, n: Nonlinearity, a_const: float, lam: float = 1.0) -> float:
    """First integral sqrt(1 + v^2) + lam a G(u), conserved where a is constant and alpha = 0 (u >= 0)."""
    return math.hypot(1.0, s.v) + lam * a_const * eval_G(n, max(s.u, 0.0))


# Dormand-Prince coefficients
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40
# continuous extension, rows = stages, columns = powers x, x^2, x^3, x^4
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class Trajectory:
    """Accepted nodes of an integration plus the stage data for dense output.

    ``t`` is monotone (increasing for forward, decreasing for backward runs).
    """

    t: list[float]
    u: list[float]
    v: list[float]
    stages: list[tuple] | None = None
    stats: dict = field(default_factory=dict)
    _coef: np.ndarray | None = field(default=None, repr=False)

    @property
    def t0(self) -> float:
        return self.t[0]

    @property
    def t1(self) -> float:
        return self.t[-1]

    @property
    def start(self) -> PhaseState:
        return PhaseState(self.u[0], self.v[0])

    @property
    def end(self) -> PhaseState:
        return PhaseState(self.u[-1], self.v[-1])

    @property
    def forward(self) -> bool:
        return self.t[-1] >= self.t[0]

    @property
    def has_dense(self) -> bool:
        return self.stages is not None

    def _coefficients(self) -> np.ndarray:
        if self._coef is None:
            K = np.asarray(self.stages, dtype=float).reshape(len(self.stages), 7, 2)
            # (steps, 4 powers, 2 components)
            self._coef = np.einsum("sij,ik->skj", K, _P)
        return self._coef

    def _locate(self, t: float) -> int:
        ts = self.t if self.forward else [-x for x in self.t]
        x = t if self.forward else -t
        k = bisect.bisect_right(ts, x) - 1
        return min(max(k, 0), len(self.t) - 2)

    def __call__(self, t: float) -> PhaseState:
        """Dense-output state at time t."""
        if not self.has_dense:
            raise IntegrationError("trajectory was integrated without dense output")
        lo, hi = min(self.t0, self.t1), max(self.t0, self.t1)
        if not lo - 1e-12 * max(1.0, abs(hi)) <= t <= hi + 1e-12 * max(1.0, abs(hi)):
            raise ValueError(f"t={t} outside trajectory span [{lo}, {hi}]")
        if len(self.t) == 1:
            return PhaseState(self.u[0], self.v[0])
        k = self._locate(t)
        h = self.t[k + 1] - self.t[k]
        x = (t - self.t[k]) / h
        q = self._coefficients()[k]
        px = np.array([x, x * x, x ** 3, x ** 4])
        du, dv = h * (px @ q)
        return PhaseState(float(self.u[k] + du), float(self.v[k] + dv))

    def sample(self, ts: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised dense output: arrays (u, v) at the given times."""
        ts = np.asarray(ts, dtype=float)
        if len(self.t) == 1:
            return np.full(ts.shape, self.u[0]), np.full(ts.shape, self.v[0])
        q = self._coefficients()
        tn = np.asarray(self.t)
        sgn = 1.0 if self.forward else -1.0
        k = np.clip(np.searchsorted(sgn * tn, sgn * ts, side="right") - 1, 0, len(tn) - 2)
        h = tn[k + 1] - tn[k]
        x = (ts - tn[k]) / h
        px = np.stack([x, x * x, x ** 3, x ** 4], axis=-1)
        d = np.einsum("nk,nkj->nj", px, q[k]) * h[:, None]
        return np.asarray(self.u)[k] + d[:, 0], np.asarray(self.v)[k] + d[:, 1]

    def shifted(self, du: float) -> "Trajectory":
        """Copy with u offset by ``du`` (the v data untouched)."""
        stages = None if self.stages is None else list(self.stages)
        out = Trajectory(list(self.t), [x + du for x in self.u], list(self.v), stages, dict(self.stats))
        out._coef = self._coef
        return out

    def max_point(self) -> tuple[float, float]:
        """(t, u) at the maximum of u, refined inside the step with the dense output."""
        k = int(np.argmax(self.u))
        if not self.has_dense or len(self.t) < 2:
            return self.t[k], self.u[k]
        lo = self.t[max(k - 1, 0)]
        hi = self.t[min(k + 1, len(self.t) - 1)]
        ts = np.linspace(min(lo, hi), max(lo, hi), 65)
        us, _ = self.sample(ts)
        j = int(np.argmax(us))
        if us[j] > self.u[k]:
            return float(ts[j]), float(us[j])
        return self.t[k], self.u[k]

    def to_csv_rows(self, n: int) -> list[tuple[float, float, float, float]]:
        """Rows (t, u, u', v) on a uniform grid of n points."""
        ts = np.linspace(self.t0, self.t1, n)
        us, vs = self.sample(ts)
        return [(float(t), float(u), phi_inv(float(v)), float(v)) for t, u, v in zip(ts, us, vs)]

    @staticmethod
    def join(backward: "Trajectory", forward: "Trajectory") -> "Trajectory":
        """Glue a backward run and a forward run that share their initial point."""
        if backward.t[0] != forward.t[0]:
            raise ValueError("trajectories do not share a start time")
        t = backward.t[::-1] + forward.t[1:]
        u = backward.u[::-1] + forward.u[1:]
        v = backward.v[::-1] + forward.v[1:]
        coef = None
        if backward.has_dense and forward.has_dense and len(backward.t) > 1:
            rev = _reverse_coefficients(backward._coefficients()[::-1])
            coef = np.concatenate([rev, forward._coefficients()]) if len(forward.t) > 1 else rev
        elif forward.has_dense and len(backward.t) == 1:
            coef = forward._coefficients()
        stats = {key: backward.stats.get(key, 0) + forward.stats.get(key, 0)
                 for key in ("steps", "rejected", "rhs_evals")}
        stats["max_err"] = max(backward.stats.get("max_err", 0.0), forward.stats.get("max_err", 0.0))
        out = Trajectory(t, u, v, [] if coef is not None else None, stats)
        out._coef = coef
        return out


def _reverse_coefficients(q: np.ndarray) -> np.ndarray:
    # Step polynomial y = y_a + h sum_k Q_k x^k re-expressed from the other end:
    # y = y_b + (-h) sum_j Q'_j x'^j with x' = 1 - x, Q'_j = -(-1)^j sum_{k>=j} C(k, j) Q_k.
    out = np.zeros_like(q)
    for j in range(1, 5):
        acc = sum(math.comb(k, j) * q[:, k - 1] for k in range(j, 5))
        out[:, j - 1] = -((-1) ** j) * acc
    return out


ForcingSpec = str | Callable[[float], float] | None


def _segments(w: WeightFunction, t0: float, t1: float) -> list[tuple[float, float]]:
    """Split [t0, t1] (either orientation) at jump points of the periodically extended weight."""
    T = w.period_T
    base = segment_points(w)
    lo, hi = min(t0, t1), max(t0, t1)
    cuts = {lo, hi}
    k0, k1 = math.floor(lo / T), math.ceil(hi / T)
    for k in range(k0, k1 + 1):
        for p in base:
            x = k * T + p
            if lo < x < hi:
                cuts.add(x)
    cuts = sorted(cuts)
    # merge cut points closer than roundoff
    clean = [cuts[0]]
    for x in cuts[1:]:
        if x - clean[-1] > 1e-13 * max(1.0, abs(x)):
            clean.append(x)
        else:
            clean[-1] = x if x == hi else clean[-1]
    clean[-1] = hi
    segs = list(zip(clean, clean[1:]))
    if t1 < t0:
        segs = [(b, a) for a, b in reversed(segs)]
    return segs


def _make_rhs(w: WeightFunction, n: Nonlinearity, hp: HomotopyParams, forcing, t_mid: float,
              extension: str):
    T = w.period_T
    tm = t_mid - math.floor(t_mid / T) * T
    pc = w.pieces[w.piece_index(tm)]
    theta, lam, alpha = hp.theta, hp.lam, hp.alpha
    g = n.g
    hypot = math.hypot

    if forcing is None or alpha == 0.0:
        fw = 0.0
        forcing_fn = None
    elif callable(forcing):
        fw = 0.0
        forcing_fn = forcing
    else:
        fw = 1.0 if forcing_indicator(w)(tm) else 0.0
        forcing_fn = None
    cf = theta * alpha * fw

    if pc.fn is None and forcing_fn is None:
        ca = theta * lam * pc.value
        if extension == "negative_part":
            def rhs(t, u, v):
                if u >= 0.0:
                    return v / hypot(1.0, v), -(ca * g(u) + cf)
                return v / hypot(1.0, v), theta * u - cf
        elif extension == "zero":
            def rhs(t, u, v):
                return v / hypot(1.0, v), -(ca * g(u) + cf) if u > 0.0 else -cf
        else:
            def rhs(t, u, v):
                return v / hypot(1.0, v), -(ca * g(u) + cf)
        return rhs

    def a_of(t):
        return w.periodic(t)

    def f_of(t):
        if forcing_fn is None:
            return cf
        return theta * alpha * forcing_fn(t)

    def rhs(t, u, v):
        if u >= 0.0 or extension == "natural":
            src = theta * lam * a_of(t) * g(u)
        elif extension == "zero":
            src = 0.0
        else:
            src = -theta * u
        return v / hypot(1.0, v), -(src + f_of(t))

    return rhs


def forcing_indicator(w: WeightFunction) -> Callable[[float], float]:
    """Indicator of the union of positivity intervals, extended periodically."""
    part = sign_partition(w)
    T = w.period_T

    def ind(t: float) -> float:
        x = t - math.floor(t / T) * T
        return 1.0 if part.is_positive(x) else 0.0

    return ind


def integrate(w: WeightFunction, n: Nonlinearity, hp: HomotopyParams | None = None,
              forcing_w: ForcingSpec = "positive_indicator", s0: PhaseState | tuple = (0.0, 0.0),
              t_span: tuple[float, float] | None = None, tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL),
              *, dense: bool = True, max_step: float | None = None,
              extension: str = "negative_part") -> Trajectory:
    """Integrate the phase system from ``s0`` over ``t_span`` (default [0, T]).

    ``forcing_w`` is the alpha-forcing profile: the indicator of the positivity
    set by default, or any callable of t. ``extension`` fixes the field for u < 0:
    ``negative_part`` uses the source -u, ``zero`` switches g off, ``natural``
    evaluates g(u) as given.
    """
    hp = hp or HomotopyParams()
    if extension not in EXTENSIONS:
        raise ValueError(f"extension must be one of {EXTENSIONS}")
    rtol, atol = tol
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    t0, t1 = t_span if t_span is not None else (0.0, w.period_T)
    u, v = float(s0[0]), float(s0[1])
    if max_step is None:
        max_step = 0.1 * min(pc.t_end - pc.t_start for pc in w.pieces)
    span = abs(t1 - t0)
    h_floor = 1e-14 * max(span, 1e-300)

    ts, us, vs = [t0], [u], [v]
    stages: list | None = [] if dense else None
    nsteps = nrej = nev = 0
    max_err = 0.0
    if span == 0.0:
        return Trajectory(ts, us, vs, stages, {"steps": 0, "rejected": 0, "rhs_evals": 0, "max_err": 0.0})

    h_abs = None
    hypot, isfinite = math.hypot, math.isfinite
    for a_seg, b_seg in _segments(w, t0, t1):
        d = 1.0 if b_seg > a_seg else -1.0
        rhs = _make_rhs(w, n, hp, forcing_w, 0.5 * (a_seg + b_seg), extension)
        t = a_seg
        try:
            k1u, k1v = rhs(t, u, v)
        except OverflowError as exc:
            raise BlowUpError(t, str(exc)) from None
        nev += 1
        seg_len = abs(b_seg - a_seg)
        if h_abs is None:
            # Hairer-Wanner starting step
            su, sv = atol + rtol * abs(u), atol + rtol * abs(v)
            d0 = hypot(u / su, v / sv) * _RMS
            d1 = hypot(k1u / su, k1v / sv) * _RMS
            h_abs = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
            h_abs = max(min(h_abs, max_step, seg_len), h_floor)
            try:
                k2u, k2v = rhs(t + d * h_abs, u + d * h_abs * k1u, v + d * h_abs * k1v)
                nev += 1
                d2 = hypot((k2u - k1u) / su, (k2v - k1v) / sv) * _RMS / h_abs
                if max(d1, d2) <= 1e-15:
                    h1 = max(1e-6, h_abs * 1e-3)
                else:
                    h1 = (0.01 / max(d1, d2)) ** 0.2
                h_abs = min(100 * h_abs, h1, max_step, seg_len)
            except OverflowError:
                h_abs = min(h_abs, max_step, seg_len)
            # the estimate is only a guess; starting from zero momentum it can undershoot wildly
            h_abs = max(h_abs, min(1e6 * h_floor, max_step, seg_len))
        h_abs = min(h_abs, max_step)
        while d * (b_seg - t) > 0:
            last = False
            if h_abs >= abs(b_seg - t):
                h_abs = abs(b_seg - t)
                last = True
            if h_abs < h_floor and not last:
                raise StiffnessError(t, h_abs)
            h = d * h_abs
            try:
                k2u, k2v = rhs(t + _C2 * h, u + h * _A21 * k1u, v + h * _A21 * k1v)
                k3u, k3v = rhs(t + _C3 * h, u + h * (_A31 * k1u + _A32 * k2u),
                               v + h * (_A31 * k1v + _A32 * k2v))
                k4u, k4v = rhs(t + _C4 * h, u + h * (_A41 * k1u + _A42 * k2u + _A43 * k3u),
                               v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v))
                k5u, k5v = rhs(t + _C5 * h, u + h * (_A51 * k1u + _A52 * k2u + _A53 * k3u + _A54 * k4u),
                               v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v))
                k6u, k6v = rhs(t + h, u + h * (_A61 * k1u + _A62 * k2u + _A63 * k3u + _A64 * k4u + _A65 * k5u),
                               v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v))
                un = u + h * (_B1 * k1u + _B3 * k3u + _B4 * k4u + _B5 * k5u + _B6 * k6u)
                vn = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
                k7u, k7v = rhs(t + h, un, vn)
            except OverflowError as exc:
                if h_abs <= h_floor:
                    raise BlowUpError(t, str(exc)) from None
                h_abs *= 0.25
                nrej += 1
                continue
            nev += 6
            if not (isfinite(un) and isfinite(vn) and isfinite(k7v)):
                if h_abs <= h_floor:
                    raise BlowUpError(t, "non-finite state")
                h_abs *= 0.25
                nrej += 1
                continue
            eu = h * (_E1 * k1u + _E3 * k3u + _E4 * k4u + _E5 * k5u + _E6 * k6u + _E7 * k7u)
            ev = h * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
            su = atol + rtol * max(abs(u), abs(un))
            sv = atol + rtol * max(abs(v), abs(vn))
            err = hypot(eu / su, ev / sv) * _RMS
            if err <= 1.0:
                t = b_seg if last else t + h
                if stages is not None:
                    stages.append((k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v, k5u, k5v, k6u, k6v, k7u, k7v))
                u, v = un, vn
                k1u, k1v = k7u, k7v
                ts.append(t)
                us.append(u)
                vs.append(v)
                nsteps += 1
                max_err = max(max_err, err)
                fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                h_abs = min(h_abs * fac, max_step)
                if last:
                    # keep the size suggested before clipping to the segment end
                    h_abs = max(h_abs, h_floor)
            else:
                nrej += 1
                h_abs *= max(0.2, 0.9 * err ** -0.2)
                if h_abs < h_floor:
                    raise StiffnessError(t, h_abs)
    stats = {"steps": nsteps, "rejected": nrej, "rhs_evals": nev, "max_err": max_err}
    return Trajectory(ts, us, vs, stages, stats)
