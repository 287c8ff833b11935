"""Regularity-scale calculus on recorded or synthetic traces.

Every trace curve is treated as its piecewise-linear interpolant, and all
window suprema, integrals and crossings are computed exactly on that
interpolant (knot values plus window endpoints).  This makes each
definition below computable and lets independent brute-force oracles agree
with the fast paths to within one interpolation cell:

curvature scale
    F(t0) = sup { s > 0 : sup over [t0-s, t0] of (sup |Rm|)^2 <= 1/s },
    with the supremum treated as infinite once the window leaves the
    recorded domain, so F is capped at t0 - t_start.
Dini derivatives
    forward difference quotients over a geometric ladder of offsets,
    returning (liminf-estimate, limsup-estimate).
doubling statistics
    first-crossing segmentation of Q through successive doublings of its
    reference value, with the exact integral of P over each segment.
growth bound
    after normalizing at the earliest admissible anchor, checks
    log2(Q/Q0) - 1 < (1/eps0) * int P and reports the largest eps0 for
    which the bound holds trace-wide.
barrier check
    compares Q against 2 / sqrt(Q(t0)^-2 + (t - t0)) on the look-back
    window, exactly (the barrier is convex, so per-segment maxima of the
    linear interpolant against it are closed-form).
blowup rates
    running suprema of P*(T-t), O^a Q^(2-a) (T-t), Q sqrt(T-t) over the
    tail, a type-I boundedness flag for Q^2 (T-t), and the smallest grid
    exponent lam with Q*(T-t)^lam non-increasing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import SAMPLE_SCHEMA, DiagnosticsSample
from .errors import BadParams, DomainError

TERMINATIONS = ("completed", "stop_energy", "left_cone", "error")

BISECT_RTOL = 1e-10


@dataclass(frozen=True)
class Trace:
    """Time-ordered diagnostics samples plus run metadata."""

    samples: tuple
    t_start: float
    t_end: float
    termination: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")
        times = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if times and (times[0] < self.t_start - 1e-12
                      or times[-1] > self.t_end + 1e-12):
            raise ValueError("samples outside [t_start, t_end]")

    def series(self, name):
        """(times, values) arrays for one sample field; None becomes nan."""
        t = np.array([s.t for s in self.samples])
        y = np.array(
            [math.nan if getattr(s, name) is None else getattr(s, name)
             for s in self.samples]
        )
        return t, y

    def __len__(self):
        return len(self.samples)


class PiecewiseLinear:
    """Exact window algebra on a piecewise-linear curve."""

    def __init__(self, t, y):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.t.size < 2:
            raise DomainError("need at least two samples")
        if np.any(np.diff(self.t) <= 0):
            raise DomainError("knot times must be strictly increasing")

    def __call__(self, s):
        return np.interp(s, self.t, self.y)

    def window_max(self, a, b):
        """Exact maximum of the interpolant over [a, b] within the domain."""
        a = max(a, self.t[0])
        b = min(b, self.t[-1])
        if b < a:
            raise DomainError("empty window")
        lo = np.searchsorted(self.t, a, side="right")
        hi = np.searchsorted(self.t, b, side="left")
        best = max(float(self(a)), float(self(b)))
        if hi > lo:
            best = max(best, float(self.y[lo:hi].max()))
        return best

    def integral(self, a, b):
        """Exact trapezoid integral of the interpolant over [a, b]."""
        if b < a:
            raise DomainError("reversed integration window")
        a = max(a, self.t[0])
        b = min(b, self.t[-1])
        lo = np.searchsorted(self.t, a, side="right")
        hi = np.searchsorted(self.t, b, side="left")
        pts = np.concatenate(([a], self.t[lo:hi], [b]))
        vals = self(pts)
        return float(np.trapezoid(vals, pts))

    def first_crossing(self, level, after):
        """Earliest t >= after with value == level, or None.

        First-crossing tie-break: an exact knot hit counts, and within a
        segment the earlier linear crossing wins.
        """
        if after > self.t[-1]:
            return None
        start = float(self(after))
        if start == level:
            return after
        idx = np.searchsorted(self.t, after, side="right")
        prev_t, prev_y = after, start
        for j in range(idx, self.t.size):
            tj, yj = float(self.t[j]), float(self.y[j])
            if (prev_y - level) * (yj - level) <= 0.0 and prev_y != yj:
                frac = (level - prev_y) / (yj - prev_y)
                if 0.0 <= frac <= 1.0:
                    return prev_t + frac * (tj - prev_t)
            if yj == level:
                return tj
            prev_t, prev_y = tj, yj
        return None


def _curve(trace, name):
    t, y = trace.series(name)
    return PiecewiseLinear(t, y)


def curvature_scale(trace, t0, rtol=BISECT_RTOL):
    """Largest look-back s with sup of (sup |Rm|)^2 over [t0-s, t0] <= 1/s.

    The predicate is monotone in s (window maxima grow, 1/s falls), so
    bisection finds the threshold; the result is exact up to interpolation
    and the relative tolerance.  The recorded domain caps the value at
    t0 - t_start.
    """
    q = _curve(trace, "sup_curv")
    if t0 < q.t[0] - 1e-12 or t0 > q.t[-1] + 1e-12:
        raise DomainError(f"time {t0} outside the trace")
    t0 = min(max(t0, float(q.t[0])), float(q.t[-1]))
    s_max = t0 - float(q.t[0])
    if s_max <= 0.0:
        return 0.0
    g_all = q.window_max(q.t[0], t0)
    if g_all <= 0.0:
        return s_max

    def ok(s):
        m = q.window_max(t0 - s, t0)
        return m * m <= 1.0 / s

    if ok(s_max):
        return s_max
    lo = min(s_max, 1.0 / (g_all * g_all))
    if lo >= s_max:
        return s_max
    hi = s_max
    for _ in range(200):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def dini(trace, name, t):
    """Discrete lower/upper forward Dini estimates of one trace curve.

    The quotients are taken over a geometric ladder of forward offsets
    (1, 2, 4, 8 base spacings); the spread between min and max exposes
    oscillation a single difference would hide.
    """
    curve = _curve(trace, name)
    h = float(np.median(np.diff(curve.t)))
    offsets = [h, 2 * h, 4 * h, 8 * h]
    if t < curve.t[0] or t + offsets[-1] > curve.t[-1] + 1e-12:
        raise DomainError("Dini ladder leaves the trace domain")
    y0 = float(curve(t))
    quot = [(float(curve(t + e)) - y0) / e for e in offsets]
    return min(quot), max(quot)


@dataclass(frozen=True)
class DoublingSegment:
    t0: float
    t1: float
    p_integral: float


def doubling_stats(trace):
    """Doubling segments of sup |Rm| and the exact integral of the Hessian
    envelope over each.

    Within every maximal region of positive Q, thresholds 2^i * Q(region
    start) are located by first crossing; consecutive crossing times bound
    one doubling each.  Convergent traces produce the empty list.
    """
    tq, q = trace.series("sup_curv")
    p_curve = _curve(trace, "sup_hess_scalar")
    segments = []
    n = len(tq)
    if n < 2:
        return segments
    i = 0
    while i < n:
        if q[i] <= 0.0:
            i += 1
            continue
        j = i
        while j + 1 < n and q[j + 1] > 0.0:
            j += 1
        if j > i:
            region = PiecewiseLinear(tq[i:j + 1], q[i:j + 1])
            ref = float(q[i])
            cursor = float(tq[i])
            level = 2.0 * ref
            while True:
                hit = region.first_crossing(level, cursor)
                if hit is None:
                    break
                segments.append(
                    DoublingSegment(cursor, hit, p_curve.integral(cursor, hit))
                )
                cursor = hit
                level *= 2.0
        i = j + 1
    return segments


@dataclass(frozen=True)
class GrowthBound:
    anchor: float
    eps0_max: float
    eps0: "float | None"
    holds: "bool | None"


def growth_bound_check(trace, eps0=None, refine=8):
    """Doubling-exponent growth bound after internal normalization.

    The anchor is the earliest sample time t0 whose look-back window of
    length Q(t0)^-2 lies inside the trace with sup Q <= 2 Q(t0) over it
    (this is the unit-normalized hypothesis, transported back through the
    scaling covariance of Q and t, under which int P dt is invariant).
    For eval times after the anchor the bound requires

        log2(Q(t)/Q(t0)) - 1 < (1/eps0) int_{t0}^{t} P ds,

    strictly; eps0_max is the closed-form largest eps0 satisfying it at
    every eval point (knots plus ``refine`` subdivisions per cell).
    """
    tq, q = trace.series("sup_curv")
    q_curve = PiecewiseLinear(tq, q)
    p_curve = _curve(trace, "sup_hess_scalar")
    anchor = None
    for k in range(len(tq)):
        qk = float(q[k])
        if qk <= 0.0:
            continue
        back = 1.0 / (qk * qk)
        t0 = float(tq[k])
        if t0 - back < float(tq[0]) - 1e-12:
            continue
        if q_curve.window_max(t0 - back, t0) <= 2.0 * qk * (1.0 + 1e-12):
            anchor = t0
            break
    if anchor is None:
        raise DomainError("no admissible normalization anchor in the trace")
    q0 = float(q_curve(anchor))
    ts = tq[tq > anchor]
    if refine > 1 and ts.size:
        cells = np.concatenate(([anchor], ts))
        fine = [
            np.linspace(a, b, refine + 1)[1:]
            for a, b in zip(cells[:-1], cells[1:])
        ]
        ts = np.unique(np.concatenate(fine))
    eps0_max = math.inf
    holds = None
    lhs_all = []
    rhs_all = []
    for tau in ts:
        qt = float(q_curve(tau))
        if qt <= 0.0:
            continue
        lhs = math.log2(qt / q0) - 1.0
        rhs = p_curve.integral(anchor, float(tau))
        lhs_all.append(lhs)
        rhs_all.append(rhs)
        if lhs > 0.0:
            eps0_max = min(eps0_max, rhs / lhs)
    if eps0 is not None:
        if eps0 <= 0:
            raise ValueError("eps0 must be positive")
        holds = all(
            l < r / eps0 for l, r in zip(lhs_all, rhs_all) if l > 0.0
        )
    return GrowthBound(anchor=anchor, eps0_max=eps0_max, eps0=eps0,
                       holds=holds)


@dataclass(frozen=True)
class BarrierReport:
    verdict: str
    t0: float
    window_start: float
    first_violation: "float | None"
    margin: float


def barrier_check(trace, t0):
    """Check Q against the square-root barrier on its look-back window.

    The window is [t0 - Q(t0)^-2, t0] and the barrier is
    B(t) = 2 / sqrt(Q(t0)^-2 + (t - t0)).  The scalar-bound hypothesis is
    checked after the internal normalization (Q(t0) -> 1), which turns it
    into sup O <= Q(t0) over the window; when it fails the verdict is
    ``inapplicable``.  Q - B is concave on each linear segment, so maxima
    and first roots are exact.
    """
    q_curve = _curve(trace, "sup_curv")
    o_curve = _curve(trace, "sup_scalar")
    if t0 < q_curve.t[0] - 1e-12 or t0 > q_curve.t[-1] + 1e-12:
        raise DomainError(f"time {t0} outside the trace")
    q0 = float(q_curve(t0))
    if q0 <= 0.0:
        return BarrierReport("inapplicable", t0, t0, None, math.inf)
    c = 1.0 / (q0 * q0)
    w0 = t0 - c
    if w0 < float(q_curve.t[0]) - 1e-12:
        raise DomainError("insufficient history for the look-back window")
    w0 = max(w0, float(q_curve.t[0]))
    if o_curve.window_max(w0, t0) > q0 * (1.0 + 1e-12):
        return BarrierReport("inapplicable", t0, w0, None, math.inf)

    def barrier(t):
        # The window edge t0 - Q(t0)^-2 is the barrier's pole; anything
        # finite is below it there.
        arg = c + (t - t0)
        return 2.0 / math.sqrt(arg) if arg > 0 else math.inf

    knots = q_curve.t
    lo = np.searchsorted(knots, w0, side="right")
    hi = np.searchsorted(knots, t0, side="left")
    pts = np.concatenate(([w0], knots[lo:hi], [t0]))
    margin = math.inf
    first_violation = None
    tiny = 1e-14 * max(1.0, abs(t0))
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= tiny:
            continue
        ya, yb = float(q_curve(a)), float(q_curve(b))
        cand_t = [a, b]
        slope = (yb - ya) / (b - a)
        if slope < 0.0:
            # Interior critical point of (linear - barrier), barrier convex.
            tau = (-1.0 / slope) ** (2.0 / 3.0) - c
            t_star = t0 + tau
            if a < t_star < b:
                cand_t.append(t_star)
        worst_t, worst = None, -math.inf
        for tt in cand_t:
            wall = barrier(float(tt))
            if math.isinf(wall):
                continue  # the pole at the window edge dominates anything
            gap = (ya + slope * (float(tt) - a)) - wall
            margin = min(margin, -gap)
            if gap > worst:
                worst, worst_t = gap, tt
        if worst >= 0.0 and first_violation is None:
            f_a = ya - barrier(a)
            if f_a >= 0.0:
                first_violation = float(a)
            else:
                lo_t, hi_t = a, worst_t
                for _ in range(80):
                    mid = 0.5 * (lo_t + hi_t)
                    val = (ya + slope * (mid - a)) - barrier(mid)
                    if val < 0.0:
                        lo_t = mid
                    else:
                        hi_t = mid
                first_violation = float(hi_t)
    verdict = "holds" if first_violation is None else "violated"
    return BarrierReport(verdict, t0, w0, first_violation, margin)


@dataclass(frozen=True)
class BlowupRates:
    sup_pt: float
    sup_oq: float
    sup_qroot: float
    sup_q2t: float
    type1: bool
    lam_fit: float
    alpha: float
    t_sing: float


def blowup_rates(trace, t_sing, alpha, type1_threshold=10.0, lam_grid=None):
    """Tail statistics of the singular-time rate quantities.

    Suprema are taken over recorded samples before ``t_sing`` only (no
    extrapolation).  The type-I flag reports whether Q^2 (T - t) stays
    below the threshold; ``lam_fit`` is the smallest grid exponent for
    which Q (T - t)^lam is non-increasing along the tail, +inf when none
    qualifies.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    t, q = trace.series("sup_curv")
    _, p = trace.series("sup_hess_scalar")
    _, o = trace.series("sup_scalar")
    keep = t < t_sing
    if not np.any(keep):
        raise DomainError("no samples before the singular time")
    t, q, p, o = t[keep], q[keep], p[keep], o[keep]
    dtau = t_sing - t
    sup_pt = float(np.max(p * dtau))
    sup_oq = float(np.max(o ** alpha * q ** (2.0 - alpha) * dtau))
    sup_qroot = float(np.max(q * np.sqrt(dtau)))
    sup_q2t = float(np.max(q * q * dtau))
    if lam_grid is None:
        lam_grid = np.linspace(0.0, 4.0, 81)
    lam_fit = math.inf
    for lam in lam_grid:
        vals = q * dtau ** lam
        if np.all(vals[1:] <= vals[:-1] * (1.0 + 1e-12) + 1e-300):
            lam_fit = float(lam)
            break
    return BlowupRates(sup_pt, sup_oq, sup_qroot, sup_q2t,
                       bool(sup_q2t <= type1_threshold), lam_fit,
                       float(alpha), float(t_sing))


_SCALE_RULES = {
    "sup_scalar": 1,
    "sup_hess_scalar": 2,
    "sup_curv": 1,
    "calabi_energy": 1,
    "mean_scalar": 1,
    "sup_grad_scalar": 1.5,
    "sup_bihess_scalar": 3,
    "evolution_residual": 3,
}


def rescale_trace(trace, a, t0=None):
    """Covariant rescaling of a trace: g -> A g, t -> A^2 (t - t0).

    Curvature-type fields carry inverse powers of A fixed by their
    derivative order; the volume and the Futaki pairing scale up by A (one
    complex dimension).  The automorphism gap is a potential-space norm
    with no clean covariance and is carried through unchanged.  The
    curvature scale computed on the result equals A^2 times the original
    at corresponding times, which is used as an exact oracle in tests.
    """
    if a <= 0:
        raise ValueError("rescale factor must be positive")
    if t0 is None:
        t0 = trace.t_start
    a2 = a * a
    out = []
    for s in trace.samples:
        kw = {"t": a2 * (s.t - t0)}
        for name in SAMPLE_SCHEMA[1:]:
            val = getattr(s, name)
            if val is None:
                kw[name] = None
            elif name in _SCALE_RULES:
                kw[name] = val / a ** _SCALE_RULES[name]
            elif name == "volume":
                kw[name] = val * a
            elif name == "futaki":
                kw[name] = val * a
            else:  # aut_gap
                kw[name] = val
        out.append(DiagnosticsSample(**kw))
    meta = dict(trace.metadata)
    meta["rescaled_by"] = meta.get("rescaled_by", 1.0) * a
    return Trace(tuple(out), a2 * (trace.t_start - t0),
                 a2 * (trace.t_end - t0), trace.termination, meta)


def _blank_sample(t, q, p=0.0, o=0.0):
    return DiagnosticsSample(
        t=float(t), sup_scalar=float(o), sup_hess_scalar=float(p),
        sup_curv=float(q), calabi_energy=0.0, volume=1.0, mean_scalar=0.0,
        sup_grad_scalar=0.0, sup_bihess_scalar=0.0,
    )


def synthetic_trace(kind, **params):
    """Deterministic test-fixture traces with analytically known statistics.

    Kinds: ``constant`` (Q = c), ``typeI`` (Q = (T-t)^(-1/2)), ``typeII``
    (Q = (T-t)^(-1)), ``sawtooth`` (explicit knots), ``oscillatory``
    (sinusoid sampled coarsely).  Unknown kinds or inconsistent parameters
    raise BadParams.
    """
    try:
        if kind == "constant":
            value = float(params.pop("value"))
            t0 = float(params.pop("t0", 0.0))
            t1 = float(params.pop("t1", 10.0))
            n = int(params.pop("n", 201))
            p = float(params.pop("p", 0.0))
            o = float(params.pop("o", 0.0))
            _reject_extra(params)
            if n < 2 or t1 <= t0 or value < 0:
                raise BadParams("bad constant-trace parameters")
            ts = np.linspace(t0, t1, n)
            samples = [_blank_sample(t, value, p, o) for t in ts]
        elif kind in ("typeI", "typeII"):
            t_sing = float(params.pop("t_sing"))
            t0 = float(params.pop("t0", 0.0))
            t1 = float(params.pop("t1", t_sing - 1e-3))
            n = int(params.pop("n", 201))
            p = float(params.pop("p", 0.0))
            o = float(params.pop("o", 0.0))
            _reject_extra(params)
            if n < 2 or not t0 < t1 < t_sing:
                raise BadParams("bad power-law-trace parameters")
            expo = -0.5 if kind == "typeI" else -1.0
            ts = np.linspace(t0, t1, n)
            samples = [
                _blank_sample(t, (t_sing - t) ** expo, p, o) for t in ts
            ]
        elif kind == "sawtooth":
            times = np.asarray(params.pop("times"), dtype=float)
            q = np.asarray(params.pop("q"), dtype=float)
            p = np.asarray(params.pop("p", np.zeros_like(times)), dtype=float)
            o = np.asarray(params.pop("o", np.zeros_like(times)), dtype=float)
            _reject_extra(params)
            if times.size < 2 or np.any(np.diff(times) <= 0):
                raise BadParams("sawtooth times must be strictly increasing")
            if not (times.size == q.size == p.size == o.size):
                raise BadParams("sawtooth arrays must share one length")
            if np.any(q < 0) or np.any(p < 0) or np.any(o < 0):
                raise BadParams("envelope curves are nonnegative sup-norms")
            samples = [
                _blank_sample(t, qq, pp, oo)
                for t, qq, pp, oo in zip(times, q, p, o)
            ]
        elif kind == "oscillatory":
            t0 = float(params.pop("t0", 0.0))
            t1 = float(params.pop("t1", 10.0))
            n = int(params.pop("n", 201))
            base = float(params.pop("base", 1.0))
            amp = float(params.pop("amp", 0.5))
            freq = float(params.pop("freq", 7.3))
            _reject_extra(params)
            if n < 2 or t1 <= t0 or base <= abs(amp):
                raise BadParams("oscillatory trace needs base > |amp|")
            ts = np.linspace(t0, t1, n)
            samples = [
                _blank_sample(t, base + amp * math.sin(freq * t)) for t in ts
            ]
        else:
            raise BadParams(f"unknown synthetic trace kind {kind!r}")
    except KeyError as exc:
        raise BadParams(f"missing parameter {exc}") from exc
    return Trace(tuple(samples), samples[0].t, samples[-1].t, "completed",
                 {"synthetic": kind})


def _reject_extra(params):
    if params:
        raise BadParams(f"unknown parameters {sorted(params)}")


@dataclass(frozen=True)
class ScaleReport:
    """Bundle of scale statistics for one trace, ready to serialize."""

    f_values: tuple
    doubling: tuple
    growth: GrowthBound
    barrier: tuple
    rates: "BlowupRates | None"
    meta: dict


def analyze_trace(trace, alpha=0.5, eps0=None, t_sing=None, max_points=512):
    """Full scale analysis of one trace (the ``analyze`` CLI core).

    Pointwise quantities (curvature scale, barrier verdicts) are evaluated
    at sample times, deterministically strided down to ``max_points`` on
    very long traces to keep the quadratic window algebra bounded.
    """
    stride = max(1, (len(trace.samples) + max_points - 1) // max_points)
    eval_samples = trace.samples[::stride]
    if trace.samples and eval_samples[-1] is not trace.samples[-1]:
        eval_samples = eval_samples + (trace.samples[-1],)
    f_vals = []
    for s in eval_samples:
        if s.t > trace.t_start:
            f_vals.append((s.t, curvature_scale(trace, s.t)))
    try:
        growth = growth_bound_check(trace, eps0=eps0)
    except DomainError:
        growth = GrowthBound(anchor=math.nan, eps0_max=math.inf,
                             eps0=eps0, holds=None)
    barrier = []
    for s in eval_samples:
        try:
            rep = barrier_check(trace, s.t)
        except DomainError:
            continue
        barrier.append(rep)
    rates = None
    if t_sing is None:
        t_sing = trace.t_end
    if any(s.t < t_sing for s in trace.samples):
        rates = blowup_rates(trace, t_sing, alpha)
    _, ca = trace.series("calabi_energy")
    meta = {
        "termination": trace.termination,
        "initial_energy": float(ca[0]) if len(ca) else math.nan,
        "final_energy": float(ca[-1]) if len(ca) else math.nan,
        "energy_monotone": bool(np.all(np.diff(ca) <= 0.0))
        if len(ca) > 1 else True,
    }
    return ScaleReport(tuple(f_vals), tuple(doubling_stats(trace)), growth,
                       tuple(barrier), rates, meta)
