"""Pathwise noise/drift decompositions of counting processes.

Every operation here is an exact algebraic identity on a single sample
path: the count splits into a drift proportional to elapsed-plus-residual
time and a piecewise-constant noise term that jumps only at events, and
the same split holds with the rate replaced by the reciprocal conditional
truncated mean of the next inter-arrival.  The residual returned by the
``*_residual`` functions is therefore zero up to floating-point rounding;
``tolerance_for(n)`` gives the bound 1e-9 * (1 + n) used throughout.

All functions accept a scalar query time or a 1-d array of query times
and are pure; they never mutate the path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np

from .lifetimes import LifetimeDistribution
from .processes import Delayed, Modulated, Plain, SamplePath, StationaryMA, count, residual

__all__ = [
    "ConditionalMeanOracle",
    "DecompositionReport",
    "build_reports",
    "centered_residual_functional",
    "counting_functional",
    "decompose_functional",
    "decomposition_residual",
    "martingale",
    "optional_quadratic_variation",
    "predictable_quadratic_variation",
    "quadratic_error_bound",
    "reports_to_csv",
    "squared_noise_functional",
    "tolerance_for",
    "truncated_decomposition_residual",
    "truncated_rate",
    "wald_residual",
]


def tolerance_for(n) -> float | np.ndarray:
    """Permitted rounding in pathwise identities after n observed events."""
    return 1e-9 * (1.0 + np.asarray(n, dtype=float))


def _query(path: SamplePath, t):
    t_arr = np.asarray(t, dtype=float)
    path._check_times(t_arr)
    return t_arr, t_arr.ndim == 0


def _scalarize(x, scalar):
    return float(x) if scalar else x


def martingale(path: SamplePath, rate: float, t):
    """Noise term at time t: sum of (1 - rate * T_n) over the first N(t) gaps.

    The sum includes the inter-arrival straddling t, since that term is
    revealed at the preceding event.  Piecewise constant, jumping only at
    events; for a plain renewal path with rate = 1/E[T] it has mean zero.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    t_arr, scalar = _query(path, t)
    gaps = path.interarrivals
    csum = np.concatenate([[0.0], np.cumsum(1.0 - rate * gaps)])
    n = np.searchsorted(path.events, t_arr, side="right")  # N(t) summands
    return _scalarize(csum[n], scalar)


def decomposition_residual(path: SamplePath, rate: float, t):
    """N(t) - rate*(t + R(t)) - M(t), with the delay subtracted on delayed paths.

    Zero in exact arithmetic for every path and every positive rate; the
    returned value is pure rounding noise, bounded by ``tolerance_for(N(t))``.
    """
    t_arr, scalar = _query(path, t)
    n = count(path, t_arr)
    r = residual(path, t_arr)
    m = martingale(path, rate, t_arr)
    elapsed = t_arr + r - (path.delay if path.delayed else 0.0)
    return _scalarize(n - rate * elapsed - m, scalar)


def wald_residual(path: SamplePath, mean_lifetime: float, t):
    """S_{N(t)} - E[T] N(t) + E[T] M(t): pathwise zero, mean-zero over paths.

    ``S_{N(t)}`` is the running sum of genuine inter-arrivals, which equals
    t + R(t) minus the delay on delayed paths; subtracting the delay keeps
    the identity exact in both conventions.
    """
    rate = 1.0 / mean_lifetime
    t_arr, scalar = _query(path, t)
    n = count(path, t_arr)
    r = residual(path, t_arr)
    m = martingale(path, rate, t_arr)
    s = t_arr + r - (path.delay if path.delayed else 0.0)
    return _scalarize(s - mean_lifetime * n + mean_lifetime * m, scalar)


def optional_quadratic_variation(path: SamplePath, rate: float, t):
    """Sum of squared noise jumps: sum over the first N(t) gaps of (1 - rate*T_n)^2."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    t_arr, scalar = _query(path, t)
    gaps = path.interarrivals
    csum = np.concatenate([[0.0], np.cumsum((1.0 - rate * gaps) ** 2)])
    n = np.searchsorted(path.events, t_arr, side="right")
    return _scalarize(csum[n], scalar)


def predictable_quadratic_variation(path: SamplePath, rate: float, sigma2: float, t):
    """rate^2 * sigma2 * N(t); requires a finite lifetime variance."""
    if math.isinf(sigma2):
        raise ValueError("predictable quadratic variation needs a finite lifetime variance")
    t_arr, scalar = _query(path, t)
    n = np.searchsorted(path.events, t_arr, side="right")
    return _scalarize(rate**2 * sigma2 * np.asarray(n, dtype=float), scalar)


def quadratic_error_bound(dist: LifetimeDistribution, t) -> float:
    """Upper bound sigma^2 (rate*t + rate^2 E[T^2]) for (E T)^2 E[M^2(t)]."""
    m2 = dist.moment(2)
    if math.isinf(m2):
        raise ValueError("the quadratic error bound needs a finite second moment")
    rate = dist.renewal_rate
    sigma2 = dist.variance
    t_arr = np.asarray(t, dtype=float)
    out = sigma2 * (rate * t_arr + rate**2 * m2)
    return _scalarize(out, t_arr.ndim == 0)


# ---------------------------------------------------------------------------
# Truncated decomposition
# ---------------------------------------------------------------------------


class ConditionalMeanOracle:
    """E[min(v, next gap) | information at the start of each interval].

    A path partitions [0, last event) into left-closed intervals; the
    oracle assigns to each interval the conditional truncated mean of its
    length given what was observable just before it began:

    * plain/delayed: the truncated mean of the (delay or lifetime) law;
    * modulated: the truncated mean of the lifetime law of the state
      entered at the interval's opening event;
    * stationary moving average of order m: the closed form
      min(v, s/m) + truncated_mean(base, m*v - s)/m, where s is the sum of
      the m-1 base draws already revealed.
    """

    def __init__(self, spec):
        self.spec = spec
        if isinstance(spec, Modulated):
            self._per_state = dict.fromkeys(spec.states)

    def interval_means(self, path: SamplePath, v: float) -> np.ndarray:
        if not v > 0:
            raise ValueError("truncation level v must be positive")
        spec = self.spec
        bounds = path.interval_bounds()
        n_intervals = bounds.size - 1
        if isinstance(spec, Plain):
            return np.full(n_intervals, _tm(spec.lifetime, v))
        if isinstance(spec, Delayed):
            out = np.full(n_intervals, _tm(spec.lifetime, v))
            out[0] = _tm(spec.delay_distribution, v)
            return out
        if isinstance(spec, Modulated):
            table = {s: _tm(spec.lifetimes[s], v) for s in spec.states}
            # interval j opens at event j; states[j] governs it
            return np.array([table[s] for s in path.states[:n_intervals]])
        if isinstance(spec, StationaryMA):
            m = spec.order
            s = np.asarray(path.ma_trace[:n_intervals], dtype=float)
            if math.isinf(v):
                return (s + spec.base.moment(1)) / m
            known = np.minimum(v, s / m)
            rest = spec.base.truncated_mean(np.maximum(m * v - s, 0.0)) / m
            out = known + np.where(m * v - s > 0, rest, 0.0)
            return out
        raise TypeError(f"unsupported spec type {type(spec).__name__}")

    def __call__(self, path: SamplePath, interval: int, v: float) -> float:
        return float(self.interval_means(path, v)[interval])


def _tm(dist: LifetimeDistribution, v: float) -> float:
    return dist.moment(1) if math.isinf(v) else float(dist.truncated_mean(v))


def truncated_rate(path: SamplePath, oracle: ConditionalMeanOracle, v: float, t):
    """Reciprocal conditional truncated mean governing the interval holding t.

    Piecewise constant between events and bounded below by 1/v.  With
    v = inf on a plain path this is the constant renewal rate.
    """
    t_arr, scalar = _query(path, t)
    means = oracle.interval_means(path, v)
    if np.any(means <= 0):
        raise ValueError("conditional mean oracle returned a nonpositive value")
    bounds = path.interval_bounds()
    j = np.searchsorted(bounds, t_arr, side="right") - 1
    return _scalarize(1.0 / means[j], scalar)


def truncated_decomposition_residual(path: SamplePath, oracle: ConditionalMeanOracle, v: float, t):
    """Residual of the truncated split of N(t); zero up to rounding.

    The split is N(t) = I(t) + lam(t) * min(R(t), v) + Mv(t) (+ a delay
    correction), where I integrates lam(s) over the sub-level set
    {R(s) <= v} and Mv sums 1 - lam * min(gap, v) over observed gaps.  On
    each interval the residual time decays linearly, so the indicator holds
    exactly on the final min(gap, v) stretch and I is a finite sum.
    """
    t_arr, scalar = _query(path, t)
    means = oracle.interval_means(path, v)
    if np.any(means <= 0):
        raise ValueError("conditional mean oracle returned a nonpositive value")
    lam = 1.0 / means
    bounds = path.interval_bounds()
    lengths = np.diff(bounds)
    capped = np.minimum(lengths, v)
    drift_per_interval = lam * capped
    drift_csum = np.concatenate([[0.0], np.cumsum(drift_per_interval)])

    j = np.searchsorted(bounds, t_arr, side="right") - 1
    r = bounds[j + 1] - t_arr
    r_capped = np.minimum(r, v)
    # integral over [0, t]: full intervals 0..j-1 plus the partial piece of j
    integral = drift_csum[j] + lam[j] * (capped[j] - r_capped)

    n = np.searchsorted(path.events, t_arr, side="right")
    if path.delayed:
        # gaps live in intervals 1.. ; interval 0 is the delay
        noise_csum = np.concatenate([[0.0], np.cumsum(1.0 - drift_per_interval[1:])])
        noise = noise_csum[n]
        correction = drift_per_interval[0]
    else:
        noise_csum = np.concatenate([[0.0], np.cumsum(1.0 - drift_per_interval)])
        noise = noise_csum[n]
        correction = 0.0
    return _scalarize(n - integral - lam[j] * r_capped - noise + correction, scalar)


# ---------------------------------------------------------------------------
# General functional decomposition
# ---------------------------------------------------------------------------


def decompose_functional(
    path: SamplePath,
    evaluator,
    conditional_mean: Callable[[SamplePath, int], float],
    t: float,
):
    """Split Y(t) into drift integral, predictable jump part and noise part.

    ``evaluator`` supplies ``initial(path)`` = Y just before time zero,
    ``value(path, t)``, the right derivative ``derivative(path, t)``
    (assumed piecewise constant between events), and ``jump(path, k)`` at
    event index k.  ``conditional_mean(path, k)`` supplies the expected
    post-event value given the strict pre-event past.  Returns
    ``(drift_integral, predictable, noise)`` and checks both the declared
    jumps (within 1e-12 per event) and that the three terms plus the
    initial value rebuild Y(t) within ``tolerance_for(N(t))``.
    """
    t = float(t)
    path._check_times(np.asarray(t))
    n = count(path, t)
    events = path.events[:n]

    def segment(a: float, b: float) -> float:
        # right derivative is piecewise constant between events: the
        # midpoint value times the width integrates each piece exactly
        return float(evaluator.derivative(path, 0.5 * (a + b))) * (b - a) if b > a else 0.0

    y0 = float(evaluator.initial(path))
    drift_integral = 0.0
    predictable = 0.0
    noise = 0.0
    running = y0  # reconstructed left limit as the sweep passes each event
    prev = 0.0
    for k in range(n):
        tk = float(events[k])
        seg = segment(prev, tk)
        drift_integral += seg
        running += seg
        value_at = float(evaluator.value(path, tk))
        declared = float(evaluator.jump(path, k))
        if abs(value_at - running - declared) > 1e-12 * (1.0 + abs(value_at)):
            raise ValueError(
                f"declared jump at event {k} ({declared}) disagrees with "
                f"Y(t_k) - Y(t_k-) = {value_at - running}"
            )
        cm = float(conditional_mean(path, k))
        predictable += cm - running
        noise += value_at - cm
        running = value_at
        prev = tk
    tail_seg = segment(prev, t)
    drift_integral += tail_seg

    rebuilt = y0 + drift_integral + predictable + noise
    target = float(evaluator.value(path, t))
    if abs(rebuilt - target) > tolerance_for(n) * (1.0 + abs(target)):
        raise ValueError(
            f"decomposition failed to rebuild Y(t): {rebuilt} vs {target}"
        )
    return drift_integral, predictable, noise


class counting_functional:
    """Y = N: pure predictable jumps, no noise (the degenerate choice)."""

    def initial(self, path):
        return 0.0

    def value(self, path, t):
        return float(count(path, t))

    def derivative(self, path, t):
        return 0.0

    def jump(self, path, k):
        return 1.0

    def conditional_mean(self, path, k):
        # the count is predictable: the post-event value N(t_k) = k + 1 is
        # known just before the event fires
        return float(k + 1)


class centered_residual_functional:
    """Y = N - rate*R: linear drift, vanishing predictable part, noise = martingale.

    The predictable part vanishes exactly when rate is the reciprocal mean
    of the gap revealed at each event.
    """

    def __init__(self, rate: float):
        self.rate = rate

    def initial(self, path):
        return -self.rate * path.delay if path.delayed else 0.0

    def value(self, path, t):
        return float(count(path, t)) - self.rate * float(residual(path, t))

    def derivative(self, path, t):
        return self.rate

    def jump(self, path, k):
        nxt = path.events[k + 1] - path.events[k]
        return 1.0 - self.rate * float(nxt)

    def conditional_mean(self, path, k):
        # E[Y(t_k) | past] = N(t_k-) + 1 - rate*E[T] = k with rate = 1/E[T],
        # which is exactly the left limit (R(t_k-) = 0)
        return float(k)


class squared_noise_functional:
    """Y = M^2 on a renewal path; predictable part grows by rate^2*sigma2 per event."""

    def __init__(self, rate: float, sigma2: float):
        self.rate = rate
        self.sigma2 = sigma2

    def initial(self, path):
        return 0.0

    def value(self, path, t):
        return float(martingale(path, self.rate, t)) ** 2

    def derivative(self, path, t):
        return 0.0

    def _before_after(self, path, k):
        terms = 1.0 - self.rate * path.interarrivals
        after = float(np.sum(terms[: k + 1]))  # the gap revealed at event k included
        return after - float(terms[k]), after

    def jump(self, path, k):
        before, after = self._before_after(path, k)
        return after**2 - before**2

    def conditional_mean(self, path, k):
        before, _ = self._before_after(path, k)
        return before**2 + self.rate**2 * self.sigma2


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionReport:
    """Every decomposition object evaluated at one query time."""

    t: float
    count: int
    residual: float
    martingale: float
    drift: float
    identity_residual: float
    optional_qv: float
    predictable_qv: float | None
    wald_residual: float


def build_reports(
    path: SamplePath,
    rate: float,
    mean_lifetime: float,
    sigma2: float | None,
    ts: Sequence[float],
) -> list[DecompositionReport]:
    ts = np.asarray(ts, dtype=float)
    n = count(path, ts)
    r = residual(path, ts)
    m = martingale(path, rate, ts)
    drift = rate * (ts + r - (path.delay if path.delayed else 0.0))
    ident = decomposition_residual(path, rate, ts)
    oqv = optional_quadratic_variation(path, rate, ts)
    pqv = None
    if sigma2 is not None and not math.isinf(sigma2):
        pqv = predictable_quadratic_variation(path, rate, sigma2, ts)
    wald = wald_residual(path, mean_lifetime, ts)
    out = []
    for i, t in enumerate(ts):
        out.append(
            DecompositionReport(
                t=float(t),
                count=int(n[i]),
                residual=float(r[i]),
                martingale=float(m[i]),
                drift=float(drift[i]),
                identity_residual=float(ident[i]),
                optional_qv=float(oqv[i]),
                predictable_qv=float(pqv[i]) if pqv is not None else None,
                wald_residual=float(wald[i]),
            )
        )
    return out


def reports_to_csv(reports: Sequence[DecompositionReport], fp: IO[str]) -> None:
    fp.write("t,count,residual,martingale,drift,identity_residual,"
             "optional_qv,predictable_qv,wald_residual\n")
    for rep in reports:
        pqv = "" if rep.predictable_qv is None else format(rep.predictable_qv, ".17g")
        fp.write(
            f"{rep.t:.17g},{rep.count},{rep.residual:.17g},{rep.martingale:.17g},"
            f"{rep.drift:.17g},{rep.identity_residual:.17g},{rep.optional_qv:.17g},"
            f"{pqv},{rep.wald_residual:.17g}\n"
        )
