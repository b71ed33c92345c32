"""Parametric lifetime distributions for counting-process simulation.

Every distribution here puts all of its mass on (0, infinity) and has a
finite mean, so each can serve as the inter-arrival law of an orderly
counting process.  Moments, tails and truncated means use closed forms
throughout (SciPy's regularized incomplete gamma functions cover the Gamma
family); divergent higher moments are reported as ``math.inf`` rather than
a large float so that callers can branch on finiteness.

``tail``, ``truncated_mean`` and ``equilibrium_cdf`` accept scalars or
numpy arrays and return a matching shape.  Samplers take an explicit
``numpy.random.Generator`` and are otherwise stateless; distribution
objects are immutable and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy import integrate, special

__all__ = [
    "ArithmeticSpan",
    "Deterministic",
    "EquilibriumOf",
    "Exponential",
    "Gamma",
    "Lattice",
    "LifetimeDistribution",
    "Mixture",
    "ParetoShifted",
    "Uniform",
    "breakpoints",
    "distribution_from_json",
]

# Smallest admissible draw.  Inverse-CDF sampling can hit exactly 0.0 with
# probability 2**-53 per draw; clamping keeps event times strictly increasing.
_POSITIVE_FLOOR = 1e-300

# Absolute tolerance for the quadrature fallbacks (equilibrium truncated
# means, integrated generators).  Grid-solver steps dominate this by orders
# of magnitude.
_QUAD_TOL = 1e-10

_LATTICE_TOL = 1e-9


class ArithmeticSpan(NamedTuple):
    """Whether all mass sits on a lattice, and the lattice span if so."""

    arithmetic: bool
    span: float | None


def _scalarize(x: np.ndarray, scalar: bool) -> float | np.ndarray:
    return float(x) if scalar else x


def breakpoints(dist: "LifetimeDistribution") -> list[float]:
    """Locations where the tail jumps or kinks (atoms of any component)."""
    if isinstance(dist, Mixture):
        out: set[float] = set()
        for w, c in zip(dist.weights, dist.components):
            if w > 0:
                out.update(breakpoints(c))
        return sorted(out)
    if isinstance(dist, EquilibriumOf):
        return breakpoints(dist.base)
    atoms = dist.atoms()
    return [loc for loc, _ in atoms] if atoms else []


def _quad_tail_integral(dist: "LifetimeDistribution", lo: float, hi: float) -> float:
    """Integrate ``dist.tail`` over [lo, hi], splitting at jump/kink points."""
    pts = [a for a in breakpoints(dist) if lo < a < hi]
    val, _ = integrate.quad(
        lambda u: float(dist.tail(u)), lo, hi,
        points=pts or None, limit=400, epsabs=_QUAD_TOL, epsrel=1e-12,
    )
    return val


@dataclass(frozen=True)
class LifetimeDistribution:
    """Base class for positive lifetime laws.

    Subclasses implement ``tail``, ``moment``, ``truncated_mean``,
    ``draw`` and ``is_arithmetic``; everything else derives from those.
    """

    # -- primitive surface -------------------------------------------------

    def tail(self, x):
        """P(T > x), right-continuous and nonincreasing in x."""
        raise NotImplementedError

    def moment(self, k: int) -> float:
        """Exact E[T**k] for k in {1, 2, 3}; ``math.inf`` when divergent."""
        raise NotImplementedError

    def truncated_mean(self, v):
        """E[min(v, T)], the integral of the tail over [0, v]."""
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, size=None):
        """Sample from the law; identical generator state gives identical draws."""
        raise NotImplementedError

    def is_arithmetic(self) -> ArithmeticSpan:
        """Structural lattice test with the lattice span when it applies."""
        return ArithmeticSpan(False, None)

    def atoms(self) -> list[tuple[float, float]] | None:
        """(location, mass) pairs for purely atomic laws, else None."""
        return None

    def to_json(self) -> dict:
        raise NotImplementedError

    # -- derived quantities -------------------------------------------------

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def renewal_rate(self) -> float:
        """1 / E[T], the long-run event rate of the induced renewal process."""
        return 1.0 / self.moment(1)

    @property
    def variance(self) -> float:
        m2 = self.moment(2)
        if math.isinf(m2):
            return math.inf
        m1 = self.moment(1)
        return m2 - m1 * m1

    def equilibrium_cdf(self, x):
        """CDF of the stationary-excess law: truncated_mean(x) / mean."""
        return self.truncated_mean(x) / self.moment(1)

    def excess_second_moment(self, t):
        """E[(T - t)^2 ; T > t], i.e. twice the t-shifted integrated tail.

        Default implementation integrates 2*(x - t)*tail(x) numerically;
        subclasses override with closed forms.
        """
        t = float(t)
        hi = t + 60.0 * max(self.moment(1), 1.0)
        pts = [a for a in breakpoints(self) if t < a < hi]
        val, _ = integrate.quad(
            lambda x: 2.0 * (x - t) * float(self.tail(x)), t, hi,
            points=pts or None, limit=400, epsabs=_QUAD_TOL,
        )
        return val


@dataclass(frozen=True)
class Exponential(LifetimeDistribution):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize(np.exp(-self.rate * x), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        return math.factorial(k) / self.rate**k

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        out = -np.expm1(-self.rate * v) / self.rate
        return _scalarize(out, v.ndim == 0)

    def excess_second_moment(self, t):
        # memorylessness: tail(t) * E[T^2]
        t = np.asarray(t, dtype=float)
        return _scalarize(np.exp(-self.rate * t) * (2.0 / self.rate**2), t.ndim == 0)

    def draw(self, rng, size=None):
        return np.maximum(rng.exponential(1.0 / self.rate, size), _POSITIVE_FLOOR)

    def to_json(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Gamma(LifetimeDistribution):
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma shape and rate must be positive")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize(special.gammaincc(self.shape, self.rate * x), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        val = 1.0
        for j in range(k):
            val *= (self.shape + j) / self.rate
        return val

    def truncated_mean(self, v):
        # E[T; T<=v] + v P(T>v), with x*f(x; a) = (a/rate)*f(x; a+1)
        v = np.asarray(v, dtype=float)
        a, r = self.shape, self.rate
        out = (a / r) * special.gammainc(a + 1, r * v) + v * special.gammaincc(a, r * v)
        return _scalarize(out, v.ndim == 0)

    def excess_second_moment(self, t):
        t = np.asarray(t, dtype=float)
        a, r = self.shape, self.rate
        # E[T^2; T>t] - 2t E[T; T>t] + t^2 P(T>t)
        m1_above = (a / r) * special.gammaincc(a + 1, r * t)
        m2_above = (a * (a + 1) / r**2) * special.gammaincc(a + 2, r * t)
        out = m2_above - 2.0 * t * m1_above + t**2 * special.gammaincc(a, r * t)
        return _scalarize(out, t.ndim == 0)

    def draw(self, rng, size=None):
        return np.maximum(rng.gamma(self.shape, 1.0 / self.rate, size), _POSITIVE_FLOOR)

    def to_json(self):
        return {"kind": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class Uniform(LifetimeDistribution):
    low: float
    high: float

    def __post_init__(self):
        if not (self.low >= 0 and self.high > self.low):
            raise ValueError("uniform support must satisfy 0 <= low < high")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.clip((self.high - x) / (self.high - self.low), 0.0, 1.0)
        return _scalarize(out, x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        a, b = self.low, self.high
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        a, b = self.low, self.high
        vc = np.clip(v, a, b)
        mid = a + (vc - a) * (2 * b - a - vc) / (2 * (b - a))
        out = np.where(v <= a, v, np.where(v >= b, (a + b) / 2.0, mid))
        return _scalarize(out, v.ndim == 0)

    def excess_second_moment(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.low, self.high
        lo = np.clip(t, a, b)
        out = np.where(t >= b, 0.0, ((b - t) ** 3 - (lo - t) ** 3) / (3 * (b - a)))
        return _scalarize(out, t.ndim == 0)

    def draw(self, rng, size=None):
        return np.maximum(rng.uniform(self.low, self.high, size), _POSITIVE_FLOOR)

    def to_json(self):
        return {"kind": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Deterministic(LifetimeDistribution):
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("deterministic lifetime must be positive")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize((x < self.value).astype(float), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        return self.value**k

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        return _scalarize(np.minimum(v, self.value), v.ndim == 0)

    def excess_second_moment(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.value, (self.value - t) ** 2, 0.0)
        return _scalarize(out, t.ndim == 0)

    def draw(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def is_arithmetic(self):
        return ArithmeticSpan(True, self.value)

    def atoms(self):
        return [(self.value, 1.0)]

    def to_json(self):
        return {"kind": "deterministic", "value": self.value}


@dataclass(frozen=True)
class ParetoShifted(LifetimeDistribution):
    """Heavy-tailed law with P(T > x) = (1 + x)**(-alpha); needs alpha > 1."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1 so the mean is finite")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _scalarize((1.0 + x) ** (-self.alpha), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        a = self.alpha
        if k >= a:
            return math.inf
        if k == 1:
            return 1.0 / (a - 1)
        if k == 2:
            return 2.0 / ((a - 1) * (a - 2))
        return 6.0 / ((a - 1) * (a - 2) * (a - 3))

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        out = (1.0 - (1.0 + v) ** (1.0 - self.alpha)) / (self.alpha - 1.0)
        return _scalarize(out, v.ndim == 0)

    def excess_second_moment(self, t):
        a = self.alpha
        if a <= 2:
            raise ValueError("E[(T-t)^2; T>t] diverges for alpha <= 2")
        t = np.asarray(t, dtype=float)
        out = 2.0 * (1.0 + t) ** (2.0 - a) / ((a - 1.0) * (a - 2.0))
        return _scalarize(out, t.ndim == 0)

    def draw(self, rng, size=None):
        u = rng.random(size)
        return np.maximum((1.0 - u) ** (-1.0 / self.alpha) - 1.0, _POSITIVE_FLOOR)

    def to_json(self):
        return {"kind": "pareto_shifted", "alpha": self.alpha}


@dataclass(frozen=True)
class Lattice(LifetimeDistribution):
    """Atoms at span, 2*span, ... with probabilities ``pmf`` (sums to 1)."""

    span: float
    pmf: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "pmf", tuple(float(p) for p in self.pmf))
        if not self.span > 0:
            raise ValueError("lattice span must be positive")
        if not self.pmf or any(p < 0 for p in self.pmf):
            raise ValueError("pmf must be a nonempty sequence of nonnegative weights")
        if abs(sum(self.pmf) - 1.0) > 1e-12:
            raise ValueError("pmf must sum to 1 within 1e-12")

    @cached_property
    def _cum(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    @cached_property
    def _sites(self) -> np.ndarray:
        return self.span * np.arange(1, len(self.pmf) + 1)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        # number of atoms at or below x; the +tol keeps P(T > j*span) exclusive
        idx = np.floor(x / self.span + _LATTICE_TOL).astype(int)
        idx = np.clip(idx, 0, len(self.pmf))
        cum = np.concatenate([[0.0], self._cum])
        return _scalarize(1.0 - cum[idx], x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        return float(np.dot(self.pmf, self._sites**k))

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        out = np.minimum(v[..., None], self._sites) @ np.asarray(self.pmf)
        return _scalarize(np.asarray(out), v.ndim == 0)

    def excess_second_moment(self, t):
        t = np.asarray(t, dtype=float)
        diff = self._sites - t[..., None]
        out = np.where(diff > 0, diff**2, 0.0) @ np.asarray(self.pmf)
        return _scalarize(np.asarray(out), t.ndim == 0)

    def draw(self, rng, size=None):
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(self._cum, u, side="right"), len(self.pmf) - 1)
        return self.span * (np.asarray(idx) + 1.0) if size is not None else float(self.span * (idx + 1))

    def is_arithmetic(self):
        support = [j + 1 for j, p in enumerate(self.pmf) if p > 0]
        g = 0
        for j in support:
            g = math.gcd(g, j)
        return ArithmeticSpan(True, self.span * g)

    def atoms(self):
        return [(float(s), p) for s, p in zip(self._sites, self.pmf) if p > 0]

    def to_json(self):
        return {"kind": "lattice", "span": self.span, "pmf": list(self.pmf)}


@dataclass(frozen=True)
class Mixture(LifetimeDistribution):
    weights: tuple[float, ...]
    components: tuple[LifetimeDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.weights) != len(self.components) or not self.components:
            raise ValueError("weights and components must be nonempty and match in length")
        if any(w < 0 for w in self.weights):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = sum(w * np.asarray(c.tail(x)) for w, c in zip(self.weights, self.components))
        return _scalarize(np.asarray(out), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        total = 0.0
        for w, c in zip(self.weights, self.components):
            if w == 0:
                continue
            m = c.moment(k)
            if math.isinf(m):
                return math.inf
            total += w * m
        return total

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        out = sum(w * np.asarray(c.truncated_mean(v)) for w, c in zip(self.weights, self.components))
        return _scalarize(np.asarray(out), v.ndim == 0)

    def excess_second_moment(self, t):
        t = np.asarray(t, dtype=float)
        out = sum(w * np.asarray(c.excess_second_moment(t)) for w, c in zip(self.weights, self.components))
        return _scalarize(np.asarray(out), t.ndim == 0)

    def draw(self, rng, size=None):
        if size is None:
            u = rng.random()
            idx = int(np.searchsorted(np.cumsum(self.weights), u, side="right"))
            idx = min(idx, len(self.components) - 1)
            return self.components[idx].draw(rng)
        u = rng.random(size)
        idx = np.minimum(
            np.searchsorted(np.cumsum(self.weights), u, side="right"),
            len(self.components) - 1,
        )
        out = np.empty(np.shape(u))
        for i, comp in enumerate(self.components):
            mask = idx == i
            n = int(mask.sum())
            if n:
                out[mask] = comp.draw(rng, n)
        return out

    def is_arithmetic(self):
        spans = []
        for w, c in zip(self.weights, self.components):
            if w == 0:
                continue
            sub = c.is_arithmetic()
            if not sub.arithmetic:
                return ArithmeticSpan(False, None)
            spans.append(sub.span)
        return ArithmeticSpan(True, _common_span(spans))

    def atoms(self):
        merged: dict[float, float] = {}
        for w, c in zip(self.weights, self.components):
            if w == 0:
                continue
            sub = c.atoms()
            if sub is None:
                return None
            for loc, mass in sub:
                merged[loc] = merged.get(loc, 0.0) + w * mass
        return sorted(merged.items())

    def to_json(self):
        return {
            "kind": "mixture",
            "weights": list(self.weights),
            "components": [c.to_json() for c in self.components],
        }


@dataclass(frozen=True)
class EquilibriumOf(LifetimeDistribution):
    """Stationary-excess law of ``base``: tail(x) = 1 - equilibrium_cdf(x).

    Used as the delay law of a stationary delayed process.  Requires a
    finite second moment of the base law so its own mean is finite.
    """

    base: LifetimeDistribution

    def __post_init__(self):
        if math.isinf(self.base.moment(2)):
            raise ValueError(
                "equilibrium delay needs a finite second moment of the lifetime law"
            )

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - np.asarray(self.base.equilibrium_cdf(x))
        return _scalarize(np.asarray(out), x.ndim == 0)

    def moment(self, k):
        _check_k(k)
        if k == 3:
            raise ValueError("third moment of an equilibrium law needs E[T^4]; unsupported")
        num = self.base.moment(k + 1)
        if math.isinf(num):
            return math.inf
        return num / ((k + 1) * self.base.moment(1))

    def truncated_mean(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            return _quad_tail_integral(self, 0.0, float(v))
        return np.array([_quad_tail_integral(self, 0.0, float(x)) for x in v.ravel()]).reshape(v.shape)

    def draw(self, rng, size=None):
        scalar = size is None
        u = rng.random(1 if scalar else size)
        out = self.inverse_cdf(np.atleast_1d(np.asarray(u)))
        return float(out[0]) if scalar else out.reshape(np.shape(u))

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        """Vectorized bisection inverse of the base equilibrium CDF (tol 1e-10)."""
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.full_like(u, max(self.base.moment(1), 1.0))
        for _ in range(200):
            need = np.asarray(self.base.equilibrium_cdf(hi)) < u
            if not need.any():
                break
            hi = np.where(need, 2.0 * hi, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = np.asarray(self.base.equilibrium_cdf(mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if float(np.max(hi - lo)) <= 1e-10:
                break
        return 0.5 * (lo + hi)

    def to_json(self):
        return {"kind": "equilibrium", "base": self.base.to_json()}


def _check_k(k: int) -> None:
    if k not in (1, 2, 3):
        raise ValueError(f"moment order must be 1, 2 or 3, got {k}")


def _common_span(spans: Sequence[float]) -> float:
    """Largest delta such that every input span is an integer multiple.

    Floats are dyadic rationals, so the Fraction-based gcd is exact for
    cleanly represented parameters; when the exact answer collapses below
    1e-9 (decimal-looking inputs such as 0.1 and 0.3) fall back to a
    tolerance-based Euclid pass.
    """
    fracs = [Fraction(s).limit_denominator(1 << 62) for s in spans]
    # exact gcd of fractions: gcd(a/b, c/d) = gcd(a*d, c*b) / (b*d)
    g = fracs[0]
    for f in fracs[1:]:
        g = Fraction(math.gcd(g.numerator * f.denominator, f.numerator * g.denominator),
                     g.denominator * f.denominator)
    exact = float(g)
    if exact >= _LATTICE_TOL:
        return exact
    out = spans[0]
    for s in spans[1:]:
        a, b = max(out, s), min(out, s)
        while b > _LATTICE_TOL:
            a, b = b, a - math.floor(a / b) * b
            if abs(b - a) < _LATTICE_TOL:  # residue indistinguishable from divisor
                b = 0.0
        out = a
    return out


_JSON_KINDS = {
    "exponential": lambda obj: Exponential(rate=float(obj["rate"])),
    "gamma": lambda obj: Gamma(shape=float(obj["shape"]), rate=float(obj["rate"])),
    "uniform": lambda obj: Uniform(low=float(obj["low"]), high=float(obj["high"])),
    "deterministic": lambda obj: Deterministic(value=float(obj["value"])),
    "pareto_shifted": lambda obj: ParetoShifted(alpha=float(obj["alpha"])),
    "lattice": lambda obj: Lattice(span=float(obj["span"]), pmf=tuple(obj["pmf"])),
    "mixture": lambda obj: Mixture(
        weights=tuple(obj["weights"]),
        components=tuple(distribution_from_json(c) for c in obj["components"]),
    ),
    "equilibrium": lambda obj: EquilibriumOf(base=distribution_from_json(obj["base"])),
}

_JSON_FIELDS = {
    "exponential": {"kind", "rate"},
    "gamma": {"kind", "shape", "rate"},
    "uniform": {"kind", "low", "high"},
    "deterministic": {"kind", "value"},
    "pareto_shifted": {"kind", "alpha"},
    "lattice": {"kind", "span", "pmf"},
    "mixture": {"kind", "weights", "components"},
    "equilibrium": {"kind", "base"},
}


def distribution_from_json(obj: Mapping) -> LifetimeDistribution:
    """Parse the ``{"kind": ..., params...}`` wire format."""
    if not isinstance(obj, Mapping) or "kind" not in obj:
        raise ValueError("distribution JSON must be an object with a 'kind' field")
    kind = obj["kind"]
    if kind not in _JSON_KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    extra = set(obj) - _JSON_FIELDS[kind]
    if extra:
        raise ValueError(f"unknown fields for {kind!r} distribution: {sorted(extra)}")
    missing = _JSON_FIELDS[kind] - set(obj)
    if missing:
        raise ValueError(f"missing fields for {kind!r} distribution: {sorted(missing)}")
    return _JSON_KINDS[kind](obj)
