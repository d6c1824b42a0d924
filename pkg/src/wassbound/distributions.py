"""Increment and noise laws.

Each law is an immutable dataclass. Closed forms are used wherever they
exist; anything else goes through ``expect``, which integrates against the
density with scipy's adaptive quadrature and drops to Monte Carlo (with a
warning) when quadrature reports trouble.

Conventions
-----------
* ``cdf(z)`` is the strict probability P(Z < z). This matters only for laws
  with atoms, where the queueing drift uses the indicator of x + Z < 0.
* Divergent moments and MGFs come back as ``math.inf``.
* ``shifted`` wraps exactly one non-shifted base law; the ``shift`` helper
  folds nested offsets into one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

INF = math.inf
QUAD_ABS_TOL = 1e-10
_FLAVORS = ("raw", "absolute", "positive_part")


class QuadratureFallback(RuntimeWarning):
    """Raised as a warning when an expectation fell back to Monte Carlo."""


def _odd_factorial(j: int) -> int:
    # (j-1)!! for even j, the j-th moment of a standard normal
    return math.prod(range(1, j, 2))


def _is_int(k) -> bool:
    return float(k).is_integer()


class Distribution:
    kind = "abstract"

    # -- interface filled in by subclasses -------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def cdf(self, z):
        raise NotImplementedError

    def cdf_weak(self, z):
        """P(Z <= z)."""
        return self.cdf(z)

    def mean(self) -> float:
        return self.moment(1, "raw")

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def atoms(self) -> list[tuple[float, float]]:
        return []

    def pdf(self, z):
        raise NotImplementedError

    def tail_index(self) -> float:
        """Sup of k with E|Z|^k finite (inf for light tails)."""
        return INF

    def mgf_boundary(self) -> float:
        """Sup of a >= 0 with E exp(aZ) finite."""
        return INF

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- closed-form hooks; None means "no closed form here" --------------
    def _moment_closed(self, order, flavor):
        return None

    def _mgf_closed(self, a):
        return None

    # -- generic machinery ------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return bool(self.atoms())

    def expect(self, fn: Callable[[float], float], lo=None, hi=None) -> float:
        """E fn(Z), optionally restricted to lo < Z < hi."""
        if self.is_discrete:
            tot = 0.0
            for x, w in self.atoms():
                if (lo is None or x > lo) and (hi is None or x < hi):
                    tot += w * fn(x)
            return tot
        a, b = self.support()
        if lo is not None:
            a = max(a, lo)
        if hi is not None:
            b = min(b, hi)
        if a >= b:
            return 0.0
        # split at zero and at the finite endpoints so kinks sit on nodes
        cuts = [a] + [c for c in (0.0,) if a < c < b] + [b]
        pdf = self.pdf

        def integrand(x):
            # skip fn where the density underflows, so exp(a x) is never
            # evaluated far out in the tail
            p = pdf(x)
            return fn(x) * p if p > 0 else 0.0

        total = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                for u, v in zip(cuts[:-1], cuts[1:]):
                    val, _ = integrate.quad(integrand, u, v,
                                            epsabs=QUAD_ABS_TOL, epsrel=1e-10, limit=400)
                    total += val
                return total
            except (integrate.IntegrationWarning, ZeroDivisionError, OverflowError):
                pass
        warnings.warn(f"quadrature failed for {self!r}; using Monte Carlo", QuadratureFallback)
        rng = np.random.default_rng(0)
        z = np.asarray(self.sample(rng, 1_000_000), dtype=float)
        keep = np.ones(z.shape, bool)
        if lo is not None:
            keep &= z > lo
        if hi is not None:
            keep &= z < hi
        vals = np.array([fn(x) for x in z[keep]]) if keep.any() else np.zeros(1)
        return float(vals.sum() / z.size)

    def moment(self, order: float, flavor: str = "raw") -> float:
        """E Z^k, E|Z|^k or E(Z^+)^k. Divergent moments give inf."""
        if order <= 0:
            raise ValueError("order must be positive")
        if flavor not in _FLAVORS:
            raise ValueError(f"flavor must be one of {_FLAVORS}")
        lo, hi = self.support()
        if flavor == "positive_part" and hi <= 0:
            return 0.0
        if flavor == "raw" and not _is_int(order) and lo < 0:
            raise ValueError("non-integer raw moment of a law with negative support")
        if order >= self._relevant_tail(flavor):
            return INF
        val = self._moment_closed(order, flavor)
        if val is not None:
            return float(val)
        if flavor == "raw":
            return self.expect(lambda x: x ** order)
        if flavor == "absolute":
            return self.expect(lambda x: abs(x) ** order)
        return self.expect(lambda x: x ** order, lo=0.0)

    def _relevant_tail(self, flavor):
        return self.tail_index()

    def mgf(self, a: float) -> float:
        if a == 0:
            return 1.0
        if a > 0 and a >= self.mgf_boundary():
            return INF
        if a < 0 and self._lower_boundary() <= -a:
            return INF
        val = self._mgf_closed(a)
        if val is not None:
            return float(val)
        return self.expect(lambda x: math.exp(a * x))

    def _lower_boundary(self) -> float:
        return INF

    def cgf_slope(self, a: float) -> float:
        """d/da log E exp(aZ) = E[Z e^(aZ)] / E e^(aZ)."""
        val = self._cgf_slope_closed(a)
        if val is not None:
            return float(val)
        m = self.mgf(a)
        if not math.isfinite(m):
            return INF
        return self.expect(lambda x: x * math.exp(a * x)) / m

    def _cgf_slope_closed(self, a):
        return None

    def positive_part_mean(self, shift):
        """E (Z + shift)^+, vectorized over shift."""
        s = np.asarray(shift, dtype=float)
        out = np.vectorize(lambda c: self.expect(lambda x: x + c, lo=-c))(s)
        return out if out.ndim else float(out)

    def positive_part_mean_above(self, shift, threshold):
        """E[(Z + shift)^+ ; Z > threshold], vectorized.

        Used by the big-jump Spitzer estimator, where threshold is the largest
        earlier increment.
        """
        s, u = np.broadcast_arrays(np.asarray(shift, float), np.asarray(threshold, float))
        out = np.vectorize(lambda c, t: self.expect(lambda x: x + c, lo=max(-c, t)))(s, u)
        return out if out.ndim else float(out)

    def lower_partial(self, t):
        """E (t - Z)^+, vectorized."""
        t = np.asarray(t, float)
        out = np.vectorize(lambda v: self.expect(lambda x: v - x, hi=v))(t)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# concrete laws

@dataclass(frozen=True)
class Pareto(Distribution):
    """Classical Pareto law on [scale, inf) with tail (scale/w)^shape."""
    shape: float
    scale: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("pareto needs shape > 0 and scale > 0")

    def sample(self, rng, size=None):
        return self.scale * (1.0 + rng.pareto(self.shape, size))

    def cdf(self, z):
        z = np.asarray(z, float)
        with np.errstate(divide="ignore"):
            out = np.where(z > self.scale, 1.0 - (self.scale / np.maximum(z, self.scale)) ** self.shape, 0.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        if z < self.scale:
            return 0.0
        return self.shape * self.scale ** self.shape * z ** (-self.shape - 1)

    def support(self):
        return (self.scale, INF)

    def tail_index(self):
        return self.shape

    def mgf_boundary(self):
        return 0.0

    def _lower_boundary(self):
        return INF

    def _moment_closed(self, order, flavor):
        a, s = self.shape, self.scale
        return a * s ** order / (a - order)

    def truncated_power(self, j, v):
        """E[W^j ; W > v]."""
        a, s = self.shape, self.scale
        if j >= a:
            return INF
        v = max(v, s)
        return a * s ** a * v ** (j - a) / (a - j)

    def positive_part_mean(self, shift):
        # E(W - t)^+ with t = -shift
        t = -np.asarray(shift, float)
        a, s = self.shape, self.scale
        if a <= 1:
            out = np.full(t.shape, INF)
        else:
            tt = np.maximum(t, s)
            out = np.where(t <= s, a * s / (a - 1) - t, s ** a * tt ** (1 - a) / (a - 1))
        return out if out.ndim else float(out)

    def positive_part_mean_above(self, shift, threshold):
        # integral of (w - t) a s^a w^(-a-1) over w > v, v = max(t, u, s)
        t = -np.asarray(shift, float)
        u = np.asarray(threshold, float)
        a, s = self.shape, self.scale
        if a <= 1:
            return np.full(np.broadcast(t, u).shape, INF)
        v = np.maximum(np.maximum(t, u), s)
        out = s ** a * (a * v ** (1 - a) / (a - 1) - t * v ** (-a))
        return out if np.ndim(out) else float(out)

    def lower_partial(self, t):
        t = np.asarray(t, float)
        a, s = self.shape, self.scale
        # E(t - W)^+ = t P(W < t) - E[W; W < t]
        tt = np.maximum(t, s)
        if a == 1:
            part = s * np.log(tt / s)
        else:
            part = a * s / (a - 1) * (1 - (s / tt) ** (a - 1))
        out = np.where(t > s, t * (1 - (s / tt) ** a) - part, 0.0)
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "pareto", "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class Normal(Distribution):
    mu: float = 0.0
    sigma: float = 1.0
    kind = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("normal needs sigma > 0")

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def cdf(self, z):
        out = special.ndtr((np.asarray(z, float) - self.mu) / self.sigma)
        return out if np.ndim(out) else float(out)

    def pdf(self, z):
        u = (z - self.mu) / self.sigma
        return math.exp(-0.5 * u * u) / (self.sigma * math.sqrt(2 * math.pi))

    def support(self):
        return (-INF, INF)

    def _moment_closed(self, order, flavor):
        if flavor == "raw" and _is_int(order):
            k = int(order)
            # sum over even powers of the centred part
            return sum(math.comb(k, j) * self.mu ** (k - j) * self.sigma ** j * _odd_factorial(j)
                       for j in range(0, k + 1, 2))
        if self.mu == 0 and flavor in ("absolute", "positive_part"):
            full = self.sigma ** order * 2 ** (order / 2) * special.gamma((order + 1) / 2) / math.sqrt(math.pi)
            return full if flavor == "absolute" else full / 2
        return None

    def _mgf_closed(self, a):
        return math.exp(a * self.mu + 0.5 * (a * self.sigma) ** 2)

    def _cgf_slope_closed(self, a):
        return self.mu + self.sigma ** 2 * a

    def positive_part_mean(self, shift):
        m = self.mu + np.asarray(shift, float)
        u = m / self.sigma
        out = m * special.ndtr(u) + self.sigma * np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return out if np.ndim(out) else float(out)

    def lower_partial(self, t):
        return self.positive_part_mean_neg(t)

    def positive_part_mean_neg(self, t):
        # E(t - Z)^+ for the mirrored normal
        m = np.asarray(t, float) - self.mu
        u = m / self.sigma
        out = m * special.ndtr(u) + self.sigma * np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return out if np.ndim(out) else float(out)

    def to_dict(self):
        return {"kind": "normal", "mean": self.mu, "stdev": self.sigma}


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential needs rate > 0")

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def cdf(self, z):
        z = np.asarray(z, float)
        out = np.where(z > 0, -np.expm1(-self.rate * np.maximum(z, 0)), 0.0)
        return out if out.ndim else float(out)

    def pdf(self, z):
        return self.rate * math.exp(-self.rate * z) if z >= 0 else 0.0

    def support(self):
        return (0.0, INF)

    def mgf_boundary(self):
        return self.rate

    def _moment_closed(self, order, flavor):
        return special.gamma(order + 1) / self.rate ** order

    def _mgf_closed(self, a):
        return self.rate / (self.rate - a)

    def _cgf_slope_closed(self, a):
        return 1.0 / (self.rate - a) if a < self.rate else INF

    def positive_part_mean(self, shift):
        t = -np.asarray(shift, float)
        out = np.where(t <= 0, 1.0 / self.rate - t, np.exp(-self.rate * np.maximum(t, 0)) / self.rate)
        return out if out.ndim else float(out)

    def positive_part_mean_above(self, shift, threshold):
        t = -np.asarray(shift, float)
        v = np.maximum(np.maximum(t, np.asarray(threshold, float)), 0.0)
        out = np.exp(-self.rate * v) * (v - t + 1.0 / self.rate)
        return out if np.ndim(out) else float(out)

    def lower_partial(self, t):
        t = np.asarray(t, float)
        tt = np.maximum(t, 0)
        out = tt - (-np.expm1(-self.rate * tt)) / self.rate
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Laplace(Distribution):
    """Symmetric Laplace law with density exp(-|x|/scale)/(2 scale)."""
    scale: float = 1.0
    kind = "laplace"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("laplace needs scale > 0")

    def sample(self, rng, size=None):
        return rng.laplace(0.0, self.scale, size)

    def cdf(self, z):
        z = np.asarray(z, float) / self.scale
        out = np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0)), 1 - 0.5 * np.exp(-np.maximum(z, 0)))
        return out if out.ndim else float(out)

    def pdf(self, z):
        return math.exp(-abs(z) / self.scale) / (2 * self.scale)

    def support(self):
        return (-INF, INF)

    def mgf_boundary(self):
        return 1.0 / self.scale

    def _lower_boundary(self):
        return 1.0 / self.scale

    def _moment_closed(self, order, flavor):
        full = special.gamma(order + 1) * self.scale ** order
        if flavor == "absolute":
            return full
        if flavor == "positive_part":
            return full / 2
        k = int(order)
        return full if k % 2 == 0 else 0.0

    def _mgf_closed(self, a):
        return 1.0 / (1.0 - (self.scale * a) ** 2)

    def _cgf_slope_closed(self, a):
        s2 = self.scale ** 2
        return 2 * a * s2 / (1 - a * a * s2) if abs(a) * self.scale < 1 else INF

    def positive_part_mean(self, shift):
        c = np.asarray(shift, float)
        b = self.scale
        out = np.where(c >= 0, c + 0.5 * b * np.exp(-np.abs(c) / b), 0.5 * b * np.exp(-np.abs(c) / b))
        return out if out.ndim else float(out)

    def lower_partial(self, t):
        # symmetric law: E(t - Z)^+ = E(Z + t)^+
        return self.positive_part_mean(t)

    def to_dict(self):
        return {"kind": "laplace", "scale": self.scale}


@dataclass(frozen=True)
class TwoPoint(Distribution):
    """Z = a with probability p, otherwise b."""
    a: float
    b: float
    p: float = 0.5
    kind = "two_point"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("two_point needs p in [0, 1]")

    def sample(self, rng, size=None):
        u = rng.random(size)
        out = np.where(u < self.p, self.a, self.b)
        return out if np.ndim(out) else float(out)

    def atoms(self):
        return [(float(self.a), self.p), (float(self.b), 1.0 - self.p)]

    def cdf(self, z):
        z = np.asarray(z, float)
        out = self.p * (self.a < z) + (1 - self.p) * (self.b < z)
        return out if out.ndim else float(out)

    def cdf_weak(self, z):
        z = np.asarray(z, float)
        out = self.p * (self.a <= z) + (1 - self.p) * (self.b <= z)
        return out if out.ndim else float(out)

    def support(self):
        return (min(self.a, self.b), max(self.a, self.b))

    def _moment_closed(self, order, flavor):
        f = {"raw": lambda x: x ** order, "absolute": lambda x: abs(x) ** order,
             "positive_part": lambda x: max(x, 0.0) ** order}[flavor]
        return self.p * f(self.a) + (1 - self.p) * f(self.b)

    def _mgf_closed(self, a):
        return self.p * math.exp(a * self.a) + (1 - self.p) * math.exp(a * self.b)

    def positive_part_mean(self, shift):
        c = np.asarray(shift, float)
        out = self.p * np.maximum(self.a + c, 0) + (1 - self.p) * np.maximum(self.b + c, 0)
        return out if out.ndim else float(out)

    def positive_part_mean_above(self, shift, threshold):
        c = np.asarray(shift, float)
        u = np.asarray(threshold, float)
        out = (self.p * np.maximum(self.a + c, 0) * (self.a > u)
               + (1 - self.p) * np.maximum(self.b + c, 0) * (self.b > u))
        return out if np.ndim(out) else float(out)

    def lower_partial(self, t):
        t = np.asarray(t, float)
        out = self.p * np.maximum(t - self.a, 0) + (1 - self.p) * np.maximum(t - self.b, 0)
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "two_point", "a": self.a, "b": self.b, "p": self.p}


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float
    kind = "deterministic"

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def atoms(self):
        return [(float(self.value), 1.0)]

    def cdf(self, z):
        out = (np.asarray(z, float) > self.value).astype(float)
        return out if out.ndim else float(out)

    def cdf_weak(self, z):
        out = (np.asarray(z, float) >= self.value).astype(float)
        return out if out.ndim else float(out)

    def support(self):
        return (float(self.value), float(self.value))

    def _moment_closed(self, order, flavor):
        v = self.value
        return {"raw": v ** order if v >= 0 or _is_int(order) else None,
                "absolute": abs(v) ** order, "positive_part": max(v, 0.0) ** order}[flavor]

    def _mgf_closed(self, a):
        return math.exp(a * self.value)

    def positive_part_mean(self, shift):
        out = np.maximum(self.value + np.asarray(shift, float), 0.0)
        return out if out.ndim else float(out)

    def positive_part_mean_above(self, shift, threshold):
        c = np.asarray(shift, float)
        out = np.maximum(self.value + c, 0.0) * (self.value > np.asarray(threshold, float))
        return out if np.ndim(out) else float(out)

    def lower_partial(self, t):
        out = np.maximum(np.asarray(t, float) - self.value, 0.0)
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "deterministic", "value": self.value}


@dataclass(frozen=True)
class Shifted(Distribution):
    """base + offset. The base must not itself be shifted."""
    base: Distribution
    offset: float
    kind = "shifted"

    def __post_init__(self):
        if isinstance(self.base, Shifted):
            raise ValueError("shifted composes one level deep; use shift() to fold offsets")

    def sample(self, rng, size=None):
        return self.base.sample(rng, size) + self.offset

    def atoms(self):
        return [(x + self.offset, w) for x, w in self.base.atoms()]

    def cdf(self, z):
        return self.base.cdf(np.asarray(z, float) - self.offset)

    def cdf_weak(self, z):
        return self.base.cdf_weak(np.asarray(z, float) - self.offset)

    def pdf(self, z):
        return self.base.pdf(z - self.offset)

    def support(self):
        lo, hi = self.base.support()
        return (lo + self.offset, hi + self.offset)

    def tail_index(self):
        return self.base.tail_index()

    def _relevant_tail(self, flavor):
        # bounded-above support means the positive part has every moment
        if flavor == "positive_part" and self.support()[1] < INF:
            return INF
        return self.base.tail_index()

    def mgf_boundary(self):
        return self.base.mgf_boundary()

    def _lower_boundary(self):
        return self.base._lower_boundary()

    def _mgf_closed(self, a):
        m = self.base.mgf(a)
        return m * math.exp(a * self.offset)

    def _cgf_slope_closed(self, a):
        return self.base.cgf_slope(a) + self.offset

    def _moment_closed(self, order, flavor):
        c = self.offset
        if flavor == "raw" and _is_int(order):
            k = int(order)
            return sum(math.comb(k, j) * c ** (k - j) * (self.base.moment(j, "raw") if j else 1.0)
                       for j in range(k + 1))
        if isinstance(self.base, Pareto) and _is_int(order):
            k = int(order)
            w = self.base
            t = -c
            pos = sum(math.comb(k, j) * (-t) ** (k - j) * w.truncated_power(j, t) for j in range(k + 1))
            if flavor == "positive_part":
                return pos
            # E[(t - W)^k ; W < t] from the full moments minus the tail part
            neg = 0.0
            if t > w.scale:
                neg = sum(math.comb(k, j) * t ** (k - j) * (-1) ** j
                          * (w.moment(j, "raw") - w.truncated_power(j, t) if j else w.cdf(t))
                          for j in range(k + 1))
            return pos + neg
        return None

    def positive_part_mean(self, shift):
        return self.base.positive_part_mean(np.asarray(shift, float) + self.offset)

    def positive_part_mean_above(self, shift, threshold):
        return self.base.positive_part_mean_above(np.asarray(shift, float) + self.offset,
                                                  np.asarray(threshold, float) - self.offset)

    def lower_partial(self, t):
        return self.base.lower_partial(np.asarray(t, float) - self.offset)

    def to_dict(self):
        return {"kind": "shifted", "base": self.base.to_dict(), "offset": self.offset}


def shift(dist: Distribution, offset: float) -> Distribution:
    if offset == 0:
        return dist
    if isinstance(dist, Shifted):
        return Shifted(dist.base, dist.offset + offset)
    return Shifted(dist, offset)


_PARSERS = {
    "pareto": lambda d: Pareto(float(d["shape"]), float(d.get("scale", 1.0))),
    "normal": lambda d: Normal(float(d.get("mean", 0.0)), float(d.get("stdev", 1.0))),
    "exponential": lambda d: Exponential(float(d.get("rate", 1.0))),
    "laplace": lambda d: Laplace(float(d.get("scale", 1.0))),
    "two_point": lambda d: TwoPoint(float(d["a"]), float(d["b"]), float(d.get("p", 0.5))),
    "deterministic": lambda d: Deterministic(float(d["value"])),
    "shifted": lambda d: Shifted(from_dict(d["base"]), float(d["offset"])),
}


def from_dict(d: dict) -> Distribution:
    try:
        kind = d["kind"]
        return _PARSERS[kind](d)
    except KeyError as exc:
        raise ValueError(f"bad distribution description {d!r}: missing {exc}") from None


# ---------------------------------------------------------------------------
# residual mean condition

@dataclass
class ResidualBound:
    b: float
    argmin: float
    y_max: float
    tail_note: str
    grid_size: int = field(default=0)


def conditional_overshoot(dist: Distribution, y):
    """E[Y + y | Y + y <= 0] on an array of y."""
    t = -np.asarray(y, float)
    if isinstance(dist, Normal):
        # log-space Mills ratio keeps the far tail finite
        u = (t - dist.mu) / dist.sigma
        logphi = -0.5 * u * u - 0.5 * math.log(2 * math.pi)
        ratio = np.exp(logphi - special.log_ndtr(u))
        return dist.mu - t - dist.sigma * ratio
    prob = np.asarray(dist.cdf_weak(t), float)
    lp = np.asarray(dist.lower_partial(t), float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(prob > 0, -lp / prob, np.nan)


def residual_lower_bound(dist: Distribution, y_grid=None) -> ResidualBound:
    """Smallest b >= 0 with E[Y + y | Y + y <= 0] >= -b on the grid.

    The default grid is y in [-1, 50] with step 0.01. What happens past the
    last grid point is stated per family in ``tail_note``; for unknown
    families the grid end is the documented cutoff and nothing is claimed.
    """
    lo, _ = dist.support()
    if lo > -INF:
        raise ValueError("residual condition only needed for laws unbounded below")
    mean = dist.mean()
    if abs(mean) > 1e-9:
        raise ValueError(f"residual condition needs a centred law, got mean {mean}")
    if y_grid is None:
        y_grid = np.round(np.arange(-100, 5001) * 0.01, 10)
    y = np.asarray(y_grid, float)
    vals = conditional_overshoot(dist, y)
    if not np.all(np.isfinite(vals)):
        bad = y[~np.isfinite(vals)][0]
        raise ValueError(f"conditional mean diverges at y={bad}")
    i = int(np.argmin(vals))
    if isinstance(dist, Laplace):
        note = f"lower tail is memoryless: conditional mean equals {-dist.scale} for every y >= 0"
    elif isinstance(dist, Normal):
        note = "conditional mean tends to 0 as y grows (Mills ratio)"
    else:
        note = f"grid cutoff at y={y.max()}; no claim beyond it"
    return ResidualBound(b=max(0.0, -float(vals[i])), argmin=float(y[i]), y_max=float(y.max()),
                         tail_note=note, grid_size=y.size)
