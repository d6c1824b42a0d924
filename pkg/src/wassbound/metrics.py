"""Lyapunov weights, weighted interval distances and Wasserstein estimators.

On the line the weighted metric between x and y is the integral of V over
the interval between them, so every scalar Lyapunov family carries a closed
antiderivative. Vector states use the L1 ground metric and only coupling
upper bounds are produced there.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _rng
from .distributions import INF


# ---------------------------------------------------------------------------
# Lyapunov families

class Lyapunov:
    family = "abstract"
    scalar = True

    def __call__(self, x):
        raise NotImplementedError

    def antiderivative(self, x):
        raise NotImplementedError

    def floor(self, lo=0.0, hi=INF) -> float:
        """A positive lower bound of V on [lo, hi]."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PolyShift(Lyapunov):
    """|x + M|^m - offset + c.

    Powers below one are allowed because the heavy-tailed SGD certificate
    weights by |x|^(gamma - 1) with gamma - 1 in (0, 1].
    """
    m: float
    M: float = 0.0
    offset: float = 0.0
    c: float = 0.0
    family = "poly_shift"

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("poly_shift needs m > 0")
        if self.M < 0:
            raise ValueError("poly_shift needs M >= 0")

    def __call__(self, x):
        return np.abs(np.asarray(x, float) + self.M) ** self.m - self.offset + self.c

    def antiderivative(self, x):
        u = np.asarray(x, float) + self.M
        return np.sign(u) * np.abs(u) ** (self.m + 1) / (self.m + 1) + (self.c - self.offset) * np.asarray(x, float)

    def floor(self, lo=0.0, hi=INF):
        # |x+M|^m is smallest at the point of [lo, hi] nearest to -M
        z = min(max(-self.M, lo), hi)
        return float(abs(z + self.M) ** self.m - self.offset + self.c)

    def to_dict(self):
        return {"family": "poly_shift", "m": self.m, "M": self.M, "offset": self.offset, "c": self.c}


@dataclass(frozen=True)
class Wedge(Lyapunov):
    """delta (1 - |x|)^+ + 1."""
    delta: float
    family = "wedge"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("wedge needs delta > 0")

    def __call__(self, x):
        return self.delta * np.maximum(1 - np.abs(np.asarray(x, float)), 0) + 1

    def antiderivative(self, x):
        x = np.asarray(x, float)
        u = np.minimum(np.abs(x), 1.0)
        return x + self.delta * np.sign(x) * (u - u * u / 2)

    def floor(self, lo=-INF, hi=INF):
        return 1.0

    def to_dict(self):
        return {"family": "wedge", "delta": self.delta}


@dataclass(frozen=True)
class ExpSum(Lyapunov):
    """exp(a * sum(x)) on the nonnegative orthant."""
    a: float
    family = "exp_sum"
    scalar = False

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("exp_sum needs a > 0")

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.exp(self.a * (x.sum(-1) if x.ndim else x))

    def floor(self, lo=0.0, hi=INF):
        return 1.0

    def to_dict(self):
        return {"family": "exp_sum", "a": self.a}


@dataclass(frozen=True)
class Constant(Lyapunov):
    value: float = 1.0
    family = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("constant weight must be positive")

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value)) if np.ndim(x) else float(self.value)

    def antiderivative(self, x):
        return self.value * np.asarray(x, float)

    def floor(self, lo=-INF, hi=INF):
        return float(self.value)

    def to_dict(self):
        return {"family": "constant", "value": self.value}


def lyapunov_from_dict(d: dict) -> Lyapunov:
    fam = d.get("family")
    if fam == "poly_shift":
        return PolyShift(float(d["m"]), float(d.get("M", 0)), float(d.get("offset", 0)), float(d.get("c", 0)))
    if fam == "wedge":
        return Wedge(float(d["delta"]))
    if fam == "exp_sum":
        return ExpSum(float(d["a"]))
    if fam == "constant":
        return Constant(float(d.get("value", 1.0)))
    raise ValueError(f"unknown Lyapunov family {fam!r}")


def dv_interval(V: Lyapunov, x, y):
    """Integral of V between x and y (vectorized)."""
    if not V.scalar:
        raise ValueError(f"{V.family} is a multi-dimensional weight; no interval distance")
    F = V.antiderivative
    out = np.abs(F(y) - F(x))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# estimates and curves

class Estimate(NamedTuple):
    value: float
    stderr: float
    exact: bool = False


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


class _Accum:
    """Running sums for a vector of means, reduced in block order."""

    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.ss = np.zeros(shape)
        self.n = 0

    def add(self, rows):
        rows = np.asarray(rows, float)
        self.s += rows.sum(0)
        self.ss += (rows * rows).sum(0)
        self.n += rows.shape[0]

    def mean(self):
        return self.s / self.n

    def stderr(self):
        if self.n < 2:
            return np.zeros_like(self.s)
        var = (self.ss - self.s ** 2 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)


@dataclass
class Curve:
    n: np.ndarray
    value: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, int)
        self.value = np.asarray(self.value, float)
        self.stderr = np.asarray(self.stderr, float)

    def to_csv(self) -> str:
        rows = ["n,value,stderr"]
        rows += [f"{int(k)},{float(v)!r},{float(e)!r}" for k, v, e in zip(self.n, self.value, self.stderr)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Curve":
        lines = [ln for ln in text.strip().splitlines()[1:] if ln]
        cols = list(zip(*(ln.split(",") for ln in lines)))
        return cls([int(k) for k in cols[0]], [float(v) for v in cols[1]], [float(e) for e in cols[2]])

    def at(self, n: int) -> tuple[float, float]:
        i = int(np.flatnonzero(self.n == n)[0])
        return float(self.value[i]), float(self.stderr[i])


# ---------------------------------------------------------------------------
# one-step weighted distance

def _gg1_exact_edv(Z, V: PolyShift) -> float:
    # X1 = Z^+ from x0 = 0, so d_V = F(Z^+) - F(0) expands in positive-part moments
    m, M = int(V.m), V.M
    tot = 0.0
    for j in range(1, m + 2):
        tot += math.comb(m + 1, j) * M ** (m + 1 - j) * Z.moment(j, "positive_part")
    return tot / (m + 1) + (V.c - V.offset) * Z.moment(1, "positive_part")


def e_dv_one_step(model, x0, V: Lyapunov, reps: int = 100_000, seed: int = 0,
                  exact: bool = True) -> Estimate:
    """E d_V(x0, X1) for a scalar chain.

    A closed form is used for the Lindley recursion from empty with an
    integer-power polynomial weight; everything else is Monte Carlo.
    """
    if getattr(model, "state_dim", 1) != 1:
        raise ValueError("e_dv_one_step is for scalar chains")
    if (exact and model.kind == "gg1" and float(x0) == 0.0 and isinstance(V, PolyShift)
            and float(V.m).is_integer()):
        return Estimate(_gg1_exact_edv(model.Z, V), 0.0, True)
    rng = _rng.generator(seed, _rng.tag("e_dv"))
    xi = model.draw(rng, (reps,))
    x = np.full(reps, float(x0))
    x1, _ = model.apply(x, xi)
    val, se = _mean_se(dv_interval(V, x, x1))
    return Estimate(val, se, False)


# ---------------------------------------------------------------------------
# Wasserstein-1 on the line

def w1_empirical(a, b) -> float:
    """Exact W1 between two empirical measures by quantile coupling."""
    a = np.sort(np.asarray(a, float).ravel())
    b = np.sort(np.asarray(b, float).ravel())
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("empty sample")
    if na == nb:
        return float(np.abs(a - b).mean())
    # quantile breakpoints i/na and j/nb on the integer scale na*nb
    cuts = np.union1d(np.arange(na + 1) * nb, np.arange(nb + 1) * na)
    left = cuts[:-1]
    width = np.diff(cuts)
    ia = left // nb
    ib = left // na
    return float((np.abs(a[ia] - b[ib]) * width).sum() / (na * nb))


def w1_discrete_exact(p, q) -> float:
    """Exact W1 between finite laws given as (support, weights) pairs."""
    xp, wp = (np.asarray(v, float) for v in p)
    xq, wq = (np.asarray(v, float) for v in q)
    pts = np.union1d(xp, xq)
    if pts.size < 2:
        return 0.0
    Fp = np.array([wp[xp <= t].sum() for t in pts[:-1]]) / wp.sum()
    Fq = np.array([wq[xq <= t].sum() for t in pts[:-1]]) / wq.sum()
    return float((np.abs(Fp - Fq) * np.diff(pts)).sum())


def _norm(d):
    d = np.asarray(d, float)
    return np.abs(d) if d.ndim == 1 else np.abs(d).sum(axis=tuple(range(1, d.ndim)))


def _take(xi, k):
    return tuple(a[:, k] for a in xi) if isinstance(xi, tuple) else xi[:, k]


def _check_grid(ns, N):
    ns = np.arange(N + 1) if ns is None else np.asarray(sorted(set(int(k) for k in ns)), int)
    if ns.size == 0:
        raise ValueError("empty n grid")
    if ns.min() < 0 or ns.max() > N:
        raise ValueError("n grid must lie in [0, horizon]")
    return ns


def backward_states(model, x0, horizon: int, ns, rng, size: int):
    """Backward iterates Xbar_n (n in ns) and Xbar_N sharing f_1..f_n."""
    N = int(horizon)
    xi = model.draw(rng, (size, N))
    start = np.broadcast_to(np.asarray(x0, float), (size,) + np.shape(x0)).copy()
    x_full = start
    for k in range(N - 1, -1, -1):
        x_full, _ = model.apply(x_full, _take(xi, k))
    states = []
    for n in ns:
        x = start.copy()
        for k in range(n - 1, -1, -1):
            x, _ = model.apply(x, _take(xi, k))
        states.append(x)
    return states, x_full


def backward_distance_curve(model, x0, horizon: int, reps: int, seed: int, ns=None,
                            block: int = 2000, observe: bool = True) -> Curve:
    """E||Xbar_n - Xbar_N|| along the backward composition, for n in ns.

    Xbar_n applies f_n first and f_1 last; Xbar_N reuses f_1..f_n after the
    extra maps f_{n+1}..f_N. The gap bounds W(X_n, X_N) from above. Vector
    states use the L1 norm; models with ``observe`` (the tree) are compared
    after aggregation.
    """
    ns = _check_grid(ns, int(horizon))
    obs = getattr(model, "observe", None) if observe else None

    def run(bi, size):
        rng = _rng.generator(seed, _rng.tag("backward"), bi)
        states, x_full = backward_states(model, x0, horizon, ns, rng, size)
        rows = np.empty((size, ns.size))
        for j, x in enumerate(states):
            a, b = (obs(x), obs(x_full)) if obs else (x, x_full)
            rows[:, j] = _norm(a - b)
        return rows

    acc = _Accum(ns.size)
    for rows in _rng.map_blocks(run, reps, block):
        acc.add(rows)
    return Curve(ns, acc.mean(), acc.stderr())


def grouped_w1(a, b, groups: int = 20) -> tuple[float, float]:
    """Full-sample W1 with a standard error from disjoint groups."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    full = w1_empirical(a, b)
    idx = np.array_split(np.arange(a.size), groups)
    parts = [w1_empirical(a[g], b[g]) for g in idx if g.size]
    return full, float(np.std(parts, ddof=1) / math.sqrt(len(parts))) if len(parts) > 1 else 0.0


def backward_quantile_curve(model, x0, horizon: int, reps: int, seed: int, ns=None,
                            block: int = 5000, groups: int = 20) -> Curve:
    """Quantile-coupling W1 between the laws of Xbar_n and Xbar_N (scalar chains).

    The samples come from the backward composition, so the two empirical
    laws are strongly correlated and the estimate has a small noise floor.
    """
    if getattr(model, "state_dim", 1) != 1:
        raise ValueError("quantile coupling is for scalar chains")
    ns = _check_grid(ns, int(horizon))

    def run(bi, size):
        rng = _rng.generator(seed, _rng.tag("backward_quantile"), bi)
        return backward_states(model, x0, horizon, ns, rng, size)

    parts = _rng.map_blocks(run, reps, block)
    full = np.concatenate([p[1] for p in parts])
    vals, errs = [], []
    for j in range(ns.size):
        xn = np.concatenate([p[0][j] for p in parts])
        v, e = grouped_w1(xn, full, groups)
        vals.append(v)
        errs.append(e)
    return Curve(ns, vals, errs)


# ---------------------------------------------------------------------------
# Lindley recursion from empty: monotone and Spitzer estimators

def _lindley(model):
    if model.kind not in ("gg1", "gg1_ht"):
        raise ValueError("estimator needs a Lindley recursion")


def gg1_monotone_curve(model, ns, horizon: int, reps: int, seed: int, block: int = 50) -> Curve:
    """E Xbar_H - E Xbar_n with Xbar_n the running max of the random walk.

    Backward iteration of x -> (x+Z)^+ from 0 gives max(0, S_1, .., S_n),
    so the gap is pathwise nonnegative and its mean is W(X_n, X_H). All n
    share the same walk in each replication.
    """
    _lindley(model)
    ns = np.atleast_1d(np.asarray(ns, int))
    H = int(horizon)
    if ns.max() > H or ns.min() < 0:
        raise ValueError("n must lie in [0, horizon]")
    h90 = max(int(0.9 * H), 1)

    def run(bi, size):
        rng = _rng.generator(seed, _rng.tag("gg1_monotone"), bi)
        z = model.draw(rng, (size, H))
        run_max = np.maximum(np.maximum.accumulate(np.cumsum(z, axis=1), axis=1), 0.0)
        xh = run_max[:, -1]
        at = np.concatenate([np.zeros((size, 1)), run_max], axis=1)[:, ns]
        return xh[:, None] - at, np.stack([xh, run_max[:, h90 - 1]], 1)

    acc = _Accum(ns.size)
    top = _Accum(2)
    for gaps, ends in _rng.map_blocks(run, reps, block):
        acc.add(gaps)
        top.add(ends)
    m, se = top.mean(), top.stderr()
    if se[0] > 0 and abs(m[0] - m[1]) >= se[0]:
        warnings.warn(f"E X_n still moving over the last 10% of the horizon "
                      f"({m[1]:.4g} -> {m[0]:.4g}, stderr {se[0]:.2g})", RuntimeWarning)
    return Curve(ns, acc.mean(), acc.stderr())


def gg1_monotone_w1(model, n: int, horizon: int, reps: int, seed: int, block: int = 50) -> Estimate:
    c = gg1_monotone_curve(model, [n], horizon, reps, seed, block)
    return Estimate(float(c.value[0]), float(c.stderr[0]))


class SpitzerEstimate(NamedTuple):
    value: float
    stderr: float
    truncated: bool


def spitzer_curve(model, ns, k_max: int, reps: int, seed: int, method: str = "plain",
                  block: int = 500) -> tuple[Curve, np.ndarray, bool]:
    """Truncated Spitzer series sum_{k=n+1}^{k_max} E S_k^+ / k.

    ``method="plain"`` averages S_k^+ over simulated walks. ``"big_jump"``
    uses exchangeability: E S_k^+ = k E[(Z_k + S_{k-1})^+ ; Z_k beats every
    earlier increment], with the inner expectation in closed form. The
    second route stays accurate when the series is driven by one rare large
    increment (heavy tails), which the plain average mostly misses.

    Returns (curve over ns, per-k term means, truncation flag).
    """
    _lindley(model)
    Z = model.Z
    if Z.mean() >= 0:
        raise ValueError("Spitzer series needs increments with negative mean")
    if method not in ("plain", "big_jump"):
        raise ValueError(f"unknown method {method!r}")
    if method == "big_jump" and Z.is_discrete:
        raise ValueError("big_jump route needs a continuous law (ties break exchangeability)")
    ns = np.atleast_1d(np.asarray(ns, int))
    K = int(k_max)
    ks = np.arange(1, K + 1)

    def run(bi, size):
        rng = _rng.generator(seed, _rng.tag("spitzer_" + method), bi)
        z = model.draw(rng, (size, K))
        s = np.cumsum(z, axis=1)
        if method == "plain":
            t = np.maximum(s, 0.0) / ks
        else:
            prev_s = np.concatenate([np.zeros((size, 1)), s[:, :-1]], axis=1)
            prev_m = np.concatenate([np.full((size, 1), -INF), np.maximum.accumulate(z, axis=1)[:, :-1]], axis=1)
            t = np.asarray(Z.positive_part_mean_above(prev_s, prev_m), float)
        tail = np.cumsum(t[:, ::-1], axis=1)[:, ::-1]       # tail[:, j] = sum over k > j
        tail = np.concatenate([tail, np.zeros((size, 1))], axis=1)
        return tail[:, np.minimum(ns, K)], t

    acc = _Accum(ns.size)
    terms = _Accum(K)
    for tails, t in _rng.map_blocks(run, reps, block):
        acc.add(tails)
        terms.add(t)
    tm = terms.mean()
    total = tm.sum()
    truncated = bool(total > 0 and tm[-1] > 1e-3 * total)
    return Curve(ns, acc.mean(), acc.stderr()), tm, truncated


def spitzer_w1(model, n: int, k_max: int, reps: int, seed: int, method: str = "plain") -> SpitzerEstimate:
    c, _, trunc = spitzer_curve(model, [n], k_max, reps, seed, method)
    return SpitzerEstimate(float(c.value[0]), float(c.stderr[0]), trunc)


def ht_scaled_distance(model, ns, horizon_scaled: float, reps: int, seed: int, block: int = 50) -> Curve:
    """delta * W(X_{n/delta^2}, X_inf) for the heavy-traffic queue.

    The stationary end is approximated by scaled time ``horizon_scaled``;
    each n is mapped to step n/delta^2 rounded down.
    """
    if model.kind != "gg1_ht":
        raise ValueError("needs a heavy-traffic queue model")
    steps = [model.time_index(n) for n in ns]
    H = model.time_index(horizon_scaled)
    c = gg1_monotone_curve(model, steps, H, reps, seed, block)
    return Curve(np.asarray(ns, int), model.delta * c.value, model.delta * c.stderr)


def forward_quantile_curve(model, x0, ns, horizon: int, reps: int, seed: int, groups: int = 20) -> Curve:
    """W1 between forward marginals at n and at the horizon, from the same paths."""
    from .models import simulate_marginals
    ns = _check_grid(ns, int(horizon))
    marg = simulate_marginals(model, x0, list(ns) + [int(horizon)], reps, seed)
    end = marg[int(horizon)]
    vals, errs = [], []
    for n in ns:
        v, e = grouped_w1(marg[int(n)], end, groups)
        vals.append(v)
        errs.append(e)
    return Curve(ns, vals, errs)


# ---------------------------------------------------------------------------
# steady-state variance

class BatchMeans(NamedTuple):
    sigma2: float
    stderr: float
    batches: int
    chains: int
    mean: float


def batch_means(model, g, x0, warmup: int, n_batches: int, batch_len: int, seed: int,
                chains: int = 1) -> BatchMeans:
    """Batch-means estimate of the asymptotic variance of sum g(X_k)/sqrt(n).

    ``chains`` independent runs are advanced together; each contributes
    ``n_batches`` non-overlapping batch means after its own warm-up, and the
    per-chain estimates are averaged (their spread gives the stderr).
    """
    if n_batches < 30:
        warnings.warn(f"only {n_batches} batches; the variance estimate is unreliable", RuntimeWarning)
    rng = _rng.generator(seed, _rng.tag("batch_means"))
    x = np.broadcast_to(np.asarray(x0, float), (chains,) + np.shape(x0)).copy()
    for _ in range(warmup):
        x, _ = model.apply(x, model.draw(rng, (chains,)))
    means = np.empty((chains, n_batches))
    for j in range(n_batches):
        xi = model.draw(rng, (chains, batch_len))
        tot = np.zeros(chains)
        for k in range(batch_len):
            x, _ = model.apply(x, _take(xi, k))
            tot += g(x)
        means[:, j] = tot / batch_len
    per_chain = batch_len * means.var(axis=1, ddof=1)
    s2 = float(per_chain.mean())
    se = float(per_chain.std(ddof=1) / math.sqrt(chains)) if chains > 1 else \
        s2 * math.sqrt(2.0 / (n_batches - 1))
    return BatchMeans(s2, se, n_batches, chains, float(means.mean()))


def clt_e_term(model, g, V, x_stationary, mu_g: float, seed: int) -> Estimate:
    """E_pi |g(X0) - pi g| d_V(X0, X1) from stationary draws X0."""
    x0 = np.asarray(x_stationary, float)
    rng = _rng.generator(seed, _rng.tag("clt_e_term"))
    x1, _ = model.apply(x0, model.draw(rng, (x0.shape[0],)))
    w = np.abs(g(x0) - mu_g) * dv_interval(V, x0, x1)
    return Estimate(*_mean_se(w))


def rbm_substep_doubling(model, x0, ns, horizon: int, reps: int, seed: int, groups: int = 20):
    """Forward quantile curves for the Euler RBM at ``substeps`` and 2x ``substeps``.

    Both runs share one Brownian path per replication, so their difference
    isolates discretization error. Returns (coarse, fine).
    """
    ns = _check_grid(ns, int(horizon))
    keep = sorted(set(int(k) for k in ns) | {int(horizon)})
    rng = _rng.generator(seed, _rng.tag("rbm_doubling"))
    xc = np.full(reps, float(x0))
    xf = xc.copy()
    got_c, got_f = {}, {}
    for k in range(1, int(horizon) + 1):
        coarse, fine = model.draw_pair(rng, (reps,))
        xc, _ = model.apply(xc, coarse)
        xf, _ = model.apply(xf, fine)
        if k in keep:
            got_c[k], got_f[k] = xc.copy(), xf.copy()
    if 0 in keep:
        got_c[0] = got_f[0] = np.full(reps, float(x0))
    out = []
    for got in (got_c, got_f):
        pairs = [grouped_w1(got[int(n)], got[int(horizon)], groups) for n in ns]
        out.append(Curve(ns, [p[0] for p in pairs], [p[1] for p in pairs]))
    return tuple(out)
