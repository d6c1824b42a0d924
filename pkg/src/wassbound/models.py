"""Markov chains written as random mappings.

A model draws the randomness of a batch of transitions with ``draw`` and
applies it with ``apply(x, xi) -> (x_next, lip)``, where ``lip`` is the
local Lipschitz factor of the sampled map at x. Both are vectorized over a
leading batch axis; ``step`` is the one-transition convenience wrapper.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _rng
from .distributions import Distribution, from_dict as dist_from_dict, shift


def _dist(d):
    return d.to_dict() if isinstance(d, Distribution) else d


class ChainModel:
    kind = "abstract"
    state_dim = 1

    def draw(self, rng: np.random.Generator, shape):
        raise NotImplementedError

    def apply(self, x, xi):
        raise NotImplementedError

    def step(self, x, rng):
        xi = self.draw(rng, (1,))
        x = np.asarray(x, float)[None, ...]
        y, lip = self.apply(x, xi)
        return (float(y[0]) if self.state_dim == 1 else y[0]), float(lip[0])

    def zero(self):
        return 0.0 if self.state_dim == 1 else np.zeros(self.state_dim)

    def to_dict(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# single-server queues

@dataclass(frozen=True)
class GG1(ChainModel):
    """Lindley recursion x -> (x + Z)^+ ; the map has slope I(x + Z >= 0)."""
    Z: Distribution
    kind = "gg1"

    def draw(self, rng, shape):
        return np.asarray(self.Z.sample(rng, shape), float)

    def apply(self, x, z):
        y = x + z
        return np.maximum(y, 0.0), (y >= 0).astype(float)

    def to_dict(self):
        return {"kind": "gg1", "Z": _dist(self.Z)}


@dataclass(frozen=True)
class GG1HeavyTraffic(ChainModel):
    """Lindley recursion with increments Y - delta."""
    Y: Distribution
    delta: float
    kind = "gg1_ht"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("heavy-traffic model needs delta > 0")

    @property
    def Z(self):
        return shift(self.Y, -self.delta)

    def time_index(self, n: float) -> int:
        # n / delta^2, rounded down
        return int(math.floor(n / self.delta ** 2 + 1e-9))

    def draw(self, rng, shape):
        return np.asarray(self.Y.sample(rng, shape), float) - self.delta

    def apply(self, x, z):
        y = x + z
        return np.maximum(y, 0.0), (y >= 0).astype(float)

    def to_dict(self):
        return {"kind": "gg1_ht", "Y": _dist(self.Y), "delta": self.delta}


# ---------------------------------------------------------------------------
# reflected Brownian motion observed every s time units

@dataclass(frozen=True)
class RBMSkeleton(ChainModel):
    """x -> x + Y_s + (L_s - x)^+ with Y_u = -r u + sigma B_u, L_s = -min Y.

    ``scheme="exact"`` samples the endpoint and then the minimum of the
    Brownian bridge in closed form. ``scheme="euler"`` walks ``substeps``
    Gaussian increments and takes the grid minimum, which is biased upward
    by O(sqrt(s/substeps)).
    """
    r: float
    sigma: float
    s: float
    substeps: int = 1024
    scheme: str = "exact"
    kind = "rbm_skeleton"

    def __post_init__(self):
        if not (self.r > 0 and self.sigma > 0 and self.s > 0):
            raise ValueError("rbm_skeleton needs r, sigma, s > 0")
        if self.scheme not in ("exact", "euler"):
            raise ValueError("scheme is 'exact' or 'euler'")

    def draw(self, rng, shape):
        shape = tuple(shape)
        if self.scheme == "exact":
            y = rng.normal(-self.r * self.s, self.sigma * math.sqrt(self.s), shape)
            u = rng.random(shape)
            # bridge minimum given the endpoint: P(min < a) = exp(-2a(a-y)/(sigma^2 s))
            lo = 0.5 * (y - np.sqrt(y * y - 2 * self.sigma ** 2 * self.s * np.log1p(-u)))
            return y, -lo
        h = self.s / self.substeps
        pos = np.zeros(shape)
        low = np.zeros(shape)
        for _ in range(self.substeps):
            pos += rng.normal(-self.r * h, self.sigma * math.sqrt(h), shape)
            np.minimum(low, pos, out=low)
        return pos, -low

    def draw_pair(self, rng, shape):
        """Euler draws at ``substeps`` and at twice that, from the same Brownian path.

        The fine increments are summed in pairs to build the coarse walk.
        """
        shape = tuple(shape)
        h = self.s / (2 * self.substeps)
        fine_pos = np.zeros(shape)
        fine_low = np.zeros(shape)
        coarse_low = np.zeros(shape)
        for _ in range(self.substeps):
            fine_pos += rng.normal(-self.r * h, self.sigma * math.sqrt(h), shape)
            np.minimum(fine_low, fine_pos, out=fine_low)
            fine_pos += rng.normal(-self.r * h, self.sigma * math.sqrt(h), shape)
            np.minimum(fine_low, fine_pos, out=fine_low)
            np.minimum(coarse_low, fine_pos, out=coarse_low)
        return (fine_pos.copy(), -coarse_low), (fine_pos, -fine_low)

    def apply(self, x, xi):
        y, L = xi
        return x + y + np.maximum(L - x, 0.0), (x >= L).astype(float)

    def to_dict(self):
        return {"kind": "rbm_skeleton", "r": self.r, "sigma": self.sigma, "s": self.s,
                "substeps": self.substeps, "scheme": self.scheme}


# ---------------------------------------------------------------------------
# fluid networks

def tandem_drain(rates, x, t):
    """Workload left in a tandem fluid line after draining for time t.

    Cumulative departures obey D_0 = 0, D_i = min(r_i t, x_i + D_{i-1}).
    Each D_{i-1} is concave in t, which makes the reflection map collapse to
    this two-term minimum, so the result matches the event-driven drain
    (an empty station forwards min(inflow, own rate)). Vectorized over
    leading axes of x; t broadcasts against them.
    """
    r = np.asarray(rates, float)
    x = np.asarray(x, float)
    if np.any(x < 0):
        raise ValueError("workloads must be nonnegative")
    t = np.asarray(t, float)[..., None] if np.ndim(t) else float(t)
    cap = r * t
    out = np.empty(np.broadcast_shapes(x.shape, np.shape(cap)))
    prev = np.zeros(out.shape[:-1])
    for i in range(r.size):
        ci = cap[..., i] if np.ndim(cap) else cap
        d = np.minimum(ci, x[..., i] + prev)
        out[..., i] = x[..., i] + prev - d
        prev = d
    return out


def total_workload_rate_check(rates, x_samples, t_grid, tol: float = 1e-9) -> dict:
    """Check that the total workload falls at rate min(rates) until empty."""
    r_star = float(np.min(rates))
    xs = np.atleast_2d(np.asarray(x_samples, float))
    ts = np.asarray(sorted(t_grid), float)
    bad = []
    for x in xs:
        e0 = x.sum()
        for t in ts:
            got = tandem_drain(rates, x, t).sum()
            want = max(e0 - r_star * t, 0.0)
            if abs(got - want) > tol * max(1.0, e0):
                bad.append((x.tolist(), float(t), float(got), float(want)))
    return {"r_star": r_star, "checked": int(xs.shape[0] * ts.size), "violations": bad, "ok": not bad}


@dataclass(frozen=True)
class Tandem(ChainModel):
    """Tandem fluid line observed right after each arrival (arrivals join station 1)."""
    rates: tuple
    T: Distribution
    Z: Distribution
    z_scale: float = 1.0
    kind = "tandem"

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(v) for v in self.rates))
        if min(self.rates) <= 0:
            raise ValueError("tandem rates must be positive")

    @property
    def state_dim(self):
        return len(self.rates)

    @property
    def r_star(self):
        return min(self.rates)

    def draw(self, rng, shape):
        z = np.asarray(self.Z.sample(rng, shape), float) * self.z_scale
        t = np.asarray(self.T.sample(rng, shape), float)
        return z, t

    def apply(self, x, xi):
        z, t = xi
        unreflected = x.sum(-1) - self.r_star * t
        w = tandem_drain(self.rates, x, t)
        w[..., 0] += z
        return w, (unreflected >= 0).astype(float)

    def to_dict(self):
        return {"kind": "tandem", "rates": list(self.rates), "T": _dist(self.T), "Z": _dist(self.Z),
                "z_scale": self.z_scale}


def priority_drain(x, capacity):
    """Serve classes in index order with total capacity; works on object arrays too."""
    c = np.cumsum(x, axis=-1)
    left = c - np.asarray(capacity)[..., None]
    return np.minimum(np.maximum(left, 0 * left), x)


@dataclass(frozen=True)
class Priority(ChainModel):
    """One server at rate r, d classes, lowest index served first.

    ``order="after_arrival"`` records the workload right after each arrival,
    X' = drain(X, rT) + Z. ``order="before_service"`` records it just after
    each service period, X' = drain(X + Z, rT). Totals follow the Lindley
    recursion in the matching form.
    """
    r: float
    T: Distribution
    Z: tuple
    order: str = "after_arrival"
    kind = "priority"

    def __post_init__(self):
        object.__setattr__(self, "Z", tuple(self.Z))
        if not self.r > 0:
            raise ValueError("priority server rate must be positive")
        if self.order not in ("after_arrival", "before_service"):
            raise ValueError("order is 'after_arrival' or 'before_service'")

    @property
    def state_dim(self):
        return len(self.Z)

    def draw(self, rng, shape):
        shape = tuple(shape)
        z = np.stack([np.asarray(d.sample(rng, shape), float) for d in self.Z], axis=-1)
        t = np.asarray(self.T.sample(rng, shape), float)
        return z, t

    def apply(self, x, xi):
        z, t = xi
        cap = self.r * t
        if self.order == "after_arrival":
            lip = ((x.sum(-1) - cap) >= 0)
            y = priority_drain(x, cap) + z
        else:
            lip = ((x.sum(-1) + z.sum(-1) - cap) >= 0)
            y = priority_drain(x + z, cap)
        return y, np.asarray(lip, dtype=float)

    def to_dict(self):
        return {"kind": "priority", "r": self.r, "T": _dist(self.T), "Z": [_dist(d) for d in self.Z],
                "order": self.order}


# ---------------------------------------------------------------------------
# tree networks via their tandem decomposition

@dataclass(frozen=True)
class TreeSpec:
    K: int
    L: int
    rates: tuple          # by node index 0 .. sum_{l<=L} K^l - 1
    p: dict               # node -> routing vector over its K children

    @property
    def n_nodes(self):
        return sum(self.K ** l for l in range(self.L + 1))

    def route(self, node):
        v = self.p.get(node)
        if v is None:
            return (1.0,) if self.K == 1 else tuple([1.0 / self.K] * self.K)
        return tuple(v)

    def to_dict(self):
        return {"K": self.K, "L": self.L, "rates": list(self.rates),
                "p": {str(k): list(v) for k, v in self.p.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["K"]), int(d["L"]), tuple(float(v) for v in d["rates"]),
                   {int(k): tuple(float(u) for u in v) for k, v in d.get("p", {}).items()})


@dataclass(frozen=True)
class PathTandem:
    path: tuple           # b_1 .. b_L
    nodes: tuple          # a_0 .. a_L
    rates: tuple
    input_scale: float


def tree_decompose(tree: TreeSpec, Z: Distribution, T: Distribution) -> list[PathTandem]:
    """Split a K-ary tree into K^L independent tandem lines.

    Node a's j-th child is a*K + j (j = 1..K). Along a root-to-leaf path the
    station at depth l gets rate r_{a_l} times the routing probabilities
    below it, and the line is fed the share of the input that follows the
    path.
    """
    K, L = tree.K, tree.L
    if len(tree.rates) != tree.n_nodes:
        raise ValueError(f"need {tree.n_nodes} rates, got {len(tree.rates)}")
    load = Z.mean() / T.mean()
    out = []
    for b in itertools.product(range(1, K + 1), repeat=L):
        nodes = [0]
        probs = []
        for bj in b:
            probs.append(tree.route(nodes[-1])[bj - 1])
            nodes.append(nodes[-1] * K + bj)
        for l in range(L + 1):
            if not load * math.prod(probs[:l]) < tree.rates[nodes[l]]:
                raise ValueError(f"stability fails on path {b} at station {nodes[l]}")
        rates = tuple(tree.rates[nodes[l]] * math.prod(probs[l:]) for l in range(L + 1))
        out.append(PathTandem(tuple(b), tuple(nodes), rates, math.prod(probs)))
    return out


@dataclass(frozen=True)
class TreeNetwork(ChainModel):
    """All path tandems driven by the same (Z, T); state is (paths, L+1)."""
    tree: TreeSpec
    T: Distribution
    Z: Distribution
    kind = "tree"

    @cached_property
    def paths(self):
        return tree_decompose(self.tree, self.Z, self.T)

    @property
    def state_dim(self):
        return len(self.paths) * (self.tree.L + 1)

    def zero(self):
        return np.zeros((len(self.paths), self.tree.L + 1))

    def draw(self, rng, shape):
        return np.asarray(self.Z.sample(rng, shape), float), np.asarray(self.T.sample(rng, shape), float)

    def apply(self, x, xi):
        z, t = xi
        paths = self.paths
        y = np.empty_like(x)
        lip = np.ones(x.shape[0])
        for i, pt in enumerate(paths):
            xi_ = x[:, i, :]
            unref = xi_.sum(-1) - min(pt.rates) * t
            w = tandem_drain(pt.rates, xi_, t)
            w[:, 0] += pt.input_scale * z
            y[:, i, :] = w
            lip = np.minimum(lip, unref >= 0)
        return y, lip

    def observe(self, x):
        """Aggregate path workloads onto tree nodes."""
        nodes = np.zeros(x.shape[:-2] + (self.tree.n_nodes,))
        for i, pt in enumerate(self.paths):
            for l, a in enumerate(pt.nodes):
                nodes[..., a] += x[..., i, l]
        return nodes

    def to_dict(self):
        return {"kind": "tree", "tree": self.tree.to_dict(), "T": _dist(self.T), "Z": _dist(self.Z)}


# ---------------------------------------------------------------------------
# stochastic gradient descent and friends

@dataclass(frozen=True)
class SGDNonStronglyConvex(ChainModel):
    """Gradient sgn(x)|x|^(m-1) inside (-1, 1), x outside."""
    m: float
    alpha: float
    Z: Distribution
    kind = "sgd_nsc"

    def __post_init__(self):
        if not self.m >= 3:
            raise ValueError("sgd_nsc needs m >= 3")
        if not 0 < self.alpha < 1:
            raise ValueError("step size must lie in (0, 1)")

    def draw(self, rng, shape):
        return np.asarray(self.Z.sample(rng, shape), float)

    def apply(self, x, z):
        a, m = self.alpha, self.m
        ax = np.abs(x)
        inside = ax < 1
        grad = np.where(inside, np.sign(x) * ax ** (m - 1), x)
        lip = np.where(inside, np.abs(1 - a * (m - 1) * ax ** (m - 2)), 1 - a)
        return x - a * (grad + z), lip

    def to_dict(self):
        return {"kind": "sgd_nsc", "m": self.m, "alpha": self.alpha, "Z": _dist(self.Z)}


@dataclass(frozen=True)
class SGDHeavyTail(ChainModel):
    """Gradient x inside (-1, 1), sgn(x)|x|^(beta-1) outside."""
    beta: float
    alpha: float
    Z: Distribution
    kind = "sgd_ht"

    def __post_init__(self):
        if not 1 <= self.beta < 2:
            raise ValueError("sgd_ht needs beta in [1, 2)")
        if not 0 < self.alpha < 1:
            raise ValueError("step size must lie in (0, 1)")

    def draw(self, rng, shape):
        return np.asarray(self.Z.sample(rng, shape), float)

    def apply(self, x, z):
        a, b = self.alpha, self.beta
        ax = np.abs(x)
        inside = ax < 1
        safe = np.maximum(ax, 1.0)
        grad = np.where(inside, x, np.sign(x) * safe ** (b - 1))
        lip = np.where(inside, 1 - a, np.abs(1 - a * (b - 1) * safe ** (b - 2)))
        return x - a * (grad + z), lip

    def to_dict(self):
        return {"kind": "sgd_ht", "beta": self.beta, "alpha": self.alpha, "Z": _dist(self.Z)}


@dataclass(frozen=True)
class AR1(ChainModel):
    alpha: float
    Y: Distribution
    kind = "ar1"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("ar1 needs alpha in (0, 1)")

    def draw(self, rng, shape):
        return np.asarray(self.Y.sample(rng, shape), float)

    def apply(self, x, y):
        return (1 - self.alpha) * x + self.alpha * y, np.full(np.shape(x), 1 - self.alpha)

    def to_dict(self):
        return {"kind": "ar1", "alpha": self.alpha, "Y": _dist(self.Y)}


@dataclass(frozen=True)
class SGDMomentum(ChainModel):
    """Heavy-ball SGD on x^2/2; demo only, no certificate is attached.

    State (x, v): v' = beta v - alpha (x + Z), x' = x + v'. The reported
    factor is the L1 operator norm of the (constant) Jacobian.
    """
    alpha: float
    beta: float
    Z: Distribution
    kind = "sgd_momentum"
    state_dim = 2

    def draw(self, rng, shape):
        return np.asarray(self.Z.sample(rng, shape), float)

    def apply(self, x, z):
        a, b = self.alpha, self.beta
        v = b * x[..., 1] - a * (x[..., 0] + z)
        out = np.stack([x[..., 0] + v, v], axis=-1)
        lip = max(abs(1 - a) + a, abs(b) + abs(b))
        return out, np.full(out.shape[:-1], lip)

    def to_dict(self):
        return {"kind": "sgd_momentum", "alpha": self.alpha, "beta": self.beta, "Z": _dist(self.Z)}


# ---------------------------------------------------------------------------
# forward simulation and serialization

def simulate_marginals(model: ChainModel, x0, ns, reps: int, seed: int, block: int = 10_000) -> dict:
    """States at each n in ns from reps independent forward paths."""
    ns = sorted(set(int(k) for k in ns))
    out = {n: [] for n in ns}
    for bi, size in _rng.blocks(reps, block):
        rng = _rng.generator(seed, _rng.tag("forward"), bi)
        x = np.broadcast_to(np.asarray(x0, float), (size,) + np.shape(x0)).copy()
        k = 0
        for n in ns:
            while k < n:
                x, _ = model.apply(x, model.draw(rng, (size,)))
                k += 1
            out[n].append(x.copy())
    return {n: np.concatenate(v, axis=0) for n, v in out.items()}


def simulate_marginal(model: ChainModel, x0, n: int, reps: int, seed: int) -> np.ndarray:
    return simulate_marginals(model, x0, [n], reps, seed)[int(n)]


def model_from_dict(d: dict) -> ChainModel:
    kind = d.get("kind")
    D = dist_from_dict
    if kind == "gg1":
        return GG1(D(d["Z"]))
    if kind == "gg1_ht":
        return GG1HeavyTraffic(D(d["Y"]), float(d["delta"]))
    if kind == "rbm_skeleton":
        return RBMSkeleton(float(d["r"]), float(d["sigma"]), float(d["s"]), int(d.get("substeps", 1024)),
                           d.get("scheme", "exact"))
    if kind == "tandem":
        return Tandem(tuple(d["rates"]), D(d["T"]), D(d["Z"]), float(d.get("z_scale", 1.0)))
    if kind == "priority":
        return Priority(float(d["r"]), D(d["T"]), tuple(D(z) for z in d["Z"]), d.get("order", "after_arrival"))
    if kind == "tree":
        return TreeNetwork(TreeSpec.from_dict(d["tree"]), D(d["T"]), D(d["Z"]))
    if kind == "sgd_nsc":
        return SGDNonStronglyConvex(float(d["m"]), float(d["alpha"]), D(d["Z"]))
    if kind == "sgd_ht":
        return SGDHeavyTail(float(d["beta"]), float(d["alpha"]), D(d["Z"]))
    if kind == "ar1":
        return AR1(float(d["alpha"]), D(d["Y"]))
    if kind == "sgd_momentum":
        return SGDMomentum(float(d["alpha"]), float(d["beta"]), D(d["Z"]))
    raise ValueError(f"unknown model kind {kind!r}")
