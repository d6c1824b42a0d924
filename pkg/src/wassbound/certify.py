"""Contractive drift certificates.

A certificate records which inequality it asserts (for example
KV <= V - delta V^(1 - 1/b)), the Lyapunov weight, its parameters, and how
it was checked. Analytic certificates come from closed-form conditions;
``grid_numeric`` ones are Monte Carlo checks on a grid and are never a proof.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import _rng, bounds
from .distributions import Distribution, INF, residual_lower_bound
from .metrics import Estimate, Lyapunov, PolyShift, Wedge, lyapunov_from_dict, _gg1_exact_edv

KINDS = ("geometric", "polynomial", "semi_exponential")


class CertificateError(ValueError):
    """A certificate could not be built or failed verification."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report or {}


@dataclass
class Certificate:
    kind: str
    params: dict
    V: Lyapunov
    provenance: str = "analytic"
    inequality: str = ""
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        p = self.params
        if self.kind == "geometric" and not 0 < p["r"] < 1:
            raise ValueError("geometric certificate needs r in (0, 1)")
        if self.kind == "polynomial" and not (p["b"] >= 1 and p["delta"] > 0):
            raise ValueError("polynomial certificate needs b >= 1 and delta > 0")
        if self.kind == "semi_exponential" and not (p["delta"] > 0 and p["lambda"] > 0):
            raise ValueError("semi-exponential certificate needs delta, lambda > 0")
        if not self.inequality:
            self.inequality = {
                "geometric": "KV <= (1 - r) V",
                "polynomial": "KV <= V - delta V^(1 - 1/b)",
                "semi_exponential": "KV <= V - delta V / (log V)^lambda",
            }[self.kind]

    def w_bound(self, n, e_dv: float):
        """Bound on the U-weighted distance implied by this certificate."""
        p = self.params
        if self.kind == "geometric":
            return bounds.geometric_bound(n, p["r"], e_dv)
        if self.kind == "polynomial":
            return bounds.polynomial_bound(n, p["b"], e_dv)
        return bounds.semi_exponential_bound(n, p["delta"], p["lambda"], e_dv)

    def w_bound_unit(self, n, e_dv: float):
        """Bound on the plain distance, dividing by the constant floor of U."""
        if self.kind == "polynomial" and "U_const" in self.params:
            return np.asarray(self.w_bound(n, e_dv)) / self.params["U_const"]
        return self.w_bound(n, e_dv)

    def to_dict(self):
        return {"kind": self.kind, "params": _jsonable(self.params), "V": self.V.to_dict(),
                "provenance": self.provenance, "inequality": self.inequality,
                "report": _jsonable(self.report)}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d["params"]), lyapunov_from_dict(d["V"]), d.get("provenance", "analytic"),
                   d.get("inequality", ""), dict(d.get("report", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Monte Carlo kernel checks

def kv_estimate(model, V, x, reps: int = 10_000, seed: int = 0) -> Estimate:
    """E[lip * V(f(x))] by Monte Carlo."""
    rng = _rng.generator(seed, _rng.tag("kv"))
    xi = model.draw(rng, (reps,))
    xs = np.broadcast_to(np.asarray(x, float), (reps,) + np.shape(x)).copy()
    y, lip = model.apply(xs, xi)
    vals = lip * V(y)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(reps)))


def drift_power(delta: float, b: float, V):
    """U(x) = delta V(x)^(1 - 1/b)."""
    return lambda x: delta * np.asarray(V(x), float) ** (1 - 1 / b)


def check_cd_grid(model, V, U, grid, reps: int = 20_000, seed: int = 0, confidence: float = 0.99,
                  raise_on_fail: bool = False) -> dict:
    """Check KV <= V - U pointwise on a grid with one-sided normal bounds.

    The same noise draws are reused at every grid point (common random
    numbers), so neighbouring points are checked consistently. U is a
    callable on states, or None for U = 0.
    """
    grid = np.asarray(grid, float)
    z = stats.norm.ppf(confidence)
    rng = _rng.generator(seed, _rng.tag("cd_grid"))
    xi = model.draw(rng, (reps,))
    slack = np.empty(grid.shape[0])
    lower = np.empty(grid.shape[0])
    for i, x in enumerate(grid):
        xs = np.broadcast_to(x, (reps,) + x.shape).copy()
        y, lip = model.apply(xs, xi)
        vals = lip * V(y)
        kv = vals.mean()
        se = vals.std(ddof=1) / math.sqrt(reps)
        target = float(V(x)) - (float(U(x)) if U is not None else 0.0)
        slack[i] = target - kv
        lower[i] = slack[i] - z * se
    worst = int(np.argmin(lower))
    report = {"grid_min": float(grid.min()), "grid_max": float(grid.max()), "grid_size": int(grid.shape[0]),
              "reps": reps, "seed": seed, "confidence": confidence,
              "min_slack": float(slack.min()), "min_lower_bound": float(lower[worst]),
              "worst_point": grid[worst].tolist(), "accepted": bool(lower[worst] >= 0)}
    if raise_on_fail and not report["accepted"]:
        raise CertificateError(f"drift condition violated near x={grid[worst].tolist()}", report)
    return report


# ---------------------------------------------------------------------------
# G/G/1 drift: analytic expression and large-M search

def gg1_drift_value(Z: Distribution, m: int, M: float, x):
    """Lower bound on (V - KV) / V^(1 - 1/m) for V = (x + M)^m, Lindley step.

    P(x+Z<0) M^m/(x+M)^(m-1) + m E(x - (x+Z)^+) - sum_k C(m,k) E|Z|^k/(x+M)^(k-1).
    """
    m = int(m)
    x = np.asarray(x, float)
    moms = {k: Z.moment(k, "absolute") for k in range(2, m + 1)}
    if any(not math.isfinite(v) for v in moms.values()):
        return np.full(x.shape, -INF) if x.ndim else -INF
    u = x + M
    p_neg = np.asarray(Z.cdf(-x), float)
    val = p_neg * M ** m / u ** (m - 1) + m * (x - np.asarray(Z.positive_part_mean(x), float))
    for k in range(2, m + 1):
        val = val - math.comb(m, k) * moms[k] / u ** (k - 1)
    return val if val.ndim else float(val)


def gg1_drift_limit(Z: Distribution, m: int) -> float:
    """x -> infinity limit of gg1_drift_value: m (-E Z)."""
    return -int(m) * Z.mean()


def _gg1_edv_for(Z, m, M):
    return _gg1_exact_edv(Z, PolyShift(m, M))


def gg1_large_m_search(Z: Distribution, m: int, M_range=None, x_range=None, n_M: int = 81,
                       x_step: float | None = None) -> Certificate:
    """Pick the shift M minimizing the resulting n = 0 bound.

    For each M on a log grid, delta(M) is the smaller of the grid infimum of
    the drift expression and its x -> inf limit. The score is the n = 0
    value of (1/delta^m) prod m/k E d_V, which is what a hand search over
    (delta, M) would inspect.
    """
    m = int(m)
    mean = Z.mean()
    if not mean < 0:
        raise CertificateError(f"queue is unstable: E Z = {mean} >= 0")
    if not math.isfinite(Z.moment(m + 1, "positive_part")):
        raise CertificateError(f"E(Z^+)^{m + 1} is infinite")
    scale = Z.moment(1, "absolute")
    if M_range is None:
        M_range = (1e-2 * max(scale, 1e-3), 1e2 * max(scale, 1e-3))
    if x_range is None:
        x_range = (0.0, 100 * scale)
    step = x_step if x_step is not None else 0.01 * max(scale, 1e-3)
    xs = np.arange(x_range[0], x_range[1] + step / 2, step)
    limit = gg1_drift_limit(Z, m)
    best = None
    table = []
    for M in np.geomspace(M_range[0], M_range[1], n_M):
        d = min(float(np.min(gg1_drift_value(Z, m, M, xs))), limit)
        if not d > 0:
            table.append((float(M), d, INF))
            continue
        edv = _gg1_edv_for(Z, m, M)
        score = float(bounds.polynomial_bound_scaled(0, m, d, edv))
        table.append((float(M), d, score))
        key = (score, -d)
        if best is None or key < best[0]:
            best = (key, float(M), d, edv)
    if best is None:
        raise CertificateError("no M in range gives a positive drift constant",
                               {"table": table})
    _, M, d, edv = best
    return Certificate("polynomial", {"b": m, "delta": d, "U_const": d ** m, "M": M, "e_dv": edv},
                       PolyShift(m, M), provenance="analytic",
                       report={"x_grid": [float(xs[0]), float(xs[-1]), float(step)], "limit": limit,
                               "min_slack": d, "search": table})


def gg1_certificate(Z, m, M, delta, x_range=(0.0, 100.0), step=0.01) -> Certificate:
    """Check a hand-picked (delta, M) against the drift expression."""
    xs = np.arange(x_range[0], x_range[1] + step / 2, step)
    vals = gg1_drift_value(Z, m, M, xs)
    limit = gg1_drift_limit(Z, m)
    i = int(np.argmin(vals))
    report = {"x_grid": [float(xs[0]), float(xs[-1]), step], "grid_min": float(vals[i]),
              "argmin": float(xs[i]), "limit": limit, "min_slack": float(min(vals[i], limit) - delta)}
    if report["min_slack"] < 0:
        raise CertificateError(f"drift expression dips to {vals[i]:.6g} < {delta} at x={xs[i]:.4g}", report)
    return Certificate("polynomial", {"b": int(m), "delta": float(delta), "U_const": float(delta) ** m,
                                      "M": float(M), "e_dv": _gg1_edv_for(Z, m, M)},
                       PolyShift(m, M), provenance="analytic", report=report)


# ---------------------------------------------------------------------------
# heavy traffic

def ht_certificate(Y: Distribution, m: int, delta: float, y_grid=None) -> Certificate:
    """Large-M certificate for the queue with increments Y - delta."""
    m = int(m)
    if not 0 < delta < 1:
        raise CertificateError("delta must lie in (0, 1)")
    if abs(Y.mean()) > 1e-9:
        raise CertificateError("heavy-traffic input must be centred")
    if not math.isfinite(Y.moment(m + 1, "absolute")):
        raise CertificateError(f"E|Y|^{m + 1} is infinite")
    try:
        res = residual_lower_bound(Y, y_grid)
    except ValueError as exc:
        raise CertificateError(str(exc)) from None
    b = res.b
    pack = bounds.ht_moment_pack(m, b, Y)
    A = pack["E(2+|Y|)^m"]
    M = 4 * A * (1 + b) ** m / delta
    c = M ** (m - 1) * (1 + b) ** m
    if not 0 < c < M ** m:
        raise CertificateError("shift constant outside (0, M^m)")
    drift = m * delta / 4
    return Certificate("polynomial", {"b": m, "delta": drift, "M": M, "c": c, "b_resid": b,
                                      "residual_argmin": res.argmin, "moments": pack},
                       PolyShift(m, M, offset=M ** m, c=c), provenance="analytic",
                       inequality="KV <= V - (m delta/4) V^(1 - 1/m) on the nonnegative half-line",
                       report={"residual": res.__dict__})


# ---------------------------------------------------------------------------
# fluid networks: rate optimization

_GOLD = (math.sqrt(5) - 1) / 2


def golden_section(fn, lo: float, hi: float, tol: float = 1e-9, max_iter: int = 500):
    """Minimize a unimodal fn on [lo, hi]; returns (argmin, min)."""
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = fn(d)
    # compare with the endpoints, where the minimum of a monotone fn sits
    cands = [(fn(lo), lo), (fn(hi), hi), (fc, c), (fd, d)]
    x = (a + b) / 2
    cands.append((fn(x), x))
    v, x = min(cands)
    return x, v


def _as_list(Z):
    return list(Z) if isinstance(Z, (list, tuple)) else [Z]


def tandem_rate(Z, T: Distribution, r_star: float, zeta: float | None = None, z_scale: float = 1.0,
                tol: float = 1e-9) -> tuple[float, float]:
    """(a_star, lambda_star) minimizing E exp(a (Z - r_star T)) over [0, zeta].

    Z may be one law or a list of independent components whose sum is the
    arriving amount (the priority queue uses that). ``z_scale`` scales the
    input, as happens on a path of a decomposed tree.
    """
    comps = _as_list(Z)
    ez = z_scale * sum(d.mean() for d in comps)
    if not ez / T.mean() < r_star:
        raise ValueError(f"unstable: E Z / E T = {ez / T.mean():.6g} >= r_star = {r_star}")
    bound = min(d.mgf_boundary() for d in comps) / z_scale
    if zeta is None:
        zeta = 0.99 * bound if math.isfinite(bound) else None

    def phi(a):
        v = T.mgf(-a * r_star)
        for d in comps:
            v *= d.mgf(a * z_scale)
        return v

    if zeta is None:
        # no known boundary: grow the bracket until phi turns up
        zeta = 1.0
        while zeta < 2 ** 20 and phi(2 * zeta) < phi(zeta):
            zeta *= 2
        zeta *= 2
    if not math.isfinite(phi(zeta)) and zeta >= bound:
        raise ValueError(f"bracket end {zeta} lies outside the mgf strip")
    a, lam = golden_section(phi, 0.0, float(zeta), tol)
    a, lam = _polish(phi, comps, T, r_star, z_scale, a, lam, float(zeta))
    if not lam < 1:
        raise ValueError("no a in the bracket gives lambda_star < 1")
    return float(a), float(lam)


def _polish(phi, comps, T, r_star, z_scale, a, lam, zeta):
    # phi is flat at its minimum, so golden section stalls near sqrt(eps) in a;
    # a root of the log-derivative pins a to rounding level
    def slope(u):
        return z_scale * sum(d.cgf_slope(u * z_scale) for d in comps) - r_star * T.cgf_slope(-u * r_star)

    w = 1e-4 * max(1.0, zeta)
    lo, hi = max(a - w, 0.0), min(a + w, zeta)
    try:
        f_lo, f_hi = slope(lo), slope(hi)
    except (ArithmeticError, ValueError):
        return a, lam
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or f_lo * f_hi > 0:
        return a, lam
    root = optimize.brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    val = phi(root)
    return (float(root), float(val)) if val <= lam else (a, lam)


def tandem_stationarity(Z, T, r_star, a_star, z_scale=1.0, h=1e-6):
    comps = _as_list(Z)

    def phi(a):
        v = T.mgf(-a * r_star)
        for d in comps:
            v *= d.mgf(a * z_scale)
        return v
    return (phi(a_star + h) - phi(a_star - h)) / (2 * h)


# ---------------------------------------------------------------------------
# SGD certificates

def _ez_zero(Z):
    if abs(Z.mean()) > 1e-9:
        raise CertificateError(f"gradient noise must be unbiased, E Z = {Z.mean()}")


def sgd_nsc_certificate(alpha: float, m: float, Z: Distribution) -> Certificate:
    """Geometric certificate with a wedge weight for the flat-bottom objective."""
    if not m >= 3:
        raise CertificateError("only m >= 3 is covered")
    if not 0 < alpha < 1:
        raise CertificateError("alpha must lie in (0, 1)")
    _ez_zero(Z)
    e1z = 1 + Z.moment(1, "absolute")
    if not alpha <= 3 / (4 * e1z):
        raise CertificateError(f"step too large: alpha = {alpha} > 3/(4 E(1+|Z|)) = {3 / (4 * e1z):.6g}")
    a_tilde = 1 - Z.expect(lambda z: max(1 - alpha * abs(z), 0.0))
    delta = (2 / 3) * alpha * (a_tilde / 6) ** (m - 3)
    r = delta * a_tilde / (2 * (1 + delta))
    return Certificate("geometric", {"r": r, "alpha_tilde": a_tilde, "delta": delta, "alpha": alpha, "m": m},
                       Wedge(delta), provenance="analytic", inequality="KV <= (1 - r) V")


def sgd_ht_certificate(alpha: float, beta: float, gamma: float, Z: Distribution) -> Certificate:
    """Polynomial certificate for the generalized Huber objective with heavy-tailed noise."""
    if not 1 <= beta < 2:
        raise CertificateError("beta must lie in [1, 2)")
    if not 1 < gamma <= 2:
        raise CertificateError("gamma must lie in (1, 2]")
    if not 0 < alpha < 1:
        raise CertificateError("alpha must lie in (0, 1)")
    if not beta + gamma > 3:
        raise CertificateError(f"need beta + gamma > 3, got {beta + gamma}")
    _ez_zero(Z)
    eg = Z.moment(gamma, "absolute")
    if not math.isfinite(eg):
        raise CertificateError(f"E|Z|^{gamma} is infinite")
    if not alpha ** (gamma - 1) < (gamma - 1) / (8 * eg):
        raise CertificateError(f"alpha^(gamma-1) = {alpha ** (gamma - 1):.6g} is not below "
                               f"(gamma-1)/(8 E|Z|^gamma) = {(gamma - 1) / (8 * eg):.6g}")
    big = Z.expect(lambda z: (1 + abs(z)) * (1 + abs(z) > 1 / alpha))
    if not big < 1 / 8:
        raise CertificateError(f"E(1+|Z|) I(1+|Z| > 1/alpha) = {big:.6g} is not below 1/8")
    e1g = Z.expect(lambda z: (1 + abs(z)) ** (gamma - 1))
    if not alpha < 2 * e1g / (gamma - 1):
        raise CertificateError(f"alpha = {alpha} is not below 2 E(1+|Z|)^(gamma-1)/(gamma-1) = "
                               f"{2 * e1g / (gamma - 1):.6g}")
    b = (gamma - 1) / (2 - beta)
    M = 2 * e1g / alpha
    delta = (2 / (1 + M)) ** (1 - 1 / b) * alpha * (gamma - 1) / 2 ** (2 - 1 / b)
    return Certificate("polynomial", {"b": b, "delta": delta, "U_const": delta ** b, "M": M,
                                      "alpha": alpha, "beta": beta, "gamma": gamma},
                       PolyShift(gamma - 1, 0.0, 0.0, M), provenance="analytic",
                       inequality="KV <= V - U^(1/b) V^(1 - 1/b) with U = delta^b")
