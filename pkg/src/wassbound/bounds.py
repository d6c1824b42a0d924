"""Closed-form Wasserstein bounds.

Every function takes certificate parameters plus the one-step weighted
distance E d_V(X0, X1) (or the model-specific substitute) and returns the
bound value. Functions accept scalar n or an array of n.
"""
from __future__ import annotations

import math

import numpy as np

from .distributions import Distribution, INF


def _out(v):
    return v if np.ndim(v) else float(v)


def polynomial_bound(n, b: float, e_dv: float):
    """Rate n^-(b-1) bound from a polynomial contractive drift with exponent b.

    For integer b this is prod_{k=1}^{b-1} b/(n+k) times e_dv. For
    non-integer b each factor picks up (ceil(b)-k)/(b-k) and the product is
    raised to (b-1)/(ceil(b)-1). b = 1 gives e_dv, the limit of the formula.
    Evaluated in log space so n up to 1e9 and beyond is fine.
    """
    if b < 1:
        raise ValueError("polynomial bound needs b >= 1")
    n = np.asarray(n, float)
    if np.any(n < 0):
        raise ValueError("n must be nonnegative")
    if b == 1:
        return _out(np.full(n.shape, float(e_dv)))
    top = math.ceil(b)
    ks = np.arange(1, top)
    nn = n[..., None]
    logs = np.log(b) - np.log(nn + ks)
    if b != top:
        logs = logs + np.log((top - ks) / (b - ks))
        expo = (b - 1) / (top - 1)
    else:
        expo = 1.0
    return _out(np.exp(expo * logs.sum(-1)) * e_dv)


def polynomial_bound_scaled(n, m: int, delta: float, e_dv: float):
    """Bound for the unit-weight distance when U = delta^m."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return _out(np.asarray(polynomial_bound(n, m, e_dv)) / delta ** m)


def geometric_bound(n, r: float, e_dv: float):
    if not 0 < r < 1:
        raise ValueError("geometric bound needs r in (0, 1)")
    n = np.asarray(n, float)
    return _out(np.exp(n * math.log1p(-r)) / r * e_dv)


def semi_exponential_rate(delta: float, lam: float) -> float:
    return (1 + lam) * (delta / (math.e * lam ** lam)) ** (1 / (1 + lam))


def semi_exponential_bound(n, delta: float, lam: float, e_dv: float):
    """e^(1+lam) n exp(-c n^(1/(1+lam))) e_dv, defined for n >= 1 only."""
    if not (delta > 0 and lam > 0):
        raise ValueError("semi-exponential bound needs delta, lambda > 0")
    n = np.asarray(n, float)
    if np.any(n < 1):
        raise ValueError("semi-exponential bound is stated for n >= 1 (at n = 0 the formula is 0)")
    c = semi_exponential_rate(delta, lam)
    return _out(np.exp(1 + lam + np.log(n) - c * n ** (1 / (1 + lam))) * e_dv)


def rbm_parameters(r: float, sigma: float) -> tuple[float, float]:
    """(b, lambda) = (r / sigma^2, exp(-r^2 / (2 sigma^2)))."""
    return r / sigma ** 2, math.exp(-r * r / (2 * sigma * sigma))


def rbm_bound(t, s: float, r: float, sigma: float, e_exp_xs: float):
    """Bound on W(X_t, X_inf) for RBM from 0, using E exp(b X_s)."""
    if e_exp_xs < 1:
        raise ValueError("E exp(b X_s) is at least 1 for a nonnegative process")
    t = np.asarray(t, float)
    if np.any(t <= s) or s <= 0:
        raise ValueError("need t > s > 0")
    b, lam = rbm_parameters(r, sigma)
    return _out(lam ** (t - s) / b * (e_exp_xs - 1) / (1 - lam ** s))


def ht_moment_pack(m: int, b_resid: float, Y: Distribution) -> dict:
    """Moments entering the heavy-traffic bound, from closed forms where possible."""
    m = int(m)
    a_abs = [1.0] + [Y.moment(j, "absolute") for j in range(1, m + 1)]
    a_pos = [1.0] + [Y.moment(j, "positive_part") for j in range(1, m + 2)]
    e_2y = sum(math.comb(m, j) * 2 ** (m - j) * a_abs[j] for j in range(m + 1))
    e_1yp = sum(math.comb(m + 1, j) * a_pos[j] for j in range(m + 2))
    return {"E(2+|Y|)^m": e_2y, "E(1+Y+)^(m+1)": e_1yp, "E Y+": a_pos[1],
            "tail_term": e_1yp / (m + 1) + (1 + b_resid) ** m * a_pos[1]}


def ht_uniform_bound(n, m: int, b_resid: float, Y: Distribution):
    """Uniform-in-delta bound for the scaled heavy-traffic queue."""
    n = np.asarray(n, float)
    if np.any(n < 1):
        raise ValueError("heavy-traffic bound needs n >= 1")
    pk = ht_moment_pack(m, b_resid, Y)
    if not math.isfinite(pk["E(2+|Y|)^m"]) or not math.isfinite(pk["tail_term"]):
        return _out(np.full(n.shape, INF))
    base = 16 * pk["E(2+|Y|)^m"] * (1 + b_resid) ** m / n
    return _out((4 / m) * base ** (m - 1) * pk["tail_term"])


def tandem_bound(n, a_star: float, lambda_star: float, Z: Distribution, z_scale: float = 1.0):
    """Empty-start fluid-line bound lambda^n/(1-lambda) * (E e^(aZ) - 1)/a."""
    if not 0 < lambda_star < 1:
        raise ValueError("need lambda_star in (0, 1)")
    n = np.asarray(n, float)
    if a_star == 0:
        pre = z_scale * Z.mean()
    else:
        pre = (Z.mgf(a_star * z_scale) - 1) / a_star
    return _out(lambda_star ** n / (1 - lambda_star) * pre)


def tandem_bound_general(n, lambda_star: float, premultiplier: float):
    n = np.asarray(n, float)
    return _out(lambda_star ** n / (1 - lambda_star) * premultiplier)


def exp_secant(u, v):
    """(e^u - e^v)/(u - v), equal to e^u on the diagonal."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    d = u - v
    same = d == 0
    safe = np.where(same, 1.0, d)
    # e^v * expm1(d)/d keeps precision when u is close to v
    out = np.where(same, np.exp(u), np.exp(v) * np.expm1(d) / safe)
    return _out(out)


def tandem_premultiplier(model, x0, a_star: float, reps: int, seed: int):
    """Monte Carlo E[||X1 - X0||_1 (e^u - e^v)/(u - v)], u = a e'X1, v = a e'X0."""
    from . import _rng
    from .metrics import Estimate, _mean_se
    rng = _rng.generator(seed, _rng.tag("premultiplier"))
    xi = model.draw(rng, (reps,))
    x = np.broadcast_to(np.asarray(x0, float), (reps, model.state_dim)).copy()
    x1, _ = model.apply(x, xi)
    w = np.abs(x1 - x).sum(-1) * exp_secant(a_star * x1.sum(-1), a_star * x.sum(-1))
    return Estimate(*_mean_se(w))


def tree_bound(n, paths, Z: Distribution, T: Distribution, zeta: float | None = None):
    """Fluid-tree bound with the slowest path rate and the largest optimizer.

    Returns (value, lambda_bar, a_bar, per_path) where per_path lists the
    (a_star, lambda_star) of each decomposed tandem line.
    """
    from .certify import tandem_rate
    if zeta is None:
        # a_bar enters E exp(a_bar Z) with the full input, so every path's
        # search is capped inside the mgf strip of Z itself
        edge = Z.mgf_boundary()
        zeta = 0.99 * edge if math.isfinite(edge) else None
    per = []
    for pt in paths:
        try:
            per.append(tandem_rate(Z, T, min(pt.rates), zeta, z_scale=pt.input_scale))
        except ValueError as exc:
            raise ValueError(f"path {pt.path}: {exc}") from None
    lam = max(p[1] for p in per)
    a = max(p[0] for p in per)
    return tandem_bound(n, a, lam, Z), lam, a, per


def clt_sigma2_bound(kind: str, L: float, e_term: float, r: float | None = None) -> float:
    """Upper bound on the asymptotic variance of a Lipschitz observable."""
    if not L > 0 or e_term < 0:
        raise ValueError("need L > 0 and e_term >= 0")
    if kind == "polynomial_b3":
        return 27 / 2 * L * e_term
    if kind == "geometric":
        if r is None or not 0 < r < 1:
            raise ValueError("geometric CLT bound needs r in (0, 1)")
        return (2 - r) / r ** 2 * L * e_term
    raise ValueError(f"unknown CLT bound kind {kind!r}")
