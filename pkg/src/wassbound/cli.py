"""Scenario runner.

    wassbound verify   --scenario pareto_gg1 --out results/
    wassbound bound    --scenario tandem     --out results/
    wassbound simulate --scenario tandem     --out results/ --seed 7
    wassbound compare  --scenario ar1        --out results/
    wassbound clt      --scenario ar1        --out results/

``--scenario`` takes a path or the name of a bundled scenario. Exit codes:
0 pass, 1 usage error, 2 certificate rejected, 3 bound falsified.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, bounds, certify, metrics
from .distributions import from_dict as dist_from_dict
from .metrics import Constant, Curve, lyapunov_from_dict
from .models import model_from_dict, simulate_marginal

EXIT_OK, EXIT_USAGE, EXIT_REJECTED, EXIT_FALSIFIED = 0, 1, 2, 3
SUMMARY_SCHEMA = "wassbound.summary/1"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# scenario loading

def bundled_scenarios() -> list[str]:
    root = resources.files("wassbound") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str) -> dict:
    path = Path(ref)
    if path.exists():
        text = path.read_text()
    else:
        res = resources.files("wassbound") / "scenarios" / (ref if ref.endswith(".json") else ref + ".json")
        if not res.is_file():
            raise UsageError(f"no scenario file or bundled scenario named {ref!r}")
        text = res.read_text()
    try:
        sc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed scenario JSON: {exc}") from None
    validate(sc)
    return sc


def validate(sc: dict):
    if not isinstance(sc, dict):
        raise UsageError("scenario must be a JSON object")
    for key in ("model", "certificate"):
        if key not in sc:
            raise UsageError(f"scenario lacks {key!r}")
    sim = sc.get("simulation", {})
    if "seed" not in sim:
        raise UsageError("simulation.seed is mandatory")
    for key in ("reps", "horizon"):
        if key in sim and not sim[key] > 0:
            raise UsageError(f"simulation.{key} must be positive")
    try:
        model_from_dict(sc["model"])
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad model description: {exc}") from None


# ---------------------------------------------------------------------------
# certificate and bound per scenario

@dataclass
class Plan:
    certificate: certify.Certificate
    bound: callable
    notes: dict


def _x0(sc, model):
    x0 = sc.get("x0")
    if x0 is None:
        return model.zero()
    return np.asarray(x0, float) if isinstance(x0, list) else float(x0)


def build_plan(sc: dict, seed: int) -> Plan:
    """Certificate plus a bound function n -> value for the scenario."""
    model = model_from_dict(sc["model"])
    req = sc["certificate"]
    method = req.get("method")
    x0 = _x0(sc, model)
    if method in ("gg1_fixed", "gg1_search"):
        Z = model.Z
        m = int(req.get("m", 2))
        if method == "gg1_fixed":
            cert = certify.gg1_certificate(Z, m, float(req["M"]), float(req["delta"]),
                                           tuple(req.get("x_range", (0.0, 100.0))), float(req.get("step", 0.01)))
        else:
            cert = certify.gg1_large_m_search(Z, m)
        e_dv = cert.params["e_dv"]
        return Plan(cert, lambda n: cert.w_bound_unit(n, e_dv), {"e_dv": e_dv})
    if method == "geometric":
        V = lyapunov_from_dict(req.get("V", {"family": "constant", "value": 1.0}))
        r = float(req["r"])
        grid = np.linspace(*req.get("grid", (-3.0, 3.0, 61)))
        rep = certify.check_cd_grid(model, V, lambda x: r * V(x), grid, int(req.get("reps", 20000)), seed)
        if not rep["accepted"]:
            raise certify.CertificateError(f"drift check failed near {rep['worst_point']}", rep)
        cert = certify.Certificate("geometric", {"r": r}, V, "grid_numeric", report=rep)
        e = metrics.e_dv_one_step(model, x0, V, int(req.get("e_dv_reps", 200_000)), seed)
        return Plan(cert, lambda n: cert.w_bound(n, e.value + 3 * e.stderr), {"e_dv": e._asdict()})
    if method == "tandem":
        zeta = req.get("zeta")
        a, lam = certify.tandem_rate(model.Z, model.T, model.r_star, zeta, model.z_scale)
        cert = certify.Certificate("geometric", {"r": 1 - lam, "a_star": a, "lambda_star": lam},
                                   metrics.ExpSum(a), "analytic",
                                   inequality="K exp(a e'x) <= lambda_star exp(a e'x) (boundary removed)")
        return Plan(cert, lambda n: bounds.tandem_bound(n, a, lam, model.Z, model.z_scale), {})
    if method == "tree":
        zeta = req.get("zeta")
        _, lam, a, per = bounds.tree_bound(0, model.paths, model.Z, model.T, zeta)
        cert = certify.Certificate("geometric", {"r": 1 - lam, "lambda_bar": lam, "a_bar": a,
                                                 "per_path": [list(p) for p in per]},
                                   metrics.ExpSum(a), "analytic")
        return Plan(cert, lambda n: bounds.tandem_bound(n, a, lam, model.Z), {})
    if method == "priority":
        zeta = req.get("zeta")
        a, lam = certify.tandem_rate(list(model.Z), model.T, model.r, zeta)
        pre = (math.prod(d.mgf(a) for d in model.Z) - 1) / a
        cert = certify.Certificate("geometric", {"r": 1 - lam, "a_star": a, "lambda_star": lam},
                                   metrics.ExpSum(a), "analytic")
        return Plan(cert, lambda n: bounds.tandem_bound_general(n, lam, pre), {"premultiplier": pre})
    if method == "rbm":
        s = model.s
        b, lam = bounds.rbm_parameters(model.r, model.sigma)
        reps = int(req.get("reps", sc.get("simulation", {}).get("reps", 100_000)))
        xs = simulate_marginal(model, 0.0, 1, reps, seed)
        e = metrics._mean_se(np.exp(b * xs))
        e_exp = e[0] + 3 * e[1]
        cert = certify.Certificate("geometric", {"r": 1 - lam ** s, "b": b, "lambda": lam}, metrics.ExpSum(b),
                                   "analytic", inequality="K exp(b x) <= lambda^s exp(b x) (boundary removed)")
        return Plan(cert, lambda n: bounds.rbm_bound(np.asarray(n) * s, s, model.r, model.sigma, e_exp),
                    {"e_exp_xs": e[0], "e_exp_xs_stderr": e[1]})
    if method == "sgd_nsc":
        cert = certify.sgd_nsc_certificate(model.alpha, model.m, model.Z)
        e = metrics.e_dv_one_step(model, x0, cert.V, int(req.get("e_dv_reps", 200_000)), seed)
        return Plan(cert, lambda n: cert.w_bound(n, e.value + 3 * e.stderr), {"e_dv": e._asdict()})
    if method == "sgd_ht":
        cert = certify.sgd_ht_certificate(model.alpha, model.beta, float(req["gamma"]), model.Z)
        e = metrics.e_dv_one_step(model, x0, cert.V, int(req.get("e_dv_reps", 200_000)), seed)
        return Plan(cert, lambda n: cert.w_bound_unit(n, e.value + 3 * e.stderr), {"e_dv": e._asdict()})
    if method == "ht":
        m = int(req.get("m", 2))
        Y = model.Y
        cert = certify.ht_certificate(Y, m, model.delta)
        b = cert.params["b_resid"]
        return Plan(cert, lambda n: bounds.ht_uniform_bound(np.maximum(n, 1), m, b, Y), {"b_resid": b})
    raise UsageError(f"unknown certificate method {method!r}")


# ---------------------------------------------------------------------------
# empirical curves

def empirical_curve(sc: dict, seed: int, ns) -> Curve:
    model = model_from_dict(sc["model"])
    sim = sc.get("simulation", {})
    est = sim.get("estimator", "backward")
    reps = int(sim.get("reps", 10_000))
    horizon = int(sim.get("horizon", max(ns) + 1))
    x0 = _x0(sc, model)
    if est == "gg1_monotone":
        return metrics.gg1_monotone_curve(model, ns, horizon, reps, seed)
    if est == "spitzer":
        return metrics.spitzer_curve(model, ns, horizon, reps, seed, sim.get("method", "plain"))[0]
    if est == "backward":
        return metrics.backward_distance_curve(model, x0, horizon, reps, seed, ns)
    if est == "backward_quantile":
        return metrics.backward_quantile_curve(model, x0, horizon, reps, seed, ns)
    if est == "forward_quantile":
        return metrics.forward_quantile_curve(model, x0, ns, horizon, reps, seed)
    if est == "ht_scaled":
        return metrics.ht_scaled_distance(model, ns, float(sim.get("horizon_scaled", 60)), reps, seed)
    raise UsageError(f"unknown estimator {est!r}")


def n_grid(sc: dict):
    ns = sc.get("bound", {}).get("ns")
    if ns is None:
        top = int(sc.get("bound", {}).get("horizon", 10))
        ns = list(range(top + 1))
    ns = [int(k) for k in ns]
    if not ns:
        raise UsageError("empty n grid")
    return ns


# ---------------------------------------------------------------------------
# output helpers

def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _fmt(v: float) -> str:
    return repr(float(v))


def compare_csv(ns, bound, curve: Curve) -> str:
    rows = ["n,bound,empirical,stderr"]
    for k, b, v, e in zip(ns, bound, curve.value, curve.stderr):
        rows.append(f"{int(k)},{_fmt(b)},{_fmt(v)},{_fmt(e)}")
    return "\n".join(rows) + "\n"


def plot_svg(path: Path, ns, bound, curve: Curve, title: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "wassbound"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, bound, "-", label="bound")
    pos = curve.value > 0
    ax.errorbar(np.asarray(ns)[pos], curve.value[pos], yerr=3 * curve.stderr[pos], fmt="o", ms=3,
                label="empirical (3 se)")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("distance")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _summary(sc, seed, **kw):
    d = {"schema": SUMMARY_SCHEMA, "version": __version__, "scenario": sc.get("name", ""), "seed": seed}
    d.update(kw)
    return json.dumps(certify._jsonable(d), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands

def run_verify(sc, seed, out: Path) -> int:
    try:
        plan = build_plan(sc, seed)
        cert = plan.certificate
        _write(out, "certificate.json", json.dumps({"accepted": True, **cert.to_dict(), "notes": plan.notes},
                                                   indent=2, sort_keys=True, default=str) + "\n")
        return EXIT_OK
    except (certify.CertificateError, ValueError) as exc:
        report = getattr(exc, "report", {})
        _write(out, "certificate.json", json.dumps(certify._jsonable({"accepted": False, "error": str(exc),
                                                                      "report": report}),
                                                   indent=2, sort_keys=True) + "\n")
        print(f"certificate rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED


def run_bound(sc, seed, out: Path) -> int:
    ns = n_grid(sc)
    try:
        plan = build_plan(sc, seed)
    except (certify.CertificateError, ValueError) as exc:
        print(f"certificate rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    vals = np.asarray(plan.bound(np.asarray(ns)), float)
    _write(out, "bound.csv", Curve(ns, vals, np.zeros(len(ns))).to_csv())
    return EXIT_OK


def run_simulate(sc, seed, out: Path) -> int:
    ns = n_grid(sc)
    _write(out, "empirical.csv", empirical_curve(sc, seed, ns).to_csv())
    return EXIT_OK


def run_compare(sc, seed, out: Path) -> int:
    ns = n_grid(sc)
    try:
        plan = build_plan(sc, seed)
    except (certify.CertificateError, ValueError) as exc:
        print(f"certificate rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    bound = np.asarray(plan.bound(np.asarray(ns)), float)
    curve = empirical_curve(sc, seed, ns)
    excess = curve.value - bound
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(curve.stderr > 0, excess / curve.stderr, np.where(excess > 0, np.inf, -np.inf))
    falsified = bool(np.any(excess > 3 * curve.stderr))
    _write(out, "compare.csv", compare_csv(ns, bound, curve))
    plot_svg(out / "compare.svg", ns, bound, curve, sc.get("name", "comparison"))
    _write(out, "summary.json", _summary(sc, seed, max_excess_over_stderr=float(np.max(z)),
                                         falsified=falsified, certificate=plan.certificate.to_dict(),
                                         notes=plan.notes))
    return EXIT_FALSIFIED if falsified else EXIT_OK


OBSERVABLES = {"identity": lambda x: x, "constant": lambda x: np.ones_like(x)}


def run_clt(sc, seed, out: Path) -> int:
    model = model_from_dict(sc["model"])
    cfg = sc.get("clt", {})
    g = OBSERVABLES[cfg.get("observable", "identity")]
    L = float(cfg.get("lipschitz", 1.0))
    bm = metrics.batch_means(model, g, _x0(sc, model), int(cfg.get("warmup", 100_000)),
                             int(cfg.get("batches", 100)), int(cfg.get("batch_len", 10_000)), seed,
                             int(cfg.get("chains", 1)))
    V = lyapunov_from_dict(cfg.get("V", {"family": "constant", "value": 1.0}))
    stat = simulate_marginal(model, _x0(sc, model), int(cfg.get("stationary_n", 200)),
                             int(cfg.get("e_term_reps", 200_000)), seed)
    e = metrics.clt_e_term(model, g, V, stat, float(g(stat).mean()), seed)
    kind = cfg.get("bound", "geometric")
    r = float(cfg["r"]) if kind == "geometric" else None
    bound = bounds.clt_sigma2_bound(kind, L, e.value, r)
    slack = bounds.clt_sigma2_bound(kind, L, e.value + 3 * e.stderr, r)
    ok = bm.sigma2 <= slack
    _write(out, "clt_summary.json", _summary(sc, seed, sigma2_hat=bm.sigma2, sigma2_stderr=bm.stderr,
                                             batches=bm.batches, chains=bm.chains, e_term=e.value,
                                             e_term_stderr=e.stderr, bound=bound, bound_at_3se=slack,
                                             passed=bool(ok)))
    return EXIT_OK if ok else EXIT_FALSIFIED


COMMANDS = {"verify": run_verify, "bound": run_bound, "simulate": run_simulate,
            "compare": run_compare, "clt": run_clt}


def _parser():
    p = argparse.ArgumentParser(prog="wassbound", description="Wasserstein convergence bounds from drift certificates")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--scenario", required=True, help="scenario JSON path or bundled scenario name")
        s.add_argument("--seed", type=int, default=None, help="override simulation.seed (unsigned 64-bit)")
        s.add_argument("--out", default=None, help="output directory (default: scenario output field, else .)")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command == "list":
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    try:
        sc = load_scenario(args.scenario)
        seed = int(args.seed if args.seed is not None else sc["simulation"]["seed"])
        if not 0 <= seed < 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        out = Path(args.out if args.out is not None else sc.get("output", "."))
        return COMMANDS[args.command](sc, seed, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
