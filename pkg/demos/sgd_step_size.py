"""Constant-step SGD on a flat-bottomed objective: how the rate scales with the step.

The objective is |x|^3 away from a unit flat region, with Rademacher
gradient noise. The geometric certificate gives a contraction rate r that
shrinks like alpha^2 as the step alpha goes to 0.

    python3 demos/sgd_step_size.py
"""
import numpy as np

from wassbound import certify
from wassbound.distributions import TwoPoint

noise = TwoPoint(-1.0, 1.0, 0.5)
alphas = np.geomspace(0.01, 0.3, 8)
rates = []
print("  alpha        r      alpha^2/(3+2 alpha)")
for a in alphas:
    r = certify.sgd_nsc_certificate(float(a), 3, noise).params["r"]
    rates.append(r)
    print(f"{a:7.4f}  {r:.4e}  {a * a / (3 + 2 * a):.4e}")
slope = np.polyfit(np.log(alphas), np.log(rates), 1)[0]
print(f"\nlog-log slope of r against alpha: {slope:.3f}")

try:
    certify.sgd_nsc_certificate(0.4, 3, noise)
except certify.CertificateError as exc:
    print(f"alpha = 0.4 is refused: {exc}")
