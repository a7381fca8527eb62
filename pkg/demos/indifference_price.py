"""Exponential-utility indifference price of a capped call on a defaultable bond.

Solves the dual value function with and without the claim, reads off the
price, and checks it against a Monte Carlo estimate that trades the two
optimal strategies on common paths.

    python3 demos/indifference_price.py
"""
import numpy as np

from credithedge.grid import GridSpec
from credithedge.hjb import indifference_price, optimal_strategy_hjb
from credithedge.model import CappedCall, DefaultableClaim, DefaultState, ModelParams, validate_params
from credithedge.montecarlo import PathSource, mc_indifference_price
from credithedge.tree import dual_value_bruteforce

params = validate_params(ModelParams.constant(
    mu=0.05, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3, lambdaA=0.1, lambdaB=0.05))
# pays min((D_T - 1)^+, 0.5) if B survives, 0.3 at B's default
claim = DefaultableClaim.restricted(CappedCall(1.0, 0.5), 0.3)
delta = 1.0

ip = indifference_price(params, claim, delta, GridSpec(200, 301))
print(f"value with claim    {ip.V0_with:+.6f}")
print(f"value without claim {ip.V0_without:+.6f}")
print(f"indifference price  {ip.price:.6f}")

# price of the cash-shifted claim moves by the cash amount
shifted = indifference_price(params, claim.shifted(0.25), delta, GridSpec(200, 301))
print(f"price(psi + 0.25) - price(psi) = {shifted.price - ip.price:.8f}")

# a two-period event tree approximates the same dual problem
for n in (1, 2, 3):
    tree = dual_value_bruteforce(params, claim, delta, n)
    print(f"{n}-period tree value {tree:+.6f}  gap {abs(tree - ip.V0_with):.4f}")

# the hedge: money held in the bond at t = 0 for a few spot levels
surf = ip.surface_with
for x in (0.8, 1.0, 1.2):
    j = np.searchsorted(surf.s, np.log(x))
    print(f"D = {x:.1f}: pi* = {surf.pi[DefaultState.S00, 0, j]:+.4f}")

src = PathSource(params, 200, 50_000, 1.0, seed=1)
mc = mc_indifference_price(src, params, claim, optimal_strategy_hjb(ip.surface_with),
                           optimal_strategy_hjb(ip.surface_without), delta)
print(f"Monte Carlo price   {mc.mean:.6f} +- {mc.stderr:.6f}")
