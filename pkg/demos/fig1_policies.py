"""Nominal versus robust MPC policy on the constrained integrator.

Walks through one state near the constraint: the nominal policy sits on the
boundary, the robust policy backs off by the solved radius, and projected
exploration around it needs only a second-order correction.

    python3 demos/fig1_policies.py
"""

import numpy as np

from rmpcpg.dp import value_iteration_example1
from rmpcpg.envs import example1
from rmpcpg.exploration import ball_draws
from rmpcpg.mpc import policy
from rmpcpg.projection import explore_many
from rmpcpg.rmpc import RmpcConfig, robust_policy

env, spec = example1()
theta, cfg = [0.5], RmpcConfig(eta_bar=0.05)
dp = value_iteration_example1()

print(" s      pi      pi_hat   pi_dp   eta     h(pi)    h(pi_hat)")
for s in np.linspace(-1, 1, 11):
    pi = policy(spec, [s], theta, with_sensitivity=False)
    ph = robust_policy(spec, cfg, [s], theta, with_sensitivity=False)
    h = lambda u: s * s + 5 * u * u - 1  # noqa: E731
    print(f"{s:5.2f}  {pi.u0[0]:7.4f}  {ph.u0[0]:7.4f}  {dp.policy_at(s):7.4f}  {ph.eta:.4f}  "
          f"{h(pi.u0[0]):8.1e}  {h(ph.u0[0]):8.1e}")

# exploration at a state where the robust constraint is active
s = 0.8
base = robust_policy(spec, cfg, [s], theta, with_sensitivity=False)
E = ball_draws(1, base.eta, np.random.default_rng(0), 2000)
res = explore_many(spec, [s], theta, base, E)
eps = np.array([np.linalg.norm(r.epsilon) for r in res])
print(f"\ns = {s}: {np.mean(eps > 0):.1%} of draws projected, max |eps| = {eps.max():.2e} "
      f"= {eps.max() / base.eta**2:.2f} eta^2")
