"""How the projection correction and the exploration moments scale with the radius.

    python3 demos/projection_scaling.py
"""

import numpy as np

from rmpcpg.envs import example1
from rmpcpg.exploration import Streams, ball_draws, moment_report
from rmpcpg.projection import explore_many
from rmpcpg.rmpc import RmpcConfig, robust_policy

env, spec = example1()
theta, s = [0.5], 0.85
streams = Streams(1)

print("eta_bar  max|eps|   max|eps|/eta^2")
for i, eb in enumerate((0.2, 0.1, 0.05, 0.025)):
    base = robust_policy(spec, RmpcConfig(eta_bar=eb), [s], theta, with_sensitivity=False)
    res = explore_many(spec, [s], theta, base, ball_draws(1, base.eta, streams.rng("eps", i), 5000))
    m = max(np.linalg.norm(r.epsilon) for r in res)
    print(f"{eb:7.3f}  {m:.3e}  {m / eb**2:.3f}")

print("\neta_bar  |mean|/eta  |E[e^2]/eta^2 - 1/3|  |E[e^3]|/eta^2")
for i, eb in enumerate((0.1, 0.05, 0.01)):
    rep = moment_report(spec, RmpcConfig(eta_bar=eb), [s], theta, 20000, streams.rng("moments", i))
    print(f"{eb:7.3f}  {rep.mean_dev:.4f}      {rep.second_dev:.4f}               {rep.third_dev:.5f}")
