"""One actor-critic gradient estimate on the noisy linear system, checked against finite differences.

The robust policy explores inside its tightened feasible set; the nominal
policy explores around the constraint boundary and its projected
exploration biases the compatible critic. Takes a few minutes.

    python3 demos/policy_gradient.py
"""

import numpy as np

from rmpcpg.actor import BatchConfig, batch_gradient, collect_batch, true_gradient_fd
from rmpcpg.envs import example2
from rmpcpg.exploration import Streams
from rmpcpg.rmpc import RmpcConfig

env, spec = example2()
theta, cfg = [0.1], RmpcConfig(eta_bar=0.2)
batch = BatchConfig(n_samples=120)
streams = Streams(7)

for kind, kcfg in (("robust", cfg), ("nominal", None)):
    b = collect_batch(env, spec, kcfg, theta, cfg.eta_bar, batch, streams)
    est = batch_gradient(b, cfg.eta_bar)
    fd = true_gradient_fd(env, spec, kcfg, theta, s0=[0.0], rng=np.random.default_rng(3))
    print(f"{kind:8s} estimate {est.grad[0]:9.2f} +- {est.se[0]:5.2f}   "
          f"finite difference {fd.grad[0]:9.2f} +- {fd.se[0]:4.2f}   J = {fd.J:.2f}")
