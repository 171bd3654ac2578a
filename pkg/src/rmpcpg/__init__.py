"""Actor-critic policy gradients over MPC policies with exploration-aware robustification."""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
