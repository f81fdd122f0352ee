"""Mean-field (TAP) inference and learning for Gauss-Bernoulli RBMs and deep Boltzmann machines."""

__version__ = "0.1.0"
