"""Short periodic billiard trajectories via penalized free-time action and eps-continuation."""

__version__ = "0.1.0"
