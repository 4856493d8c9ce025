"""swarmperf: swarm performance metrics and a foraging simulator."""

__version__ = "0.1.0"
