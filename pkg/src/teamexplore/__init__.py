"""Decentralized multi-robot exploration with self-organizing teams.

Robots map an unknown 2D world into a shared log-odds occupancy grid, form
teams on the fly according to each robot's desired team size, and team
leaders pick frontier targets either with a biased distance-quantile sampler
or by prompting a language model.
"""

from .engine import RunSummary, SimConfig, Simulation, StepMetrics, initialize, run

__all__ = ["RunSummary", "SimConfig", "Simulation", "StepMetrics", "initialize", "run"]
__version__ = "0.1.0"
