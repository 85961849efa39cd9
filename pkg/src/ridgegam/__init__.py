"""Random ReLU feature networks, ridge / gradient-flow training, and the
matching weighted additive spline models.

Subpackages:

- ``rsn``        network sampling, evaluation, kink geometry
- ``train``      outer-layer trainers (closed-form ridge, exact flow, GD)
- ``weighting``  Monte Carlo estimation of the curvature-penalty weighting
- ``sphere``     partitions of the unit sphere and direction snapping
- ``gam``        additive spline solver with weighted second-difference penalty
- ``metrics``    grid Sobolev distance and loss evaluation
- ``experiments`` config-driven sweeps and the CLI entry point
"""

from ridgegam import gam, metrics, rsn, sphere, train, weighting

__all__ = ["rsn", "train", "weighting", "sphere", "gam", "metrics"]
