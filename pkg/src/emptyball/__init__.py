"""Empty-ball probabilities for critical branching Brownian motion.

Particle simulation, a radial solver for the limiting semilinear heat
equation, exact moment formulas and a small experiment harness tying them
together.
"""
from .records import TOOL_VERSION as __version__

__all__ = ["__version__"]
