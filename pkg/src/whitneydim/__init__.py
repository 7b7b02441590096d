"""Whitney decompositions, fractal dimension estimates and parallel-set boundaries."""

__version__ = "0.1.0"
