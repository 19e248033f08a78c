"""Neural-network ensemble strategies for regression, their pairwise
composites, and the tooling to compare them: an exact bias-variance-diversity
decomposition and Friedman/Conover rank statistics."""

__version__ = "0.1.0"
