"""Curvature recovery from small-time semigroup limits."""
