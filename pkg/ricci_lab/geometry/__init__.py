"""Model manifolds, drift fields and test functions."""
