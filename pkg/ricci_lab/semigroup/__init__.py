"""Monte-Carlo semigroup and gradient estimators."""
