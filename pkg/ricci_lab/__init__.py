"""Monte-Carlo laboratory for pinched Ricci curvature functional inequalities."""

__version__ = "0.1.0"
