"""Functional inequalities and their verdicts."""
