"""Wheel-anomaly-aware visual-inertial-wheel estimation workbench."""
