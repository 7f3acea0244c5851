"""Estimation and inference for boundary discontinuity designs."""
