"""Measurement-induced relative phase in two-mode condensates and BCS junctions."""

__version__ = "0.1.0"
