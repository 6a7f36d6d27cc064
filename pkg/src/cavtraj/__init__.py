"""Cooperative-perception LiDAR trajectory pipeline."""

__version__ = "0.1.0"
