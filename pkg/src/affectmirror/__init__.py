"""Affective mirror engine: face detection, emotion classification, and
seeded poem generation behind a display gateway."""

__version__ = "0.1.0"
