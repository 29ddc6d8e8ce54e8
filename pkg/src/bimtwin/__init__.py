"""Closed-loop digital-twin engine for model-driven robotic construction.

A layered building-information repository drives a simulated manipulator
through install tasks; detected as-built deviations adapt installation
poses, a supervisor approves every consequential step, and results are
written back into the repository.
"""

__version__ = "0.1.0"
