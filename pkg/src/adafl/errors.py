"""Base exception shared by every AdaFL module."""


class AdaflError(Exception):
    """Base exception for simulation, data and harness errors."""
    pass
