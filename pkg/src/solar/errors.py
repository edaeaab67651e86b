"""Common exception hierarchy.

Every failure the engine can signal derives from SolarError and carries a
stable machine-readable ``code`` so callers (and the CLI) can branch on it
without string-matching messages.
"""

from __future__ import annotations


class SolarError(Exception):
    """Base class for all errors raised by this package."""

    code = "SOLAR_ERROR"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
