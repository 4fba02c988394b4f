"""Structured parse failure for every reader in this package."""

from __future__ import annotations


class FormatError(ValueError):
    """Raised when input bytes do not form a valid file of the expected format.

    Readers either return a fully validated object or raise this; they
    never propagate bare IndexError/struct.error style failures, so
    arbitrary byte input is safe to feed them.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
