"""Sandbox worker package: see worker.py for the protocol loop."""

from .worker import handle_line, main, stringify

__all__ = ["handle_line", "main", "stringify"]
__version__ = "0.1.0"
