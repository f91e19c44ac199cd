"""Command-line front end for planefold."""
from .run_config import RunConfig, resolve_field
from .commands import run_command, COMMAND_HANDLERS

__all__ = ['RunConfig', 'resolve_field', 'run_command', 'COMMAND_HANDLERS']
