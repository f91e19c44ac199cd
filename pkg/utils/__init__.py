"""Utility modules for planefold."""
from .logger import AppLogger, LogEntry, get_logger

__all__ = ['AppLogger', 'LogEntry', 'get_logger']
