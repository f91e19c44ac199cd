"""Configuration module for planefold."""
from .settings import Settings, CONFIG

__all__ = ['Settings', 'CONFIG']
