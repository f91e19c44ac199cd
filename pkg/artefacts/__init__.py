"""Artefact generation module for planefold."""
from .report_generator import CheckRow, ReportWriter, dumps

__all__ = ['CheckRow', 'ReportWriter', 'dumps']
