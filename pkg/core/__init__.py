"""Core functionality modules for planefold."""
from .fieldspec import FieldExpr, VectorField, parse_field, load_field_file, eval_jet
from .pointwise import principal_data, implicit_coeffs, normal_curvature, geodesic_torsion
from .tracing import Polyline, CycleCandidate, StopReason, trace_line, find_cycle
from .chart import TubularChart, ChartCoeffs, FrameCoeffs, build_chart, chart_coeffs, frame_coeffs
from .returnmap import ReturnMapReport, VariationalSystem, variational_system, poincare_derivative
from .control import BracketSequence, PerturbationSpec, bracket_sequence, span_rank, hyperbolize

__all__ = [
    'FieldExpr', 'VectorField', 'parse_field', 'load_field_file', 'eval_jet',
    'principal_data', 'implicit_coeffs', 'normal_curvature', 'geodesic_torsion',
    'Polyline', 'CycleCandidate', 'StopReason', 'trace_line', 'find_cycle',
    'TubularChart', 'ChartCoeffs', 'FrameCoeffs', 'build_chart', 'chart_coeffs', 'frame_coeffs',
    'ReturnMapReport', 'VariationalSystem', 'variational_system', 'poincare_derivative',
    'BracketSequence', 'PerturbationSpec', 'bracket_sequence', 'span_rank', 'hyperbolize',
]
