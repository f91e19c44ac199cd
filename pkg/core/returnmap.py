"""
Derivative of the first-return map of a principal cycle.

The variational equation A(s) U' = B(s) U comes from linearizing the
implicit quadratic and the plane equation along the cycle. U(L) is the
derivative of the return map on the section s = 0 in chart coordinates
(v, w). An independent finite-difference oracle and the closed forms of
the integrable case are provided for cross-checks.
"""
import cmath
import math
from dataclasses import dataclass, field as dataclass_field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from config.settings import CONFIG
from core.chart import FrameProfile, TubularChart, chart_coeffs, frame_coeffs, frame_profile
from core.errors import (
    DegenerateSystemError,
    IntegrationError,
    NonIntegrableError,
)
from core.fieldspec import VectorField
from core.pointwise import integrability_scalar
from core.tracing import CycleCandidate, CycleFinder
from utils.logger import get_logger


class CycleClass(Enum):
    """Hyperbolicity label of a cycle."""
    HYPERBOLIC_SADDLE = "hyperbolic-saddle"
    HYPERBOLIC_NODE = "hyperbolic-node"
    SEMI_HYPERBOLIC = "semi-hyperbolic"
    NONHYPERBOLIC = "nonhyperbolic"

    @property
    def hyperbolic(self) -> bool:
        return self in (CycleClass.HYPERBOLIC_SADDLE, CycleClass.HYPERBOLIC_NODE)


@dataclass
class VariationalSystem:
    """Periodic 2x2 system U' = M(s) U with M = A^-1 B sampled along the chart."""
    s: np.ndarray
    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    period: float
    multiplicity: int = 1
    frame_form_residual: Optional[float] = None
    coefficients: Optional[np.ndarray] = None   # L1..L6 on the cycle, per sample

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.s, self.M, bc_type='periodic', axis=0)

    def matrix(self, s) -> np.ndarray:
        return self._spline(np.mod(s, self.period))

    def derivative(self, s) -> np.ndarray:
        return self._spline(np.mod(s, self.period), 1)

    def trace_integral(self) -> float:
        tr = self.M[:, 0, 0] + self.M[:, 1, 1]
        return float(CubicSpline(self.s, tr, bc_type='periodic').integrate(0.0, self.period))

    def with_matrix(self, M: np.ndarray) -> "VariationalSystem":
        """Copy with a different M(s) on the same samples."""
        return VariationalSystem(
            s=self.s, A=self.A, B=self.B, M=M, period=self.period,
            multiplicity=self.multiplicity,
        )


@dataclass
class ReturnMapReport:
    """Return-map derivative with eigenvalues and hyperbolicity label."""
    U: np.ndarray
    eigenvalues: Tuple[complex, complex]
    classification: CycleClass
    period: float
    multiplicity: int = 1
    liouville_residual: Optional[float] = None
    marginal: bool = False
    alternative: Optional[CycleClass] = None
    method: str = "variational"
    steps: int = 0
    extras: Dict[str, object] = dataclass_field(default_factory=dict)

    @property
    def moduli(self) -> List[float]:
        return [abs(z) for z in self.eigenvalues]

    @property
    def hyperbolic(self) -> bool:
        return self.classification.hyperbolic

    def to_dict(self) -> dict:
        out = {
            "U": self.U.tolist(),
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "moduli": self.moduli,
            "classification": self.classification.value,
            "period": self.period,
            "multiplicity": self.multiplicity,
            "det_check_residual": self.liouville_residual,
            "marginal": self.marginal,
            "method": self.method,
            "steps": self.steps,
        }
        if self.alternative is not None:
            out["alternative_classification"] = self.alternative.value
        out.update(self.extras)
        return out


def variational_system(field: VectorField, chart: TubularChart,
                       profile: Optional[FrameProfile] = None) -> VariationalSystem:
    """
    Sample A(s), B(s) and M(s) = A(s)^-1 B(s) at every chart sample.

    Args:
        field: the plane field normal
        chart: tubular chart of the cycle
        profile: frame coefficients for the frame-form cross-check

    Returns:
        VariationalSystem
    """
    logger = get_logger()
    n = len(chart.s)
    A = np.zeros((n, 2, 2))
    B = np.zeros((n, 2, 2))
    L = np.zeros((n, 6))
    for i, s in enumerate(chart.s):
        c = chart_coeffs(field, chart, float(s))
        L[i] = c.L
        A[i] = [[c.L[1], c.L[2]], [c.M[1], c.M[2]]]
        B[i] = -np.array([c.dL1, c.dM1])

    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    scale = max(1.0, float(np.abs(A).max()))
    worst = int(np.argmin(np.abs(det)))
    if abs(det[worst]) < CONFIG.DEGENERATE_DET_TOL * scale:
        raise DegenerateSystemError(
            f"det A vanishes at s = {chart.s[worst]:.6f} (det = {det[worst]:.3e})"
        )
    M = np.linalg.solve(A, B)
    M[-1] = M[0]
    system = VariationalSystem(s=chart.s.copy(), A=A, B=B, M=M, period=chart.period,
                               multiplicity=chart.multiplicity, coefficients=L)

    profile = profile if profile is not None else frame_profile(chart)
    reference = frame_form_matrix(profile)
    residual = float(np.abs(reference - M).max())
    system.frame_form_residual = residual
    if residual > 1e-6 * max(1.0, float(np.abs(M).max())):
        logger.warning("ReturnMap", f"A^-1 B and the frame form of M(s) differ by {residual:.3e}")
    logger.debug("ReturnMap", f"variational system sampled at {n} points, min |det A| = {abs(det[worst]):.3e}")
    return system


def frame_form_matrix(profile: FrameProfile) -> np.ndarray:
    """M(s) = [[A1, A2 + k3], [-2 k3, B2]] for unit principal generating fields."""
    k3 = profile["k3"]
    return np.stack([
        np.stack([profile["A1"], profile["A2"] + k3], axis=-1),
        np.stack([-2.0 * k3, profile["B2"]], axis=-1),
    ], axis=1)


def coefficient_form_matrix(field: VectorField, chart: TubularChart,
                            profile: Optional[FrameProfile] = None,
                            stride: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    M(s) from first- and second-order frame coefficients.

    M11 = (-(F2 + k1) k3 + (B2 - 2 A1) F1 + B10 + F1') / (2 (k2 - F1))
    M12 = k3 + (k1 B2 - A2 F1 + (2 B2 - A1) F2 + B11 + F2') / (2 (k2 - F1))
    with the second row [-2 k3, B2]. Needs third-order jets at every sample used.

    Args:
        field: the plane field normal
        chart: tubular chart of the cycle
        profile: first-order frame profile, for F1' and F2'
        stride: use every stride-th chart sample

    Returns:
        (s, M) on the selected samples
    """
    profile = profile if profile is not None else frame_profile(chart)
    s = chart.s[::stride]
    df1 = profile.at("F1", s, 1)
    df2 = profile.at("F2", s, 1)
    M = np.zeros((len(s), 2, 2))
    for i, si in enumerate(s):
        c = frame_coeffs(field, chart, float(si), order=2)
        gap = 2.0 * (c.k2 - c.F1)
        if abs(gap) < CONFIG.DEGENERATE_DET_TOL:
            raise DegenerateSystemError(f"k2 - F1 vanishes at s = {si:.6f}")
        m11 = (-(c.F2 + c.k1) * c.k3 + (c.B2 - 2.0 * c.A1) * c.F1 + c.B10 + df1[i]) / gap
        m12 = c.k3 + (c.k1 * c.B2 - c.A2 * c.F1 + (2.0 * c.B2 - c.A1) * c.F2 + c.B11 + df2[i]) / gap
        M[i] = [[m11, m12], [-2.0 * c.k3, c.B2]]
    if s[-1] == chart.s[-1]:
        M[-1] = M[0]
    return s, M


def fundamental_solution(system: VariationalSystem, steps: int) -> np.ndarray:
    h = system.period / steps
    grid = np.linspace(0.0, system.period, 2 * steps + 1)
    Ms = system.matrix(grid)
    U = np.eye(2)
    for i in range(steps):
        m0, mh, m1 = Ms[2 * i], Ms[2 * i + 1], Ms[2 * i + 2]
        k1 = m0 @ U
        k2 = mh @ (U + 0.5 * h * k1)
        k3 = mh @ (U + 0.5 * h * k2)
        k4 = m1 @ (U + h * k3)
        U = U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return U


def eigenvalues_2x2(U: np.ndarray) -> Tuple[complex, complex]:
    """Closed-form eigenvalues, larger modulus second."""
    tr = float(U[0, 0] + U[1, 1])
    det = float(U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0])
    root = cmath.sqrt(tr * tr - 4.0 * det)
    pair = sorted(((tr - root) / 2.0, (tr + root) / 2.0), key=abs)
    return complex(pair[0]), complex(pair[1])


def _label(moduli: List[float], tol: float) -> CycleClass:
    off = [abs(m - 1.0) > tol for m in moduli]
    if all(off):
        below = [m < 1.0 for m in moduli]
        return CycleClass.HYPERBOLIC_NODE if below[0] == below[1] else CycleClass.HYPERBOLIC_SADDLE
    if any(off):
        return CycleClass.SEMI_HYPERBOLIC
    return CycleClass.NONHYPERBOLIC


def classify(report_or_moduli, tol: Optional[float] = None) -> Tuple[CycleClass, Optional[CycleClass]]:
    """
    Hyperbolicity label from eigenvalue moduli.

    Args:
        report_or_moduli: ReturnMapReport or two moduli
        tol: distance from the unit circle counted as on it

    Returns:
        (label, alternative) where alternative is the label under the marginal
        tolerance when some modulus lies in the marginal band, else None
    """
    tol = CONFIG.HYPERBOLIC_TOL if tol is None else tol
    if isinstance(report_or_moduli, ReturnMapReport):
        moduli = report_or_moduli.moduli
    else:
        moduli = [abs(m) for m in report_or_moduli]
    label = _label(moduli, tol)
    marginal = any(CONFIG.MARGINAL_TOL < abs(m - 1.0) <= tol for m in moduli)
    alternative = _label(moduli, CONFIG.MARGINAL_TOL) if marginal else None
    return label, alternative


def _report(U: np.ndarray, period: float, multiplicity: int, method: str, steps: int = 0,
            liouville: Optional[float] = None, extras: Optional[dict] = None) -> ReturnMapReport:
    eig = eigenvalues_2x2(U)
    label, alternative = classify([abs(z) for z in eig])
    return ReturnMapReport(
        U=U, eigenvalues=eig, classification=label, period=period,
        multiplicity=multiplicity, liouville_residual=liouville,
        marginal=alternative is not None, alternative=alternative,
        method=method, steps=steps, extras=dict(extras or {}),
    )


def poincare_derivative(system: VariationalSystem) -> ReturnMapReport:
    """
    Integrate U' = M(s) U, U(0) = I over the chart period.

    RK4 starts at the configured step count and doubles until U(L) changes
    by less than the return tolerance.
    """
    logger = get_logger()
    steps = CONFIG.RETURN_STEPS
    U = fundamental_solution(system, steps)
    change = math.inf
    for _ in range(CONFIG.RETURN_MAX_DOUBLINGS):
        steps *= 2
        refined = fundamental_solution(system, steps)
        change = float(np.abs(refined - U).max())
        U = refined
        if change < CONFIG.RETURN_TOL:
            break
    if not np.all(np.isfinite(U)):
        raise IntegrationError("fundamental solution is not finite")
    if change >= CONFIG.RETURN_TOL:
        if change > 1e3 * CONFIG.RETURN_TOL:
            raise IntegrationError(f"RK4 did not settle: last doubling changed U(L) by {change:.3e}")
        logger.warning("ReturnMap", f"RK4 doubling change {change:.3e} above tolerance")

    expected = math.exp(system.trace_integral())
    det = float(np.linalg.det(U))
    liouville = abs(det - expected) / max(abs(expected), 1e-300)
    report = _report(U, system.period, system.multiplicity, "variational", steps, liouville)
    logger.info(
        "ReturnMap",
        f"eigenvalues {report.moduli[0]:.9f}, {report.moduli[1]:.9f} -> {report.classification.value}"
        + (" (marginal)" if report.marginal else ""),
    )
    return report


@dataclass
class FiniteDifferenceResult:
    """Central-difference Jacobian of the traced return map."""
    matrix: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    h: float
    richardson_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "coarse": self.coarse.tolist(),
            "fine": self.fine.tolist(),
            "h": self.h,
            "richardson_ratio": self.richardson_ratio,
        }


def _central(finder: CycleFinder, h: float) -> np.ndarray:
    jac = np.zeros((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        plus = finder.to_coords(finder.first_return(e).point)
        minus = finder.to_coords(finder.first_return(-e).point)
        jac[:, k] = (plus - minus) / (2.0 * h)
    return jac


def fd_return_map(field: VectorField, cycle: CycleCandidate, chart: TubularChart,
                  h: Optional[float] = None, ratio: bool = False) -> FiniteDifferenceResult:
    """
    Finite-difference derivative of the return map on the chart section.

    The section is the plane through gamma(0) normal to X1(0), with
    coordinates along X2(0) and N(0). Central differences at h and h/2 are
    combined by Richardson extrapolation.

    Args:
        field: the plane field normal
        cycle: refined cycle
        chart: tubular chart of the cycle
        h: section offset
        ratio: also difference at h/4 to estimate the Richardson ratio

    Returns:
        FiniteDifferenceResult
    """
    h = CONFIG.FD_STEP if h is None else float(h)
    if h >= chart.delta:
        raise ValueError(f"offset {h:.3e} outside the chart radius {chart.delta:.3e}")
    x1, x2, n = chart.frame(0.0)
    finder = CycleFinder(
        field, chart.gamma(0.0), cycle.foliation,
        max_turns=2 * chart.multiplicity,
        section=(x1, np.array([x2, n])),
    )
    coarse = _central(finder, h)
    fine = _central(finder, h / 2.0)
    result = FiniteDifferenceResult(
        matrix=(4.0 * fine - coarse) / 3.0, coarse=coarse, fine=fine, h=h,
    )
    if ratio:
        finest = _central(finder, h / 4.0)
        num = float(np.abs(coarse - fine).max())
        den = float(np.abs(fine - finest).max())
        result.richardson_ratio = num / den if den > 0 else None
    get_logger().debug("ReturnMap", f"finite-difference return map at h = {h:.1e}: {result.matrix.tolist()}")
    return result


def _cumulative(s: np.ndarray, values: np.ndarray) -> np.ndarray:
    return CubicSpline(s, values).antiderivative()(s)


def _triangular_solution(s: np.ndarray, m11: np.ndarray, m12: np.ndarray, m22: np.ndarray) -> np.ndarray:
    u11 = np.exp(_cumulative(s, m11))
    u22 = np.exp(_cumulative(s, m22))
    u12 = u11 * _cumulative(s, m12 * u22 / u11)
    return np.array([[u11[-1], u12[-1]], [0.0, u22[-1]]])


def _tube_integrability(chart: TubularChart, rings: int = 16) -> float:
    """Largest |<curl eta, eta>| on four off-cycle points at each of `rings` stations."""
    d = 0.25 * chart.delta
    worst = 0.0
    for s in np.linspace(chart.s[0], chart.s[-1], rings, endpoint=False):
        for v, w in ((d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d)):
            jet = chart.field.jet(chart.alpha(float(s), v, w), 1)
            worst = max(worst, abs(integrability_scalar(jet)))
    return worst


def integrable_closed_form(field: VectorField, chart: TubularChart,
                           profile: Optional[FrameProfile] = None) -> ReturnMapReport:
    """
    Return-map derivative of a cycle of an integrable plane field by quadrature.

    du/dv0 = exp(int -F1'/(F1 - k2)), dw/dw0 = exp(int B2), dw/dv0 = 0, and
    dv/dw0 from the triangular system. The off-diagonal entry is computed
    with both (F2 + k1) and (2 F2 + k1) in its numerator; the one closer to the
    frame coefficient A2 is used and recorded.

    Raises:
        NonIntegrableError: <curl eta, eta> does not vanish on a tube around the cycle
    """
    logger = get_logger()
    worst = max(abs(integrability_scalar(j)) for j in chart.jets)
    if worst > CONFIG.INTEGRABLE_TOL:
        raise NonIntegrableError(f"<curl eta, eta> reaches {worst:.3e} on the cycle")
    worst = _tube_integrability(chart)
    if worst > CONFIG.INTEGRABLE_TOL:
        raise NonIntegrableError(f"<curl eta, eta> reaches {worst:.3e} near the cycle")

    profile = profile if profile is not None else frame_profile(chart)
    s = profile.s
    f1, f2 = profile["F1"], profile["F2"]
    k1, k2 = profile["k1"], profile["k2"]
    b2 = profile["B2"]
    df1 = profile.at("F1", s, 1)
    df2 = profile.at("F2", s, 1)
    gap = f1 - k2
    m11 = -df1 / gap

    variants = {
        "F2+k1": (-b2 * (f2 + k1) - df2) / gap,
        "2F2+k1": (-b2 * (2.0 * f2 + k1) - df2) / gap,
    }
    residuals = {name: float(np.abs(m12 - profile["A2"]).max()) for name, m12 in variants.items()}
    chosen = min(residuals, key=residuals.get)
    U = _triangular_solution(s, m11, variants[chosen], b2)
    logger.info("ReturnMap", f"integrable closed form uses the ({chosen}) numerator "
                             f"(residuals {residuals['F2+k1']:.2e}, {residuals['2F2+k1']:.2e})")
    return _report(
        U, chart.period, chart.multiplicity, "integrable-closed-form",
        extras={"variant": chosen, "variant_residuals": residuals},
    )


def reverse_orientation(report: ReturnMapReport) -> ReturnMapReport:
    """
    Report for the same leaf traversed backwards.

    Reversing X1 reverses X2 = N x X1, so the inverse map is conjugated by
    diag(-1, 1).
    """
    flip = np.diag([-1.0, 1.0])
    U = flip @ np.linalg.inv(report.U) @ flip
    return _report(U, report.period, report.multiplicity, report.method, report.steps,
                   report.liouville_residual, report.extras)
