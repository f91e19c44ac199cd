"""
Tubular chart along a principal cycle.

The cycle is re-sampled at equal arc-length steps; the Darboux frame
{X1, X2, N} (tangent, companion principal direction, unit field) and the
coefficients k1, k2, k3 of

    X1' =  k1 X2 + k2 N
    X2' = -k1 X1 + k3 N
    N'  = -k2 X1 - k3 X2

are stored at the samples and interpolated with periodic cubic splines.
Chart coordinates are alpha(s, v, w) = gamma(s) + v X2(s) + w N(s).
"""
from dataclasses import dataclass, field as dataclass_field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from config.settings import CONFIG
from core import dual
from core.errors import ChartDomainError, ChartError, UmbilicError
from core.fieldspec import FieldJet, VectorField
from core.pointwise import (
    cross3,
    principal_data,
    principal_derivative,
    principal_second_derivative,
)
from core.tracing import CycleCandidate, LineTracer
from utils.logger import get_logger

COEFF_NAMES = ("L1", "L2", "L3", "L4", "L5", "L6")
PLANE_NAMES = ("M1", "M2", "M3")
FIRST_ORDER = ("A1", "A2", "B1", "B2", "C1", "C2", "E1", "E2", "F1", "F2")


def _unit_field(field: VectorField) -> VectorField:
    if field.normalize:
        return field
    return VectorField(field.expr, normalize=True, name=field.name)


@dataclass
class TubularChart:
    """Sampled Darboux frame along a closed principal line."""
    field: VectorField
    foliation: int
    length: float
    multiplicity: int
    s: np.ndarray
    points: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    N: np.ndarray
    k: np.ndarray               # columns k1, k2, k3
    jets: List[FieldJet] = dataclass_field(repr=False)
    delta: float = 0.0
    closure_gap: float = 0.0
    periodic: bool = True

    @property
    def period(self) -> float:
        """Chart period: one turn, or two when the frame flips after one."""
        return self.length * self.multiplicity

    @property
    def samples(self) -> int:
        return len(self.s) - 1

    def _spline(self, values: np.ndarray) -> CubicSpline:
        bc = 'periodic' if self.periodic else 'not-a-knot'
        return CubicSpline(self.s, values, bc_type=bc, axis=0)

    @cached_property
    def _gamma(self) -> CubicSpline:
        return self._spline(self.points)

    @cached_property
    def _frame(self) -> Tuple[CubicSpline, CubicSpline, CubicSpline]:
        return self._spline(self.X1), self._spline(self.X2), self._spline(self.N)

    @cached_property
    def _k(self) -> CubicSpline:
        return self._spline(self.k)

    def wrap(self, s):
        if not self.periodic:
            return s
        return np.mod(s, self.period)

    def gamma(self, s) -> np.ndarray:
        return self._gamma(self.wrap(s))

    def gamma_prime(self, s) -> np.ndarray:
        return self._gamma(self.wrap(s), 1)

    def curvatures(self, s) -> np.ndarray:
        return self._k(self.wrap(s))

    def curvature_rates(self, s) -> np.ndarray:
        return self._k(self.wrap(s), 1)

    def frame(self, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal right-handed frame at s (spline values re-orthonormalized)."""
        s = self.wrap(s)
        x1, x2, n = (np.asarray(sp(s)) for sp in self._frame)
        n = n / np.linalg.norm(n)
        x1 = x1 - float(x1 @ n) * n
        x1 /= np.linalg.norm(x1)
        x2 = cross3(n, x1)
        return x1, x2, n

    def frame_derivatives(self, s: float) -> Dict[str, np.ndarray]:
        """Frame, its first s-derivatives and the second derivatives of X2 and N."""
        x1, x2, n = self.frame(s)
        k1, k2, k3 = self.curvatures(s)
        dk1, dk2, dk3 = self.curvature_rates(s)
        dx1 = k1 * x2 + k2 * n
        dx2 = -k1 * x1 + k3 * n
        dn = -k2 * x1 - k3 * x2
        return {
            "X1": x1, "X2": x2, "N": n,
            "dX1": dx1, "dX2": dx2, "dN": dn,
            "ddX2": -dk1 * x1 - k1 * dx1 + dk3 * n + k3 * dn,
            "ddN": -dk2 * x1 - k2 * dx1 - dk3 * x2 - k3 * dx2,
        }

    def alpha(self, s: float, v: float, w: float) -> np.ndarray:
        self.check_domain(v, w)
        _, x2, n = self.frame(s)
        return np.asarray(self.gamma(s)) + v * x2 + w * n

    def check_domain(self, v: float, w: float) -> None:
        if abs(v) >= self.delta or abs(w) >= self.delta:
            raise ChartDomainError(
                f"chart point (v, w) = ({v:.3e}, {w:.3e}) outside the injectivity radius {self.delta:.3e}"
            )

    def orthonormality_residual(self) -> float:
        frames = np.stack([self.X1, self.X2, self.N], axis=1)
        gram = np.einsum('nij,nkj->nik', frames, frames)
        dets = np.linalg.det(frames)
        return float(max(np.abs(gram - np.eye(3)).max(), np.abs(dets - 1.0).max()))

    def darboux_residual(self) -> float:
        """Largest mismatch between spline-differentiated frame and the Darboux system."""
        sx1, sx2, sn = self._frame
        dx1, dx2, dn = sx1(self.s, 1), sx2(self.s, 1), sn(self.s, 1)
        k1, k2, k3 = self.k[:, 0:1], self.k[:, 1:2], self.k[:, 2:3]
        r1 = dx1 - (k1 * self.X2 + k2 * self.N)
        r2 = dx2 - (-k1 * self.X1 + k3 * self.N)
        r3 = dn + (k2 * self.X1 + k3 * self.X2)
        return float(max(np.abs(r1).max(), np.abs(r2).max(), np.abs(r3).max()))

    def to_dict(self, stride: Optional[int] = None) -> dict:
        """Chart export: subsampled curve, frame and Darboux coefficients."""
        stride = CONFIG.CHART_EXPORT_STRIDE if stride is None else max(1, int(stride))
        idx = np.arange(0, len(self.s), stride)
        return {
            "length": self.length,
            "period": self.period,
            "multiplicity": self.multiplicity,
            "foliation": self.foliation,
            "delta": self.delta,
            "closure_gap": self.closure_gap,
            "samples": [
                {
                    "s": float(self.s[i]),
                    "gamma": self.points[i].tolist(),
                    "X1": self.X1[i].tolist(),
                    "X2": self.X2[i].tolist(),
                    "N": self.N[i].tolist(),
                    "k1": float(self.k[i, 0]),
                    "k2": float(self.k[i, 1]),
                    "k3": float(self.k[i, 2]),
                }
                for i in idx
            ],
        }


def _darboux(jet: FieldJet, x1: np.ndarray, x2: np.ndarray, n: np.ndarray) -> np.ndarray:
    dx1, _ = principal_derivative(jet, x1, x1)
    k3 = -float(x2 @ jet.jacobian @ x1)
    return np.array([float(dx1 @ x2), float(dx1 @ n), k3])


def _align(d: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return -d if float(d @ reference) < 0 else d


def build_chart(field: VectorField, cycle: CycleCandidate, samples: Optional[int] = None) -> TubularChart:
    """
    Re-sample a refined cycle and build its Darboux frame.

    Args:
        field: the plane field normal
        cycle: refined cycle from find_cycle
        samples: samples per turn

    Returns:
        TubularChart covering one turn, or two when the continued frame flips

    X2 starts as N x X1 and is continued as the other principal direction.
    That direction is +-N x X1 at every sample, and X1 and N are single-valued
    along a closed leaf, so a resolved continuation returns to itself and the
    chart is L-periodic. A flip means two samples differ by more than a
    quarter turn of the frame; it is reported as multiplicity 2.
    """
    logger = get_logger()
    field = _unit_field(field)
    n = CONFIG.CHART_SAMPLES if samples is None else int(samples)
    if n < 16:
        raise ChartError(f"at least 16 chart samples required, got {n}")
    h = cycle.length / n
    tracer = LineTracer(field, cycle.foliation)
    other = 2 if cycle.foliation == 1 else 1

    p = np.array(cycle.anchor, dtype=float)
    tangent = np.array(cycle.direction, dtype=float)
    companion: Optional[np.ndarray] = None
    points, x1s, x2s, ns, jets = [], [], [], [], []

    for i in range(n + 1):
        jet = field.jet(p, 2)
        data = principal_data(jet)
        if data.gap < CONFIG.get_umbilic_stop_tol(data.k1, data.k2):
            raise UmbilicError(p, data.gap)
        x1 = _align(data.direction(cycle.foliation), tangent)
        x2 = data.direction(other)
        if companion is None:
            x2 = cross3(data.normal, x1)
        else:
            x2 = _align(x2, companion)
        points.append(p.copy())
        x1s.append(x1)
        x2s.append(x2)
        ns.append(data.normal)
        jets.append(jet)
        tangent, companion = x1, x2
        if i < n:
            p, _ = tracer.step(p, x1, h)

    closure_gap = float(np.linalg.norm(points[-1] - points[0]))
    if closure_gap > 1e-6 * max(1.0, cycle.length):
        raise ChartError(f"re-traced cycle does not close (gap {closure_gap:.3e})")

    multiplicity = 1 if float(x2s[-1] @ x2s[0]) > 0 else 2
    if multiplicity == 2:
        logger.warning("Chart", "continued frame flips after one turn; using the second-return map")
        # the chart runs over two turns; X2 = N x X1 keeps the frame right-handed
        points = points[:-1] + points
        x1s = x1s[:-1] + x1s
        x2s = [cross3(nv, t) for nv, t in zip(ns[:-1] + ns, x1s)]
        ns = ns[:-1] + ns
        jets = jets[:-1] + jets

    points = np.array(points)
    x1s, x2s, ns = np.array(x1s), np.array(x2s), np.array(ns)
    # exact periodic closure for the splines
    points[-1], x1s[-1], x2s[-1], ns[-1] = points[0], x1s[0], x2s[0], ns[0]
    jets[-1] = jets[0]

    ks = np.array([_darboux(j, a, b, c) for j, a, b, c in zip(jets, x1s, x2s, ns)])
    scale = max(1.0, float(np.abs(ks).max()))
    chart = TubularChart(
        field=field,
        foliation=cycle.foliation,
        length=float(cycle.length),
        multiplicity=multiplicity,
        s=np.linspace(0.0, cycle.length * multiplicity, len(points)),
        points=points, X1=x1s, X2=x2s, N=ns, k=ks, jets=jets,
        delta=CONFIG.CHART_DELTA_SCALE / scale,
        closure_gap=closure_gap,
    )
    logger.info(
        "Chart",
        f"chart built: L = {cycle.length:.8f}, {'L' if multiplicity == 1 else '2L'}-periodic frame, "
        f"delta = {chart.delta:.3e}, Darboux residual {chart.darboux_residual():.2e}",
    )
    return chart


def chart_from_samples(field: VectorField, points: Sequence, x1: Sequence, length: float,
                       foliation: int = 1, periodic: bool = False) -> TubularChart:
    """
    Chart over a given sampled curve with given unit tangents.

    k1 is taken from the spline derivative of the tangents, so the curve need
    not be a principal line. Used for open surrogate curves.
    """
    field = _unit_field(field)
    points = np.asarray(points, dtype=float)
    x1s = np.asarray(x1, dtype=float)
    jets = [field.jet(p, 2) for p in points]
    ns = np.array([j.value for j in jets])
    x2s = np.array([cross3(nv, t) for nv, t in zip(ns, x1s)])
    s = np.linspace(0.0, length, len(points))
    bc = 'periodic' if periodic else 'not-a-knot'
    dx1 = CubicSpline(s, x1s, bc_type=bc, axis=0)(s, 1)
    ks = np.array([
        [float(d @ b), -float(t @ j.jacobian @ t), -float(b @ j.jacobian @ t)]
        for d, b, t, j in zip(dx1, x2s, x1s, jets)
    ])
    return TubularChart(
        field=field, foliation=foliation, length=float(length), multiplicity=1,
        s=s, points=points, X1=x1s, X2=x2s, N=ns, k=ks, jets=jets,
        delta=CONFIG.CHART_DELTA_SCALE / max(1.0, float(np.abs(ks).max())),
        periodic=periodic,
    )


@dataclass
class ChartCoeffs:
    """Quadratic and plane coefficients in chart coordinates (s, v, w)."""
    s: float
    v: float
    w: float
    L: np.ndarray                               # L1..L6
    M: np.ndarray                               # M1..M3
    dL1: Optional[np.ndarray] = None            # (d/dv, d/dw) on the cycle
    dM1: Optional[np.ndarray] = None

    def __getattr__(self, name: str):
        if name in COEFF_NAMES:
            return float(self.L[COEFF_NAMES.index(name)])
        if name in PLANE_NAMES:
            return float(self.M[PLANE_NAMES.index(name)])
        raise AttributeError(name)

    @property
    def det_a(self) -> float:
        return float(self.L[1] * self.M[2] - self.L[2] * self.M[1])

    def form(self, ds: float, dv: float, dw: float) -> float:
        c = self.L
        return float(c[0] * ds * ds + c[1] * ds * dv + c[2] * ds * dw
                     + c[3] * dv * dv + c[4] * dv * dw + c[5] * dw * dw)

    def to_dict(self) -> dict:
        out = {name: float(v) for name, v in zip(COEFF_NAMES, self.L)}
        out.update({name: float(v) for name, v in zip(PLANE_NAMES, self.M)})
        if self.dL1 is not None:
            out["L1_v"], out["L1_w"] = (float(x) for x in self.dL1)
            out["M1_v"], out["M1_w"] = (float(x) for x in self.dM1)
        return out


def _det(a, b, c):
    return dual.dot(a, dual.cross(b, c))


def _pullback(eta, J, columns) -> Tuple[list, list]:
    """
    Mixed product ((J + J^T) dp, dp, eta) and plane <eta, dp> pulled back
    through dp = [a_s, X2, N] (ds, dv, dw). Dual-aware.
    """
    s2 = J + dual.linear(np.transpose)(J)
    images = [dual.matvec(s2, c) for c in columns]
    q = [[_det(images[i], columns[j], eta) for j in range(3)] for i in range(3)]
    coeffs = [
        q[0][0], q[0][1] + q[1][0], q[0][2] + q[2][0],
        q[1][1], q[1][2] + q[2][1], q[2][2],
    ]
    plane = [dual.dot(eta, c) for c in columns]
    return coeffs, plane


def _jet_at(chart: TubularChart, point: np.ndarray, s: float, v: float, w: float, order: int) -> FieldJet:
    if v == 0.0 and w == 0.0 and order <= 2 and chart.periodic:
        idx = np.searchsorted(chart.s, chart.wrap(s))
        if idx < len(chart.s) and abs(chart.s[idx] - chart.wrap(s)) < 1e-14:
            return chart.jets[idx]
    return chart.field.jet(point, order)


def chart_coeffs(field: VectorField, chart: TubularChart, s: float, v: float = 0.0,
                 w: float = 0.0) -> ChartCoeffs:
    """
    Coefficients L1..L6, M1..M3 at alpha(s, v, w).

    On the cycle (v = w = 0) also returns the partials of L1 and M1 in v and w,
    exact through second-order field jets.

    Args:
        field: the plane field normal (must be the chart's field)
        chart: tubular chart
        s, v, w: chart coordinates

    Returns:
        ChartCoeffs
    """
    chart.check_domain(v, w)
    f = chart.frame_derivatives(s)
    a_s = f["X1"] + v * f["dX2"] + w * f["dN"]
    point = np.asarray(chart.gamma(s)) + v * f["X2"] + w * f["N"]
    on_cycle = v == 0.0 and w == 0.0
    jet = _jet_at(chart, point, s, v, w, 2 if on_cycle else 1)

    coeffs, plane = _pullback(jet.value, jet.jacobian, [a_s, f["X2"], f["N"]])
    result = ChartCoeffs(s=float(s), v=float(v), w=float(w),
                         L=np.array(coeffs, dtype=float), M=np.array(plane, dtype=float))
    if on_cycle:
        dl1, dm1 = [], []
        for direction, rate in ((f["X2"], f["dX2"]), (f["N"], f["dN"])):
            eta = dual.Dual(jet.value, jet.jacobian @ direction)
            J = dual.Dual(jet.jacobian, jet.hessian @ direction)
            a = dual.Dual(a_s, rate)
            c, m = _pullback(eta, J, [a, f["X2"], f["N"]])
            dl1.append(c[0].eps)
            dm1.append(m[0].eps)
        result.dL1 = np.array(dl1, dtype=float)
        result.dM1 = np.array(dm1, dtype=float)
    return result


def plane_partials(chart: TubularChart, s: float, v: float, w: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    M1..M3 and their partials in (s, v, w) at alpha(s, v, w).

    Returns:
        (M, dM) with dM[i, j] = dM_i / d(s, v, w)_j
    """
    chart.check_domain(v, w)
    f = chart.frame_derivatives(s)
    a_s = f["X1"] + v * f["dX2"] + w * f["dN"]
    point = np.asarray(chart.gamma(s)) + v * f["X2"] + w * f["N"]
    jet = chart.field.jet(point, 1)
    tangents = [
        (a_s, f["dX1"] + v * f["ddX2"] + w * f["ddN"], f["dX2"], f["dN"]),
        (f["X2"], f["dX2"], np.zeros(3), np.zeros(3)),
        (f["N"], f["dN"], np.zeros(3), np.zeros(3)),
    ]
    values = np.array([float(jet.value @ c) for c in (a_s, f["X2"], f["N"])])
    partials = np.zeros((3, 3))
    for j, (move, d_as, d_x2, d_n) in enumerate(tangents):
        d_eta = jet.jacobian @ move
        for i, (col, d_col) in enumerate(((a_s, d_as), (f["X2"], d_x2), (f["N"], d_n))):
            partials[i, j] = float(d_eta @ col) + float(jet.value @ d_col)
    return values, partials


def integrability_function(field: VectorField, chart: TubularChart, s: float, v: float = 0.0,
                           w: float = 0.0) -> float:
    """
    f(s, v, w) with omega ^ d omega = f ds ^ dv ^ dw for omega = M1 ds + M2 dv + M3 dw.

    Equals -2 k3(s) on the cycle and vanishes identically for integrable fields.
    """
    m, dm = plane_partials(chart, s, v, w)
    m1, m2, m3 = m
    return float(
        m1 * (dm[2, 1] - dm[1, 2])
        + m2 * (dm[0, 2] - dm[2, 0])
        + m3 * (dm[1, 0] - dm[0, 1])
    )


@dataclass
class FrameCoeffs:
    """
    Taylor coefficients of the unit principal fields in the chart.

    X1(p) = X1 + (A1 v + A2 w) X2 + (B1 v + B2 w) N + O(2)
    X2(p) = (C1 v + C2 w) X1 + (1 + E1 v + E2 w) X2 + (F1 v + F2 w) N + O(2)
    """
    s: float
    k1: float
    k2: float
    k3: float
    A1: float
    A2: float
    B1: float
    B2: float
    C1: float
    C2: float
    E1: float
    E2: float
    F1: float
    F2: float
    second: Dict[str, float] = dataclass_field(default_factory=dict)

    def __getattr__(self, name: str):
        second = self.__dict__.get("second", {})
        if name in second:
            return second[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        out = {name: float(getattr(self, name)) for name in ("s", "k1", "k2", "k3") + FIRST_ORDER}
        out.update({k: float(v) for k, v in self.second.items()})
        return out


def _exact_frame(chart: TubularChart, jet: FieldJet, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = principal_data(jet)
    x1_ref, _, _ = chart.frame(s)
    x1 = _align(data.direction(chart.foliation), x1_ref)
    return x1, cross3(data.normal, x1), data.normal


def _first_order(jet: FieldJet, x1, x2, n) -> Dict[str, float]:
    out = {}
    for suffix, t in (("1", x2), ("2", n)):
        dx1, dy = principal_derivative(jet, x1, t)
        dx2 = -dy  # X2 = N x X1 = -(eta x X1)
        out["A" + suffix] = float(dx1 @ x2)
        out["B" + suffix] = float(dx1 @ n)
        out["C" + suffix] = float(dx2 @ x1)
        out["E" + suffix] = float(dx2 @ x2)
        out["F" + suffix] = float(dx2 @ n)
    return out


def frame_coeffs(field: VectorField, chart: TubularChart, s: float, order: int = 1) -> FrameCoeffs:
    """
    Frame Taylor coefficients at chart parameter s.

    Args:
        field: the plane field normal
        chart: tubular chart
        s: arc-length parameter
        order: 1, or 2 for the second-order coefficients (third-order jets)

    Returns:
        FrameCoeffs
    """
    if order not in (1, 2):
        raise ValueError(f"frame coefficient order must be 1 or 2, got {order}")
    field = _unit_field(field)
    point = np.asarray(chart.gamma(s))
    jet = field.jet(point, 3 if order == 2 else 2)
    data = principal_data(jet)
    if data.gap < CONFIG.get_umbilic_stop_tol(data.k1, data.k2):
        raise UmbilicError(point, data.gap)
    x1, x2, n = _exact_frame(chart, jet, s)
    k1, k2, k3 = (float(c) for c in chart.curvatures(s))
    coeffs = FrameCoeffs(s=float(s), k1=k1, k2=k2, k3=k3, **_first_order(jet, x1, x2, n))

    if order == 2:
        pairs = {"10": (x2, x2), "11": (x2, n), "01": (n, n)}
        second = {}
        for suffix, (u, t) in pairs.items():
            ddx1, ddy = principal_second_derivative(jet, x1, u, t)
            ddx2 = -ddy
            second["A" + suffix] = float(ddx1 @ x2)
            second["B" + suffix] = float(ddx1 @ n)
            second["C" + suffix] = float(ddx2 @ x1)
            second["E" + suffix] = float(ddx2 @ x2)
            second["F" + suffix] = float(ddx2 @ n)
        c = coeffs
        second["b01"] = 0.5 * (2 * c.A2 * c.F2 - second["B01"])
        second["f01"] = 0.5 * (2 * c.F2 * c.E2 + 2 * c.B2 * c.C2 - second["F01"])
        second["f11"] = (c.F1 * c.E2 + c.F2 * c.E1 + c.B1 * c.C2 + c.B2 * c.C1 - second["F11"])
        second["f10"] = 0.5 * (2 * c.F1 * c.E1 + 2 * c.B1 * c.C1 - second["F10"])
        coeffs.second = second
    return coeffs


@dataclass
class FrameProfile:
    """First-order frame coefficients at every chart sample, with periodic splines."""
    s: np.ndarray
    values: Dict[str, np.ndarray]
    periodic: bool = True

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    @cached_property
    def _splines(self) -> Dict[str, CubicSpline]:
        bc = 'periodic' if self.periodic else 'not-a-knot'
        return {k: CubicSpline(self.s, v, bc_type=bc) for k, v in self.values.items()}

    def at(self, name: str, s, derivative: int = 0):
        sp = self._splines[name]
        if self.periodic:
            s = np.mod(s, self.s[-1])
        return sp(s, derivative)

    def integral(self, name: str) -> float:
        return float(self._splines[name].integrate(self.s[0], self.s[-1]))


def frame_profile(chart: TubularChart) -> FrameProfile:
    """Frame coefficients over all samples, from the stored second-order jets."""
    rows = []
    for jet, x1, x2, n, k in zip(chart.jets, chart.X1, chart.X2, chart.N, chart.k):
        row = _first_order(jet, x1, x2, n)
        row.update(k1=k[0], k2=k[1], k3=k[2])
        rows.append(row)
    names = rows[0].keys()
    values = {name: np.array([r[name] for r in rows]) for name in names}
    if chart.periodic:
        for arr in values.values():
            arr[-1] = arr[0]
    return FrameProfile(s=chart.s.copy(), values=values, periodic=chart.periodic)
