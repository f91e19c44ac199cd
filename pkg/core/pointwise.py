"""
Pointwise geometry of the plane field orthogonal to eta.

Normal curvature, geodesic torsion, the projected shape operator and its
eigenpairs (principal curvatures and directions), the integrability scalar,
the implicit quadratic coefficients and partially-umbilic detection.

Sign convention: k1 <= k2 are the critical values of the normal curvature
k(dr) = -<J dr, dr> / (|dr|^2 |eta|). The 2x2 restriction of the projected
operator has eigenvalues -k1 |eta| and -k2 |eta|.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.settings import CONFIG
from core import dual
from core.errors import FieldSingularityError, ReducedFormError
from core.fieldspec import FieldJet, VectorField
from utils.logger import get_logger

_AXES = np.eye(3)


@dataclass(frozen=True)
class ProjectedOperator:
    """S = (J + J^T)/2 projected onto the plane pi = eta^perp."""
    point: np.ndarray
    normal: np.ndarray      # unit eta
    symmetric: np.ndarray   # S, 3x3
    matrix: np.ndarray      # 2x2 restriction in `basis`
    basis: np.ndarray       # rows b1, b2

    def apply(self, v: np.ndarray) -> np.ndarray:
        """P(v) = S v - <S v, eta> eta."""
        sv = self.symmetric @ v
        return sv - float(sv @ self.normal) * self.normal


@dataclass(frozen=True)
class PrincipalData:
    """Principal curvatures k1 <= k2 and unit principal directions."""
    k1: float
    k2: float
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray
    umbilic: bool

    @property
    def gap(self) -> float:
        return self.k2 - self.k1

    def direction(self, foliation: int) -> np.ndarray:
        if foliation == 1:
            return self.e1
        if foliation == 2:
            return self.e2
        raise ValueError(f"foliation must be 1 or 2, got {foliation}")


@dataclass(frozen=True)
class ReducedForm:
    """Quadratic in (dy, dz) after eliminating dx on the plane (needs eta_1 != 0)."""
    L: float  # dz^2
    M: float  # dy dz
    N: float  # dy^2


@dataclass(frozen=True)
class ImplicitCoeffs:
    """
    Coefficients of L1 dx^2 + L2 dx dy + L3 dx dz + L4 dy^2 + L5 dy dz + L6 dz^2.

    `coefficients` follow the displayed closed form, `mixed` come straight
    from the mixed product ((J + J^T) dr, dr, eta). Both agree on the plane.
    """
    point: np.ndarray
    coefficients: np.ndarray
    mixed: np.ndarray
    plane: np.ndarray
    reduced: Optional[ReducedForm] = None

    def form(self, dr: np.ndarray, which: str = "coefficients") -> float:
        return quadratic_form(getattr(self, which), dr)


def _direction(dr) -> Tuple[np.ndarray, float]:
    d = np.asarray(dr, dtype=float)
    n2 = float(d @ d)
    if n2 <= CONFIG.ZERO_DIRECTION_EPS ** 2:
        raise ValueError("zero direction")
    return d, n2


def _unit_normal(jet: FieldJet) -> Tuple[np.ndarray, float]:
    n = jet.norm
    if n < CONFIG.FIELD_SINGULARITY_EPS:
        raise FieldSingularityError(jet.point, n)
    return jet.value / n, n


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors (np.cross is slow on single vectors)."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def skew(v: np.ndarray) -> np.ndarray:
    """Matrix of v x (.)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def normal_curvature(jet: FieldJet, dr) -> float:
    """k(dr) = -<J dr, dr> / (<dr, dr> |eta|); independent of |dr|."""
    d, n2 = _direction(dr)
    return -float(d @ jet.jacobian @ d) / (n2 * jet.norm)


def geodesic_torsion(jet: FieldJet, dr) -> float:
    """Mixed product (J dr, dr, eta) / <dr, dr>."""
    d, n2 = _direction(dr)
    return float(np.linalg.det(np.array([jet.jacobian @ d, d, jet.value]))) / n2


def integrability_scalar(jet: FieldJet) -> float:
    """<curl eta, eta> / |eta|^2; zero iff the plane field is integrable at p."""
    _, n = _unit_normal(jet)
    return float(jet.curl @ jet.value) / (n * n)


def mixed_product(jet: FieldJet, dr) -> float:
    """((J + J^T) dr, dr, eta); vanishes exactly along principal directions."""
    d = np.asarray(dr, dtype=float)
    s2 = jet.jacobian + jet.jacobian.T
    return float(np.linalg.det(np.array([s2 @ d, d, jet.value])))


def rotation_residual(jet: FieldJet, dr) -> float:
    """2 (J dr, dr, eta) + <curl eta, eta> |dr|^2; scales by f^2 under eta -> f eta."""
    d = np.asarray(dr, dtype=float)
    twist = float(np.linalg.det(np.array([jet.jacobian @ d, d, jet.value])))
    return 2.0 * twist + float(jet.curl @ jet.value) * float(d @ d)


def plane_basis(normal: np.ndarray) -> np.ndarray:
    """
    Deterministic orthonormal basis of normal^perp.

    b1 = normalize(normal x a) with a the standard axis least aligned with
    the normal (lowest index on ties), b2 = normal x b1.
    """
    axis = _AXES[int(np.argmin(np.abs(normal)))]
    b1 = cross3(normal, axis)
    b1 /= np.linalg.norm(b1)
    b2 = cross3(normal, b1)
    return np.array([b1, b2])


def projected_operator(jet: FieldJet) -> ProjectedOperator:
    normal, _ = _unit_normal(jet)
    basis = plane_basis(normal)
    s = 0.5 * (jet.jacobian + jet.jacobian.T)
    restricted = basis @ s @ basis.T
    restricted = 0.5 * (restricted + restricted.T)
    return ProjectedOperator(
        point=jet.point, normal=normal, symmetric=s, matrix=restricted, basis=basis
    )


def principal_data(jet: FieldJet, tol: Optional[float] = None) -> PrincipalData:
    """
    Principal curvatures and directions at the jet's point.

    Args:
        jet: first-order (or higher) jet of the field
        tol: umbilic gap tolerance; default is relative to |k1| + |k2|

    Returns:
        PrincipalData with k1 <= k2 and {e1, e2, eta/|eta|} right-handed
    """
    op = projected_operator(jet)
    n = jet.norm
    mu, vecs = np.linalg.eigh(op.matrix)
    # largest P-eigenvalue gives the smallest curvature
    k1, k2 = -mu[1] / n, -mu[0] / n
    coords = vecs[:, 1]
    lead = coords[0] if abs(coords[0]) > 1e-12 else coords[1]
    if lead < 0:
        coords = -coords
    e1 = coords @ op.basis
    e1 /= np.linalg.norm(e1)
    e2 = cross3(op.normal, e1)
    if tol is None:
        tol = CONFIG.get_umbilic_tol(k1, k2)
    return PrincipalData(
        k1=float(k1), k2=float(k2), e1=e1, e2=e2,
        normal=op.normal, umbilic=bool(k2 - k1 < tol),
    )


def is_partially_umbilic(jet: FieldJet, tol: float) -> bool:
    return principal_data(jet).gap < tol


def quadratic_form(coefficients: np.ndarray, dr) -> float:
    x, y, z = np.asarray(dr, dtype=float)
    c = coefficients
    return float(c[0] * x * x + c[1] * x * y + c[2] * x * z
                 + c[3] * y * y + c[4] * y * z + c[5] * z * z)


def _coefficients_of(sym_matrix: np.ndarray) -> np.ndarray:
    m = sym_matrix
    return np.array([m[0, 0], 2 * m[0, 1], 2 * m[0, 2], m[1, 1], 2 * m[1, 2], m[2, 2]])


def implicit_coeffs(jet: FieldJet, reduced: bool = False) -> ImplicitCoeffs:
    """
    Coefficients of the implicit quadratic whose roots on the plane are the
    principal directions.

    Args:
        jet: first-order jet
        reduced: also eliminate dx through the plane equation

    Returns:
        ImplicitCoeffs; `reduced` populated on request
    """
    eta = jet.value
    _unit_normal(jet)
    s2 = jet.jacobian + jet.jacobian.T
    k = -s2 @ skew(eta)
    mixed_sym = 0.5 * (k + k.T)
    curl = jet.curl
    displayed_sym = mixed_sym + 0.5 * (np.outer(eta, curl) + np.outer(curl, eta))

    coeffs = ImplicitCoeffs(
        point=jet.point,
        coefficients=_coefficients_of(displayed_sym),
        mixed=_coefficients_of(mixed_sym),
        plane=eta.copy(),
    )

    basis = plane_basis(eta / jet.norm)
    probe = basis[0] + basis[1]
    residual = abs(coeffs.form(probe) - coeffs.form(probe, "mixed"))
    scale = 1.0 + float(np.abs(coeffs.mixed).max())
    if residual > 1e-10 * scale:
        get_logger().warning(
            "Pointwise",
            f"implicit coefficient forms disagree on the plane by {residual:.3e} at {list(jet.point)}"
        )

    if reduced:
        coeffs = ImplicitCoeffs(
            point=coeffs.point, coefficients=coeffs.coefficients, mixed=coeffs.mixed,
            plane=coeffs.plane, reduced=reduced_form(coeffs),
        )
    return coeffs


def reduced_form(coeffs: ImplicitCoeffs) -> ReducedForm:
    e1, e2, e3 = coeffs.plane
    if abs(e1) <= CONFIG.REDUCED_FORM_MIN_ETA1:
        raise ReducedFormError(
            f"eta_1 = {e1:.3e} too small for the reduced form; use the six coefficients"
        )
    L1, L2, L3, L4, L5, L6 = coeffs.coefficients
    return ReducedForm(
        L=float(L1 * e3 * e3 - L3 * e1 * e3 + L6 * e1 * e1),
        M=float(2 * L1 * e2 * e3 - L2 * e1 * e3 - L3 * e1 * e2 + L5 * e1 * e1),
        N=float(L1 * e2 * e2 - L2 * e1 * e2 + L4 * e1 * e1),
    )


def angle_quotient(field: VectorField, point, dr, t: float) -> float:
    """
    Rotation angle of the plane between p and p + t u (u = unit dr projected
    on the plane), measured in span{eta(p), u}, divided by t.

    Tends to normal_curvature(dr) as t -> 0 with first-order error.
    """
    p = np.asarray(point, dtype=float)
    n0 = field.value(p)
    d = np.asarray(dr, dtype=float)
    u = d - float(d @ n0) * n0
    u /= np.linalg.norm(u)
    eta = field.value(p + t * u)
    phi = np.arctan2(float(eta @ u), float(eta @ n0))
    return -float(phi) / t


def _frame_rates(eta, J, H, x, t):
    """
    Derivative along t of the unit principal field x and of y = eta x x.

    Works on plain arrays and on first-order duals of them. Requires a unit
    field and x an exact principal direction at the point.
    """
    y = dual.cross(eta, x)
    jt = dual.matvec(J, t)
    b = -dual.dot(x, jt)
    s = dual.sym(J)
    st = dual.sym(dual.matvec(H, t))
    sx = dual.matvec(s, x)
    sy = dual.matvec(s, y)
    numerator = (dual.dot(dual.matvec(st, x), y)
                 + b * dual.dot(dual.matvec(s, eta), y)
                 + dual.dot(sx, dual.cross(jt, x)))
    denominator = dual.dot(sy, y) - dual.dot(sx, x)
    a = -numerator / denominator
    dx = a * y + b * eta
    dy = dual.cross(jt, x) + dual.cross(eta, dx)
    return dx, dy


def principal_derivative(jet: FieldJet, x: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Directional derivative along t of the unit principal field through x and of
    its companion eta x x.

    Args:
        jet: order >= 2 jet of a unit field
        x: unit principal direction at the jet point (either foliation)
        t: direction of differentiation

    Returns:
        (Dx.t, Dy.t)
    """
    if jet.hessian is None:
        raise ValueError("principal_derivative needs an order-2 jet")
    dx, dy = _frame_rates(jet.value, jet.jacobian, jet.hessian, x, np.asarray(t, dtype=float))
    return np.asarray(dx, dtype=float), np.asarray(dy, dtype=float)


def principal_second_derivative(jet: FieldJet, x: np.ndarray, u: np.ndarray,
                                w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Second derivatives D2x[u, w] and D2y[u, w]; needs an order-3 jet."""
    if jet.third is None:
        raise ValueError("principal_second_derivative needs an order-3 jet")
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    dx_w, _ = _frame_rates(jet.value, jet.jacobian, jet.hessian, x, w)
    eta = dual.Dual(jet.value, jet.jacobian @ w)
    J = dual.Dual(jet.jacobian, jet.hessian @ w)
    H = dual.Dual(jet.hessian, jet.third @ w)
    xd = dual.Dual(x, np.asarray(dx_w, dtype=float))
    dx, dy = _frame_rates(eta, J, H, xd, u)
    return (np.asarray(dual.tangent_of(dx), dtype=float),
            np.asarray(dual.tangent_of(dy), dtype=float))
