"""
Built-in plane fields.

Expression-tree builders for the fields used by the test suite and
reachable from the command line as ``builtin:NAME``.
"""
from typing import Callable, Dict, Mapping, Optional, Tuple

from core.fieldspec import FieldExpr, Node, VectorField, call, constant, var

Triple = Tuple[Node, Node, Node]


def _xyz() -> Triple:
    return var("x"), var("y"), var("z")


def _cross(u: Triple, v: Triple) -> Triple:
    return (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )


def _example_generators(lam: float, a: float, eps: float) -> Tuple[Triple, Triple]:
    x, y, z = _xyz()
    damping = 1.0 - x * x - y * y
    x1 = (-y + lam * x * damping, x + lam * y * damping, -a * z)
    twist = (x + eps * y, -eps * x + y, constant(0.0))
    return x1, _cross(twist, x1)


def example_field(lam: float = 0.1, a: float = 0.2, eps: float = 0.5) -> FieldExpr:
    """
    eta = X1 x X2 with X1 = (-y + lam x (1 - r^2), x + lam y (1 - r^2), -a z)
    and X2 = (x + eps y, -eps x + y, 0) x X1.

    The unit circle in z = 0 is a closed principal line; its return map has
    eigenvalues exp(-4 pi lam) and exp(2 pi a eps (lam - a) / (a eps + 1)).
    """
    x1, x2 = _example_generators(lam, a, eps)
    return FieldExpr(_cross(x1, x2))


def perturbed_example_field(lam: float = 0.1, a: float = 0.2, eps: float = 0.5,
                            strength: float = 0.01, phi: float = 1.0) -> FieldExpr:
    """
    Example field with X1 replaced by X1 + strength * phi * w * N(s), where
    w = r - 1 and N(s) = (x, y, 0) / r is the field along the unit circle.
    X2 is left unperturbed, so the circle stays a closed principal line.
    """
    x, y, _ = _xyz()
    x1, x2 = _example_generators(lam, a, eps)
    r = call("sqrt", x * x + y * y)
    bump = strength * phi * (r - 1.0) / r
    shifted = (x1[0] + bump * x, x1[1] + bump * y, x1[2])
    return FieldExpr(_cross(shifted, x2))


def tori_field(major: float = 2.0) -> FieldExpr:
    """Gradient of f = (sqrt(x^2 + y^2) - major)^2 + z^2; integrable, leaves are nested tori."""
    x, y, z = _xyz()
    r = call("sqrt", x * x + y * y)
    scale = 2.0 * (r - major) / r
    return FieldExpr((scale * x, scale * y, 2.0 * z))


def torsion_circle_field(kappa: float = 3.0) -> FieldExpr:
    """
    Unit circle in z = 0 as a principal cycle with geodesic torsion.

    With c, s = cos t, sin t and sigma = c z - s (r - 1), the field is
    cos(phi) r_hat + sin(phi) z_hat - sigma t_hat, phi = t + kappa sigma.
    Along the circle the normal turns once around the tangent per turn
    (|k3| = 1) and the normal curvatures are cos t and kappa.
    """
    x, y, z = _xyz()
    r = call("sqrt", x * x + y * y)
    c, s = x / r, y / r
    sigma = c * z - s * (r - 1.0)
    bend = kappa * sigma
    cos_phi = c * call("cos", bend) - s * call("sin", bend)
    sin_phi = s * call("cos", bend) + c * call("sin", bend)
    return FieldExpr((cos_phi * c + sigma * s, cos_phi * s - sigma * c, sin_phi))


def radial_field() -> FieldExpr:
    """(x, y, z); leaves are spheres, every point partially umbilic."""
    return FieldExpr(_xyz())


def twisted_field() -> FieldExpr:
    """(-y, x, 1); not integrable, <curl eta, eta> = 2 / (1 + x^2 + y^2)."""
    x, y, _ = _xyz()
    return FieldExpr((-y, x, constant(1.0)))


def constant_field() -> FieldExpr:
    """(0, 0, 1); horizontal planes, all curvatures zero."""
    return FieldExpr((constant(0.0), constant(0.0), constant(1.0)))


def wavy_field() -> FieldExpr:
    """Generic non-integrable field without singularities near the origin."""
    x, y, z = _xyz()
    return FieldExpr((
        call("sin", z) + 2.0,
        call("cos", x) + 0.5 * y,
        1.0 + 0.2 * x * y,
    ))


Builder = Callable[..., FieldExpr]

BUILTINS: Dict[str, Tuple[Builder, Dict[str, float]]] = {
    "example": (example_field, {"lam": 0.1, "a": 0.2, "eps": 0.5}),
    "perturbed": (perturbed_example_field, {"lam": 0.1, "a": 0.2, "eps": 0.5, "strength": 0.01, "phi": 1.0}),
    "tori": (tori_field, {"major": 2.0}),
    "radial": (radial_field, {}),
    "twisted": (twisted_field, {}),
    "constant": (constant_field, {}),
    "wavy": (wavy_field, {}),
    "torsion": (torsion_circle_field, {"kappa": 3.0}),
}

PARAM_ALIASES = {"lambda": "lam", "epsilon": "eps"}


def builtin(name: str, params: Optional[Mapping[str, float]] = None) -> VectorField:
    """
    Named built-in field with parameters overriding the defaults.

    Unknown parameter names are ignored so one parameter set can serve
    several fields.
    """
    if name not in BUILTINS:
        raise KeyError(f"unknown built-in field '{name}' (known: {', '.join(sorted(BUILTINS))})")
    builder, defaults = BUILTINS[name]
    kwargs = dict(defaults)
    for key, value in (params or {}).items():
        key = PARAM_ALIASES.get(key, key)
        if key in kwargs:
            kwargs[key] = float(value)
    return VectorField(builder(**kwargs), normalize=True, name=f"builtin:{name}")
