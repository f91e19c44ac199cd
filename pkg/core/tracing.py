"""
Principal line tracing and cycle detection.

Lines of either principal foliation are integrated with fixed-step RK4 on
the sign-continued line field. Closed leaves are located on a transversal
section through a seed and refined with a secant (Broyden) iteration on the
section coordinates.
"""
import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from config.settings import CONFIG
from core.errors import (
    FieldDomainError,
    FieldSingularityError,
    NoReturnError,
    RefinementError,
    UmbilicError,
)
from core.fieldspec import FieldJet, VectorField
from core.pointwise import principal_data
from utils.logger import get_logger

CSV_COLUMNS = ["s", "x", "y", "z"]


class StopReason(Enum):
    """Why a trace ended."""
    BUDGET = "budget"
    SINGULARITY = "singularity"
    UMBILIC = "umbilic"
    DOMAIN_ESCAPE = "domain_escape"


@dataclass
class Polyline:
    """Arc-length parametrized principal line."""
    points: np.ndarray
    arclength: np.ndarray
    foliation: int
    directions: np.ndarray
    stop_reason: StopReason = StopReason.BUDGET
    message: str = ""

    @property
    def length(self) -> float:
        return float(self.arclength[-1]) if len(self.arclength) else 0.0

    def __len__(self) -> int:
        return len(self.points)

    def to_rows(self) -> List[dict]:
        return [
            {"s": float(s), "x": float(p[0]), "y": float(p[1]), "z": float(p[2])}
            for s, p in zip(self.arclength, self.points)
        ]


@dataclass
class CycleCandidate:
    """A refined closed principal line."""
    polyline: Polyline
    length: float
    closure_residual: float
    anchor: np.ndarray
    direction: np.ndarray
    section_origin: np.ndarray
    section_normal: np.ndarray
    section_basis: np.ndarray  # rows: in-plane principal direction, unit normal
    foliation: int
    iterations: int = 0
    converged: bool = True

    def reversed(self) -> "CycleCandidate":
        """Same leaf traversed in the opposite sense."""
        pts = self.polyline.points[::-1].copy()
        dirs = -self.polyline.directions[::-1].copy()
        arc = self.length - self.polyline.arclength[::-1]
        return CycleCandidate(
            polyline=Polyline(pts, arc, self.foliation, dirs, self.polyline.stop_reason),
            length=self.length,
            closure_residual=self.closure_residual,
            anchor=self.anchor.copy(),
            direction=-self.direction,
            section_origin=self.section_origin.copy(),
            section_normal=-self.section_normal,
            section_basis=self.section_basis.copy(),
            foliation=self.foliation,
            iterations=self.iterations,
            converged=self.converged,
        )

    def summary(self) -> dict:
        return {
            "length": self.length,
            "closure_residual": self.closure_residual,
            "anchor": self.anchor.tolist(),
            "direction": self.direction.tolist(),
            "foliation": self.foliation,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def step_direction(jet: FieldJet, previous: Optional[np.ndarray], foliation: int,
                   umbilic_tol: Optional[Union[float, bool]] = True) -> np.ndarray:
    """
    Principal direction of the given foliation, sign-continued from `previous`.

    Args:
        jet: jet at the current point
        previous: direction of the preceding step; None uses the basis sign convention
        foliation: 1 or 2
        umbilic_tol: gap threshold; True for the default relative threshold, None to skip

    Returns:
        Unit direction d with <d, previous> >= 0
    """
    data = principal_data(jet)
    if umbilic_tol is True:
        umbilic_tol = CONFIG.get_umbilic_stop_tol(data.k1, data.k2)
    if umbilic_tol is not None and umbilic_tol is not False and data.gap < umbilic_tol:
        raise UmbilicError(jet.point, data.gap)
    d = data.direction(foliation)
    if previous is not None and float(d @ previous) < 0:
        d = -d
    return d


class LineTracer:
    """
    Fixed-step RK4 integrator on one principal line field.

    All four stages are aligned with the first stage direction so a step
    never flips orientation.
    """

    def __init__(self, field: VectorField, foliation: int = 1, check_umbilic: bool = True):
        if foliation not in (1, 2):
            raise ValueError(f"foliation must be 1 or 2, got {foliation}")
        self.field = field
        self.foliation = foliation
        self.check_umbilic = check_umbilic

    def direction(self, point: np.ndarray, previous: Optional[np.ndarray]) -> np.ndarray:
        jet = self.field.jet(point, 1)
        return step_direction(jet, previous, self.foliation, True if self.check_umbilic else None)

    def step(self, point: np.ndarray, previous: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
        """One RK4 step; returns (next point, first-stage direction)."""
        k1 = self.direction(point, previous)
        k2 = self.direction(point + 0.5 * h * k1, k1)
        k3 = self.direction(point + 0.5 * h * k2, k1)
        k4 = self.direction(point + h * k3, k1)
        return point + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1

    def initial_direction(self, point: np.ndarray, heading: Optional[np.ndarray] = None) -> np.ndarray:
        d = self.direction(point, None)
        if heading is not None and float(d @ np.asarray(heading, dtype=float)) < 0:
            d = -d
        return d


def _start_is_umbilic(field: VectorField, start: np.ndarray) -> bool:
    data = principal_data(field.jet(start, 1))
    return data.gap < CONFIG.get_umbilic_stop_tol(data.k1, data.k2)


def _outside_domain(point: np.ndarray) -> bool:
    return bool(np.any(np.abs(point) > CONFIG.DOMAIN_BOX))


def trace_line(field: VectorField, start, foliation: int = 1, arc_budget: Optional[float] = None,
               step: Optional[float] = None, heading=None) -> Polyline:
    """
    Trace a principal line from `start`.

    Args:
        field: the plane field normal
        start: starting point
        foliation: 1 (k1 lines) or 2 (k2 lines)
        arc_budget: arc length to integrate
        step: RK4 step
        heading: optional vector selecting the initial sense

    Returns:
        Polyline whose stop_reason says why it ended
    """
    logger = get_logger()
    arc_budget = CONFIG.TRACE_ARC_BUDGET if arc_budget is None else float(arc_budget)
    step = CONFIG.TRACE_STEP if step is None else float(step)
    if step <= 0 or arc_budget <= 0:
        raise ValueError("step and arc budget must be positive")
    p = np.array([float(c) for c in start])

    check_umbilic = True
    if _start_is_umbilic(field, p):
        logger.warning("Tracer", f"start {p.tolist()} is partially umbilic; following the basis convention")
        check_umbilic = False
    tracer = LineTracer(field, foliation, check_umbilic)

    d = tracer.initial_direction(p, heading)
    points = [p.copy()]
    arcs = [0.0]
    directions = [d.copy()]
    reason = StopReason.BUDGET
    message = ""
    s = 0.0
    n_steps = int(math.ceil(arc_budget / step - 1e-12))

    for _ in range(n_steps):
        h = min(step, arc_budget - s)
        try:
            p_next, k1 = tracer.step(p, d, h)
            d_next = tracer.direction(p_next, k1)
        except UmbilicError as exc:
            reason, message = StopReason.UMBILIC, str(exc)
            break
        except (FieldSingularityError, FieldDomainError) as exc:
            reason, message = StopReason.SINGULARITY, str(exc)
            break
        directions[-1] = k1
        p, d = p_next, d_next
        s += h
        points.append(p.copy())
        arcs.append(s)
        directions.append(d.copy())
        if _outside_domain(p):
            reason, message = StopReason.DOMAIN_ESCAPE, f"left the domain box at s = {s:.4f}"
            break

    logger.debug("Tracer", f"trace from {np.round(points[0], 6).tolist()} stopped: {reason.value} "
                           f"after arc {s:.4f} ({len(points)} points)")
    return Polyline(
        points=np.array(points), arclength=np.array(arcs), foliation=foliation,
        directions=np.array(directions), stop_reason=reason, message=message,
    )


def export_csv(polyline: Polyline, path: Union[str, Path]) -> Path:
    """Write the polyline as CSV rows (s, x, y, z)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in polyline.to_rows():
            writer.writerow({k: repr(v) for k, v in row.items()})
    return path


@dataclass
class _Return:
    point: np.ndarray
    arc: float
    polyline: Optional[Polyline] = None


class CycleFinder:
    """
    Locates a closed principal line near a seed.

    The section is the plane through the seed with normal e_fol(seed); its
    coordinates (v, w) are measured along the other principal direction and
    the unit normal of the field at the seed.
    """

    def __init__(self, field: VectorField, seed, foliation: int = 1,
                 max_turns: Optional[int] = None, step: Optional[float] = None,
                 heading=None, section: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                 tol: Optional[float] = None):
        self._logger = get_logger()
        self.field = field
        self.tol = CONFIG.CYCLE_RETURN_TOL if tol is None else float(tol)
        self.foliation = foliation
        self.max_turns = CONFIG.CYCLE_MAX_TURNS if max_turns is None else int(max_turns)
        self.step = CONFIG.TRACE_STEP if step is None else float(step)
        self.origin = np.array([float(c) for c in seed])

        check_umbilic = True
        if _start_is_umbilic(field, self.origin):
            self._logger.warning("CycleFinder", "seed is partially umbilic; following the basis convention")
            check_umbilic = False
        self.tracer = LineTracer(field, foliation, check_umbilic)

        if section is not None:
            normal, basis = section
            self.normal = np.asarray(normal, dtype=float)
            self.basis = np.asarray(basis, dtype=float)
            return
        data = principal_data(field.jet(self.origin, 1))
        self.normal = self.tracer.initial_direction(self.origin, heading)
        other = data.direction(2 if foliation == 1 else 1)
        self.basis = np.array([other, data.normal])

    def to_point(self, coords: np.ndarray) -> np.ndarray:
        return self.origin + coords[0] * self.basis[0] + coords[1] * self.basis[1]

    def to_coords(self, point: np.ndarray) -> np.ndarray:
        return self.basis @ (point - self.origin)

    def _height(self, point: np.ndarray) -> float:
        return float((point - self.origin) @ self.normal)

    def _locate_crossing(self, p: np.ndarray, d: np.ndarray, h: float) -> Tuple[np.ndarray, float]:
        """Sub-step theta in (0, 1] where the section height changes sign."""
        def height_at(theta: float) -> Tuple[float, np.ndarray]:
            q, _ = self.tracer.step(p, d, theta * h)
            return self._height(q), q

        ta, ga = 0.0, self._height(p)
        tb, gb = 1.0, None
        gb, qb = height_at(tb)
        for _ in range(12):
            if gb == ga:
                break
            tc = tb - gb * (tb - ta) / (gb - ga)
            tc = min(max(tc, 1e-12), 1.0)
            gc, qc = height_at(tc)
            ta, ga = tb, gb
            tb, gb, qb = tc, gc, qc
            if abs(gb) < 1e-15 * (1.0 + float(np.linalg.norm(qb))):
                break
        return qb, tb * h

    def first_return(self, coords: np.ndarray, keep: bool = False) -> _Return:
        """Follow the line from section coordinates `coords` back to the section."""
        p = self.to_point(coords)
        p = p - self._height(p) * self.normal / float(self.normal @ self.normal)
        d = self.tracer.direction(p, self.normal)
        budget = self.max_turns * CONFIG.TRACE_ARC_BUDGET
        min_arc = max(CONFIG.CYCLE_MIN_RETURN_ARC, 4.0 * self.step)
        s = 0.0
        turns = 0
        points = [p.copy()]
        arcs = [0.0]
        directions = [d.copy()]
        while s < budget:
            p_next, k1 = self.tracer.step(p, d, self.step)
            g0, g1 = self._height(p), self._height(p_next)
            if g0 < 0.0 <= g1 and s + self.step >= min_arc:
                q, dh = self._locate_crossing(p, d, self.step)
                if np.linalg.norm(q - self.origin) < CONFIG.CYCLE_SECTION_RADIUS:
                    if keep:
                        directions[-1] = k1
                        points.append(q.copy())
                        arcs.append(s + dh)
                        directions.append(self.tracer.direction(q, k1))
                        line = Polyline(np.array(points), np.array(arcs), self.foliation,
                                        np.array(directions))
                        return _Return(q, s + dh, line)
                    return _Return(q, s + dh)
                turns += 1
                if turns >= self.max_turns:
                    break
            d = self.tracer.direction(p_next, k1)
            p = p_next
            s += self.step
            if keep:
                directions[-1] = k1
                points.append(p.copy())
                arcs.append(s)
                directions.append(d.copy())
            if _outside_domain(p):
                raise NoReturnError(f"line left the domain box after arc {s:.3f} without returning")
        raise NoReturnError(
            f"no return to the section within {self.max_turns} turns (arc {s:.3f})"
        )

    def displacement(self, coords: np.ndarray) -> Tuple[np.ndarray, _Return]:
        ret = self.first_return(coords)
        return self.to_coords(ret.point) - coords, ret

    def _jacobian(self, coords: np.ndarray, f0: np.ndarray) -> np.ndarray:
        delta = CONFIG.CYCLE_FD_OFFSET
        jac = np.zeros((2, 2))
        for k in range(2):
            shifted = coords.copy()
            shifted[k] += delta
            fk, _ = self.displacement(shifted)
            jac[:, k] = (fk - f0) / delta
        return jac

    @staticmethod
    def _solve(jac: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Newton step, damped least squares when the secant matrix is near-singular."""
        if np.linalg.cond(jac) < 1e8:
            return -np.linalg.solve(jac, f)
        normal = jac.T @ jac
        mu = CONFIG.CYCLE_DAMPING * max(1.0, float(np.trace(normal))) + 1e-6 * float(np.trace(normal))
        return -np.linalg.solve(normal + mu * np.eye(2), jac.T @ f)

    def refine(self) -> CycleCandidate:
        coords = np.zeros(2)
        f, ret = self.displacement(coords)
        best = (float(np.linalg.norm(f)), coords.copy(), ret)
        self._logger.debug("CycleFinder", f"initial return displacement {best[0]:.3e}, arc {ret.arc:.6f}")
        jac: Optional[np.ndarray] = None
        iterations = 0
        stalled = 0
        trust = 0.2 * CONFIG.CYCLE_SECTION_RADIUS

        while best[0] >= self.tol and iterations < CONFIG.CYCLE_MAX_ITERATIONS:
            iterations += 1
            if jac is None:
                jac = self._jacobian(coords, f)
            delta = self._solve(jac, f)
            size = float(np.linalg.norm(delta))
            if size > trust:
                delta *= trust / size
            try:
                f_new, ret_new = self.displacement(coords + delta)
            except NoReturnError:
                trust *= 0.5
                jac = None
                continue
            df = f_new - f
            jac = jac + np.outer(df - jac @ delta, delta) / float(delta @ delta)
            coords = coords + delta
            norm_new = float(np.linalg.norm(f_new))
            stalled = stalled + 1 if norm_new > 0.9 * float(np.linalg.norm(f)) else 0
            f = f_new
            if norm_new < best[0]:
                best = (norm_new, coords.copy(), ret_new)
            self._logger.debug("CycleFinder", f"iteration {iterations}: displacement {norm_new:.3e}")
            if stalled >= 2:
                break

        residual, coords, ret = best
        converged = residual < self.tol
        if iterations == 0:
            self._logger.info(
                "CycleFinder",
                f"seed already lies on a closed line (return displacement {residual:.3e})",
            )
        if not converged:
            if residual < CONFIG.CYCLE_CLOSURE_REL_TOL * ret.arc:
                self._logger.warning(
                    "CycleFinder",
                    f"return displacement {residual:.3e} above {self.tol:.0e}; "
                    f"accepted as closure below {CONFIG.CYCLE_CLOSURE_REL_TOL:.0e} x L",
                )
            else:
                raise RefinementError(
                    f"cycle refinement stopped at displacement {residual:.3e} after {iterations} iterations"
                )

        final = self.first_return(coords, keep=True)
        anchor = final.polyline.points[0].copy()
        closure = float(np.linalg.norm(final.point - anchor))
        self._logger.info(
            "CycleFinder",
            f"cycle of length {final.arc:.10f} found after {iterations} iterations "
            f"(closure {closure:.2e})",
        )
        return CycleCandidate(
            polyline=final.polyline,
            length=float(final.arc),
            closure_residual=closure,
            anchor=anchor,
            direction=final.polyline.directions[0].copy(),
            section_origin=self.origin.copy(),
            section_normal=self.normal.copy(),
            section_basis=self.basis.copy(),
            foliation=self.foliation,
            iterations=iterations,
            converged=converged,
        )


def find_cycle(field: VectorField, seed, foliation: int = 1, max_turns: Optional[int] = None,
               step: Optional[float] = None, heading=None, tol: Optional[float] = None) -> CycleCandidate:
    """
    Find and refine the principal cycle through the section at `seed`.

    Args:
        field: the plane field normal
        seed: point near a suspected cycle
        foliation: 1 or 2
        max_turns: section crossings allowed before giving up
        step: RK4 step
        heading: optional vector selecting the sense of traversal
        tol: return displacement at which refinement stops

    Returns:
        CycleCandidate with the closed polyline and its length
    """
    finder = CycleFinder(field, seed, foliation, max_turns, step, heading, tol=tol)
    return finder.refine()
