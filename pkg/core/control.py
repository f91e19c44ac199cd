"""
Bilinear control on the variational system.

Perturbing the first principal field near the cycle adds control terms
u1 E1 + u2 E2 + u3 E3 to M(s), with E1, E2, E3 the elementary matrices of
the (1,1), (1,2) and (2,2) entries. The bracket-span rank decides
controllability; a small constructive search looks for a perturbation
that makes the cycle hyperbolic and certifies it by re-integration.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from config.settings import CONFIG
from core.chart import FrameProfile
from core.errors import SearchExhaustedError
from core.returnmap import (
    ReturnMapReport,
    VariationalSystem,
    eigenvalues_2x2,
    fundamental_solution,
    poincare_derivative,
)
from utils.logger import get_logger

E1 = np.array([[1.0, 0.0], [0.0, 0.0]])
E2 = np.array([[0.0, 1.0], [0.0, 0.0]])
E3 = np.array([[0.0, 0.0], [0.0, 1.0]])
CHANNELS = (E1, E2, E3)


def commutator(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """[X, A] = X A - A X, batched over leading axes."""
    return x @ a - a @ x


@dataclass
class BracketSequence:
    """B_i^0 = E_i, B_i^j = d/ds B_i^(j-1) - [B_i^(j-1), M(s)]."""
    s: np.ndarray
    depth: int
    matrices: Dict[int, List[np.ndarray]]   # channel -> [depth 0 .. depth], each (n, 2, 2)

    def at(self, index: int) -> List[np.ndarray]:
        """All bracket matrices at sample `index`."""
        return [levels[j][index] for levels in self.matrices.values() for j in range(self.depth + 1)]

    def nearest(self, s: float) -> int:
        period = self.s[-1]
        return int(np.argmin(np.abs(self.s - np.mod(s, period))))


def bracket_sequence(system: VariationalSystem, depth: int,
                     samples: Optional[int] = None) -> BracketSequence:
    """
    Bracket sequences of the three control channels up to `depth`.

    s-derivatives come from periodic splines of the sampled matrices.
    """
    if depth < 0:
        raise ValueError(f"bracket depth must be non-negative, got {depth}")
    n = CONFIG.BRACKET_SAMPLES if samples is None else int(samples)
    s = np.linspace(0.0, system.period, n + 1)
    M = system.matrix(s)
    M[-1] = M[0]
    matrices: Dict[int, List[np.ndarray]] = {}
    for i, e in enumerate(CHANNELS, start=1):
        current = np.broadcast_to(e, (n + 1, 2, 2)).copy()
        levels = [current]
        for _ in range(depth):
            if levels[-1] is levels[0]:
                rate = np.zeros_like(current)
            else:
                rate = CubicSpline(s, current, bc_type='periodic', axis=0)(s, 1)
            current = rate - commutator(current, M)
            current[-1] = current[0]
            levels.append(current)
        matrices[i] = levels
    return BracketSequence(s=s, depth=depth, matrices=matrices)


@dataclass
class SpanRank:
    rank: int
    controllable: bool
    s: float
    singular_values: List[float]

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "controllable": self.controllable,
            "s": self.s,
            "singular_values": self.singular_values,
        }


def span_rank(seq: BracketSequence, s_bar: float) -> SpanRank:
    """Numerical rank of span{B_i^j(s_bar)} inside the 2x2 matrices."""
    index = seq.nearest(s_bar)
    stacked = np.array([m.reshape(4) for m in seq.at(index)])
    sv = np.linalg.svd(stacked, compute_uv=False)
    threshold = CONFIG.RANK_REL_TOL * (sv[0] if sv.size and sv[0] > 0 else 1.0)
    rank = int(np.sum(sv > threshold))
    return SpanRank(rank=rank, controllable=rank == 4, s=float(seq.s[index]),
                    singular_values=[float(x) for x in sv])


def _fourier(coeffs: Sequence[float], s, period: float):
    """c0 + sum_k a_k cos(2 pi k s / L) + b_k sin(2 pi k s / L); coeffs = [c0, a1, b1, a2, b2, ...]."""
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, float(coeffs[0]) if len(coeffs) else 0.0)
    for k in range(1, (len(coeffs) - 1) // 2 + 1):
        phase = 2.0 * math.pi * k * s / period
        out = out + coeffs[2 * k - 1] * np.cos(phase) + coeffs[2 * k] * np.sin(phase)
    return out


@dataclass
class PerturbationSpec:
    """epsilon and the Fourier coefficients of phi1, phi2, phi3."""
    epsilon: float = 0.0
    phi1: List[float] = dataclass_field(default_factory=lambda: [0.0])
    phi2: List[float] = dataclass_field(default_factory=lambda: [0.0])
    phi3: List[float] = dataclass_field(default_factory=lambda: [0.0])
    certified_eigenvalues: Optional[List[complex]] = None

    def phi(self, s, period: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (_fourier(self.phi1, s, period), _fourier(self.phi2, s, period),
                _fourier(self.phi3, s, period))

    def controls(self, profile: FrameProfile, s, period: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Induced controls u1, u2, u3 along the cycle."""
        p1, p2, p3 = self.phi(s, period)
        f1, f2 = profile.at("F1", s), profile.at("F2", s)
        k1, k2 = profile.at("k1", s), profile.at("k2", s)
        denom = 2.0 * (k2 - f1)
        return (p1 * f1 + 2.0 * p2) / denom, ((2.0 * f2 + k1) * p1 + p3) / denom, p1

    def to_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "phi1": list(self.phi1),
            "phi2": list(self.phi2),
            "phi3": list(self.phi3),
            "certified_eigenvalues": None,
        }
        if self.certified_eigenvalues is not None:
            out["certified_eigenvalues"] = [[z.real, z.imag] for z in self.certified_eigenvalues]
        return out

    @classmethod
    def from_vector(cls, epsilon: float, theta: Sequence[float], modes: int = 1) -> "PerturbationSpec":
        """theta lists c0 of phi1..phi3, then (a_k, b_k) of phi1..phi3 for each mode."""
        theta = list(theta)
        coeffs = [[theta[i]] for i in range(3)]
        for k in range(modes):
            for i in range(3):
                base = 3 + 6 * k + 2 * i
                coeffs[i] += theta[base:base + 2]
        return cls(epsilon=epsilon, phi1=coeffs[0], phi2=coeffs[1], phi3=coeffs[2])


def perturbed_system(system: VariationalSystem, spec: PerturbationSpec,
                     profile: FrameProfile) -> VariationalSystem:
    """M_eps = M + eps (u1 E1 + u2 E2 + u3 E3) on the system samples."""
    if spec.epsilon == 0.0:
        return system.with_matrix(system.M.copy())
    u1, u2, u3 = spec.controls(profile, system.s, system.period)
    delta = (u1[:, None, None] * E1 + u2[:, None, None] * E2 + u3[:, None, None] * E3)
    M = system.M + spec.epsilon * delta
    M[-1] = M[0]
    return system.with_matrix(M)


def _log_distance(U: np.ndarray) -> float:
    """Smallest |log |lambda|| over the two eigenvalues."""
    moduli = [abs(z) for z in eigenvalues_2x2(U)]
    if min(moduli) <= 0.0:
        return math.inf
    return min(abs(math.log(m)) for m in moduli)


@dataclass
class HyperbolizationResult:
    spec: PerturbationSpec
    report: ReturnMapReport
    baseline: ReturnMapReport
    controllability: Optional[SpanRank] = None
    evaluations: int = 0
    certified: bool = True

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "report": self.report.to_dict(),
            "baseline": self.baseline.to_dict(),
            "controllability": self.controllability.to_dict() if self.controllability else None,
            "evaluations": self.evaluations,
            "certified": self.certified,
        }


def controllability_at_peak(system: VariationalSystem, profile: FrameProfile,
                            depth: int = 1) -> SpanRank:
    """Span rank at the point of largest |k3|."""
    k3 = profile["k3"]
    s_bar = float(profile.s[int(np.argmax(np.abs(k3)))])
    return span_rank(bracket_sequence(system, depth), s_bar)


class HyperbolizationSearch:
    """
    Coordinate search over small perturbations.

    Epsilon levels run from budget / 2^(levels-1) up to the budget. At each
    level the coordinates (phi constants first, then first Fourier modes) are
    tried at amplitude +-1; candidates of one coordinate are evaluated
    concurrently. A candidate is certified when the fully refined return map
    has both eigenvalue moduli at least the certification margin away from 1.
    """

    def __init__(self, system: VariationalSystem, profile: FrameProfile,
                 budget: Optional[float] = None, modes: int = 1):
        self._logger = get_logger()
        self.system = system
        self.profile = profile
        self.budget = CONFIG.HYPERBOLIZE_BUDGET if budget is None else float(budget)
        self.modes = modes
        self.dimension = 3 + 6 * modes
        self.evaluations = 0

    def _score(self, epsilon: float, theta: Sequence[float]) -> float:
        spec = PerturbationSpec.from_vector(epsilon, theta, self.modes)
        U = fundamental_solution(perturbed_system(self.system, spec, self.profile), CONFIG.RETURN_STEPS)
        return _log_distance(U)

    def _certify(self, epsilon: float, theta: Sequence[float]) -> Tuple[bool, PerturbationSpec, ReturnMapReport]:
        spec = PerturbationSpec.from_vector(epsilon, theta, self.modes)
        report = poincare_derivative(perturbed_system(self.system, spec, self.profile))
        margin = max(CONFIG.CERTIFY_MARGIN, CONFIG.HYPERBOLIC_TOL)
        ok = report.hyperbolic and all(abs(m - 1.0) > margin for m in report.moduli)
        spec.certified_eigenvalues = list(report.eigenvalues)
        return ok, spec, report

    def levels(self) -> List[float]:
        n = CONFIG.HYPERBOLIZE_LEVELS
        return [self.budget / 2 ** (n - 1 - i) for i in range(n)]

    def run(self) -> Tuple[Optional[Tuple[PerturbationSpec, ReturnMapReport]], Tuple[float, float, list]]:
        best = (-math.inf, 0.0, [0.0] * self.dimension)
        workers = CONFIG.get_thread_count()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for epsilon in self.levels():
                theta = [0.0] * self.dimension
                score = self._score(epsilon, theta)
                self.evaluations += 1
                for sweep in range(CONFIG.HYPERBOLIZE_SWEEPS):
                    for k in range(self.dimension):
                        trials = []
                        for amplitude in (1.0, -1.0):
                            candidate = list(theta)
                            candidate[k] = amplitude
                            trials.append(candidate)
                        scores = list(pool.map(lambda t: self._score(epsilon, t), trials))
                        self.evaluations += len(trials)
                        top = int(np.argmax(scores))
                        if scores[top] > score:
                            score, theta = scores[top], trials[top]
                            if score > best[0]:
                                best = (score, epsilon, list(theta))
                            if score > max(CONFIG.CERTIFY_MARGIN, CONFIG.HYPERBOLIC_TOL):
                                ok, spec, report = self._certify(epsilon, theta)
                                if ok:
                                    return (spec, report), best
                    self._logger.debug("Control", f"eps {epsilon:.3e} sweep {sweep + 1}: score {score:.3e}")
        return None, best


def hyperbolize(system: VariationalSystem, profile: FrameProfile,
                budget: Optional[float] = None, depth: int = 1) -> HyperbolizationResult:
    """
    Find a small perturbation that makes the cycle hyperbolic.

    Args:
        system: unperturbed variational system
        profile: frame coefficients along the cycle
        budget: largest epsilon allowed
        depth: bracket depth for the controllability report

    Returns:
        HyperbolizationResult; epsilon = 0 when the cycle is already hyperbolic

    Raises:
        SearchExhaustedError: no certified perturbation within the budget
    """
    logger = get_logger()
    baseline = poincare_derivative(system)
    rank = controllability_at_peak(system, profile, depth)
    if baseline.hyperbolic and not baseline.marginal:
        logger.info("Control", "cycle already hyperbolic; no perturbation needed")
        spec = PerturbationSpec(certified_eigenvalues=list(baseline.eigenvalues))
        return HyperbolizationResult(spec, baseline, baseline, rank, 0)
    if not rank.controllable:
        logger.warning("Control", f"bracket span rank {rank.rank} < 4 at s = {rank.s:.4f}; search may fail")

    search = HyperbolizationSearch(system, profile, budget)
    found, best = search.run()
    if found is None:
        score, epsilon, theta = best
        spec = PerturbationSpec.from_vector(epsilon, theta, search.modes)
        raise SearchExhaustedError(
            f"no certified perturbation with eps <= {search.budget:.3e} "
            f"after {search.evaluations} evaluations (best log-distance {score:.3e})",
            best=spec,
        )
    spec, report = found
    logger.success(
        "Control",
        f"hyperbolic at eps = {spec.epsilon:.3e}: moduli {report.moduli[0]:.6f}, {report.moduli[1]:.6f} "
        f"({report.classification.value})",
    )
    return HyperbolizationResult(spec, report, baseline, rank, search.evaluations)
