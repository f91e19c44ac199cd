"""
Command handlers for the planefold CLI.

Each cmd_* function takes a validated RunConfig and a ReportWriter, runs the
library, writes its artefacts and returns the report body.
"""
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Dict, List, Optional, Sequence

import numpy as np

from artefacts.report_generator import CheckRow, ReportWriter
from cli.run_config import RunConfig, resolve_field
from config.settings import CONFIG
from core.chart import (
    FrameProfile,
    TubularChart,
    build_chart,
    frame_profile,
    integrability_function,
)
from core.control import (
    HyperbolizationResult,
    SpanRank,
    bracket_sequence,
    controllability_at_peak,
    hyperbolize,
    span_rank,
)
from core.errors import NonIntegrableError, PlanefoldError, ReducedFormError, SearchExhaustedError
from core.fieldspec import VectorField
from core.pointwise import (
    geodesic_torsion,
    implicit_coeffs,
    integrability_scalar,
    principal_data,
    rotation_residual,
)
from core.returnmap import (
    FiniteDifferenceResult,
    ReturnMapReport,
    VariationalSystem,
    fd_return_map,
    integrable_closed_form,
    poincare_derivative,
    reverse_orientation,
    variational_system,
)
from core.testfields import PARAM_ALIASES, BUILTINS
from core.tracing import CycleCandidate, find_cycle, trace_line
from utils.logger import get_logger

IDENTITY_SAMPLES = 8
DEFAULT_SWEEP_GRID = {"lambda": [0.1, 0.2, 0.3], "a": [0.1, 0.2], "eps": [0.5]}
DEFAULT_SWEEP_SEED = [1.05, 0.0, 0.0]
DEFAULT_SWEEP_HEADING = [0.0, 1.0, 0.0]


def analyze_point(field: VectorField, point: Sequence[float]) -> dict:
    """Pointwise principal data at one point."""
    jet = field.jet(point, 1)
    data = principal_data(jet)
    coeffs = implicit_coeffs(jet)
    try:
        reduced = implicit_coeffs(jet, reduced=True).reduced
        reduced_dict = {"L": reduced.L, "M": reduced.M, "N": reduced.N}
    except ReducedFormError:
        reduced_dict = None
    return {
        "point": [float(c) for c in point],
        "k1": data.k1,
        "k2": data.k2,
        "e1": data.e1.tolist(),
        "e2": data.e2.tolist(),
        "normal": data.normal.tolist(),
        "gap": data.gap,
        "umbilic": data.umbilic,
        "tau_g_e1": geodesic_torsion(jet, data.e1),
        "tau_g_e2": geodesic_torsion(jet, data.e2),
        "rotation_residual_e1": rotation_residual(jet, data.e1),
        "integrability": integrability_scalar(jet),
        "implicit_coefficients": coeffs.coefficients.tolist(),
        "reduced_form": reduced_dict,
    }


def _flip_inverse(U: np.ndarray) -> np.ndarray:
    flip = np.diag([-1.0, 1.0])
    return flip @ np.linalg.inv(U) @ flip


@dataclass
class CycleAnalysis:
    """Everything computed for one cycle, in the reported sense of traversal."""
    cycle: CycleCandidate
    chart: TubularChart
    profile: FrameProfile
    system: VariationalSystem
    report: ReturnMapReport
    fd: FiniteDifferenceResult
    sense: str
    checks: List[CheckRow]
    fd_residual: float
    closed_form: Optional[ReturnMapReport] = None
    closed_form_residual: Optional[float] = None
    controllability: Dict[str, dict] = dataclass_field(default_factory=dict)

    def to_dict(self) -> dict:
        k = self.chart.k
        out = {
            "cycle": self.cycle.summary(),
            "sense": self.sense,
            "chart": {
                "multiplicity": self.chart.multiplicity,
                "delta": self.chart.delta,
                "max_abs_k": {name: float(np.abs(k[:, i]).max()) for i, name in enumerate(("k1", "k2", "k3"))},
                "mean_k": {name: float(k[:-1, i].mean()) for i, name in enumerate(("k1", "k2", "k3"))},
            },
            "return_map": self.report.to_dict(),
            "finite_difference": self.fd.to_dict(),
            "fd_residual": self.fd_residual,
            "checks": [c.to_dict() for c in self.checks],
            "controllability": self.controllability,
        }
        if self.closed_form is not None:
            out["integrable_closed_form"] = self.closed_form.to_dict()
            out["closed_form_residual"] = self.closed_form_residual
        return out


def _identity_checks(field: VectorField, chart: TubularChart, profile: FrameProfile,
                     system: VariationalSystem, report: ReturnMapReport) -> List[CheckRow]:
    L = system.coefficients
    f1_gap = float(np.abs(profile["F1"] - profile["k2"]).min())
    s_probe = np.linspace(0.0, chart.period, IDENTITY_SAMPLES, endpoint=False)
    torsion_gap = max(
        abs(integrability_function(field, chart, float(s)) + 2.0 * float(chart.curvatures(s)[2]))
        for s in s_probe
    )
    checks = [
        CheckRow("L1 on cycle", float(np.abs(L[:, 0]).max()), 1e-7),
        CheckRow("L4 on cycle", float(np.abs(L[:, 3]).max()), 1e-7),
        CheckRow("B1 + k3", float(np.abs(profile["B1"] + profile["k3"]).max()), 1e-6),
        CheckRow("|F1 - k2| floor", f1_gap, 1e-4, lower=True),
        CheckRow("f + 2 k3", torsion_gap, 1e-6),
        CheckRow("Darboux residual", chart.darboux_residual(), 1e-6),
        CheckRow("frame orthonormality", chart.orthonormality_residual(), 1e-9),
        CheckRow("Liouville det identity", report.liouville_residual or 0.0, 1e-6),
    ]
    if system.frame_form_residual is not None:
        checks.append(CheckRow("frame form of M", system.frame_form_residual, 1e-5))
    return checks


def _controllability(system: VariationalSystem, profile: FrameProfile, depth: int) -> Dict[str, dict]:
    max_k3 = float(np.abs(profile["k3"]).max())
    peak = controllability_at_peak(system, profile, max(depth, 1))
    zero: SpanRank = span_rank(bracket_sequence(system, 0), peak.s)
    return {
        "max_abs_k3": max_k3,
        "torsion_above_floor": max_k3 > CONFIG.TORSION_FLOOR,
        "depth0": zero.to_dict(),
        f"depth{max(depth, 1)}": peak.to_dict(),
    }


def analyze_cycle(field: VectorField, seed: Sequence[float], config: RunConfig) -> CycleAnalysis:
    """
    Cycle pipeline: find, chart, variational system, return map and oracles.

    Without a heading the report is normalized to the sense with |det U| <= 1.
    """
    logger = get_logger()
    cycle = find_cycle(field, seed, config.foliation, step=config.step,
                       heading=config.heading, tol=config.tol)
    chart = build_chart(field, cycle)
    profile = frame_profile(chart)
    system = variational_system(field, chart, profile)
    report = poincare_derivative(system)
    fd = fd_return_map(field, cycle, chart, h=config.fd_step, ratio=True)
    fd_residual = float(np.abs(fd.matrix - report.U).max())

    closed_form = None
    closed_residual = None
    try:
        closed_form = integrable_closed_form(field, chart, profile)
        closed_residual = float(np.abs(closed_form.U - report.U).max())
    except NonIntegrableError as e:
        logger.debug("CLI", f"no integrable closed form: {e}")

    checks = _identity_checks(field, chart, profile, system, report)
    checks.append(CheckRow("finite-difference oracle", fd_residual,
                           max(1e-4, 10.0 * config.fd_step ** 2)))
    if closed_residual is not None:
        checks.append(CheckRow("integrable closed form", closed_residual, 1e-5))

    sense = "as traced" if config.heading is None else "heading"
    if config.heading is None and abs(float(np.linalg.det(report.U))) > 1.0:
        report = reverse_orientation(report)
        fd = FiniteDifferenceResult(
            matrix=_flip_inverse(fd.matrix), coarse=_flip_inverse(fd.coarse),
            fine=_flip_inverse(fd.fine), h=fd.h, richardson_ratio=fd.richardson_ratio,
        )
        if closed_form is not None:
            closed_form = reverse_orientation(closed_form)
        sense = "reversed"
        logger.info("CLI", "report normalized to the contracting sense of traversal")

    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("CLI", f"identity checks failed: {', '.join(failed)}")
    return CycleAnalysis(
        cycle=cycle, chart=chart, profile=profile, system=system, report=report, fd=fd,
        sense=sense, checks=checks, fd_residual=fd_residual,
        closed_form=closed_form, closed_form_residual=closed_residual,
        controllability=_controllability(system, profile, config.depth),
    )


def _moduli_text(report: ReturnMapReport) -> str:
    return ", ".join(f"{m:.9f}" for m in report.moduli)


def cmd_analyze(config: RunConfig, writer: ReportWriter) -> dict:
    """Pointwise report at every seed."""
    field = resolve_field(config)
    points = [analyze_point(field, seed) for seed in config.seeds]
    body = {"field": field.expr.unparse(), "points": points}
    writer.write_json("analyze", "analyze", config.to_dict(), body)
    rows = []
    for p in points:
        rows.append((f"k1, k2 at {p['point']}", f"{p['k1']:.9g}, {p['k2']:.9g}"))
        rows.append((f"umbilic at {p['point']}", p["umbilic"]))
        rows.append((f"<curl eta, eta> at {p['point']}", f"{p['integrability']:.3e}"))
    writer.write_markdown("analyze", rows)
    return body


def cmd_trace(config: RunConfig, writer: ReportWriter) -> dict:
    """One CSV per seed plus a JSON summary."""
    field = resolve_field(config)
    traces = []
    for i, seed in enumerate(config.seeds):
        line = trace_line(field, seed, config.foliation, arc_budget=config.arc,
                          step=config.step, heading=config.heading)
        name = f"trace_{i}"
        path = writer.write_polyline_csv(name, line)
        traces.append({
            "seed": seed,
            "csv": path.name,
            "points": len(line),
            "length": line.length,
            "end": line.points[-1].tolist(),
            "stop_reason": line.stop_reason.value,
            "message": line.message,
        })
    body = {"field": field.expr.unparse(), "traces": traces}
    writer.write_json("trace", "trace", config.to_dict(), body)
    writer.write_markdown("trace", [
        (t["csv"], f"{t['stop_reason']} after arc {t['length']:.4f}") for t in traces
    ])
    return body


def _cycle_rows(analysis: CycleAnalysis) -> List[tuple]:
    report = analysis.report
    return [
        ("length", f"{analysis.cycle.length:.10f}"),
        ("sense", analysis.sense),
        ("eigenvalue moduli", _moduli_text(report)),
        ("classification", report.classification.value + (" (marginal)" if report.marginal else "")),
        ("finite-difference residual", f"{analysis.fd_residual:.3e}"),
    ]


def cmd_cycle(config: RunConfig, writer: ReportWriter) -> dict:
    """Cycle, return-map report and chart export for the first seed."""
    field = resolve_field(config)
    analysis = analyze_cycle(field, config.seeds[0], config)
    body = {"field": field.expr.unparse(), **analysis.to_dict()}
    writer.write_json("cycle", "cycle", config.to_dict(), body)
    writer.write_chart("chart", analysis.chart)
    writer.write_polyline_csv("cycle", analysis.cycle.polyline)
    writer.write_markdown("cycle", _cycle_rows(analysis), analysis.checks)
    return body


def cmd_hyperbolize(config: RunConfig, writer: ReportWriter) -> dict:
    """
    Perturbation making the cycle hyperbolic.

    The best-effort report is written before SearchExhaustedError propagates.
    """
    field = resolve_field(config)
    analysis = analyze_cycle(field, config.seeds[0], config)
    body = {"field": field.expr.unparse(), "cycle": analysis.to_dict()}
    try:
        result: HyperbolizationResult = hyperbolize(
            analysis.system, analysis.profile, budget=config.budget, depth=config.depth,
        )
    except SearchExhaustedError as e:
        body.update(status="exhausted", message=str(e),
                    best=e.best.to_dict() if e.best is not None else None)
        writer.write_json("hyperbolize", "hyperbolize", config.to_dict(), body)
        writer.write_markdown("hyperbolize", _cycle_rows(analysis) + [("search", "exhausted")],
                              analysis.checks, notes=str(e))
        raise

    s = analysis.profile.s
    u1, u2, u3 = result.spec.controls(analysis.profile, s, analysis.system.period)
    body.update(
        status="certified",
        hyperbolization=result.to_dict(),
        controls={"max_abs_u1": float(np.abs(u1).max()), "max_abs_u2": float(np.abs(u2).max()),
                  "max_abs_u3": float(np.abs(u3).max())},
    )
    writer.write_json("hyperbolize", "hyperbolize", config.to_dict(), body)
    writer.write_markdown("hyperbolize", _cycle_rows(analysis) + [
        ("epsilon", f"{result.spec.epsilon:.3e}"),
        ("perturbed moduli", _moduli_text(result.report)),
        ("perturbed classification", result.report.classification.value),
        ("evaluations", result.evaluations),
    ], analysis.checks)
    return body


def expected_example_moduli(params: Dict[str, float]) -> Optional[List[float]]:
    """Closed-form eigenvalues of the example field's unit-circle cycle, smaller first."""
    _, defaults = BUILTINS["example"]
    values = dict(defaults)
    for key, value in params.items():
        values[PARAM_ALIASES.get(key, key)] = float(value)
    lam, a, eps = values["lam"], values["a"], values["eps"]
    if a * eps + 1.0 == 0.0:
        return None
    pair = [math.exp(-4.0 * math.pi * lam), math.exp(2.0 * math.pi * a * eps * (lam - a) / (a * eps + 1.0))]
    return sorted(pair)


def sweep_point(config_dict: dict, params: Dict[str, float]) -> dict:
    """
    One grid point of a sweep; runs in a worker process.

    Failures are reported in the row instead of raised.
    """
    config = RunConfig.from_dict(config_dict)
    row = {"params": dict(params)}
    try:
        field = resolve_field(config, params)
        analysis = analyze_cycle(field, config.seeds[0], config)
    except PlanefoldError as e:
        row.update(status="failed", error=f"{type(e).__name__}: {e}")
        return row
    report = analysis.report
    row.update(
        status="ok",
        length=analysis.cycle.length,
        moduli=report.moduli,
        classification=report.classification.value,
        marginal=report.marginal,
        fd_residual=analysis.fd_residual,
        checks_passed=all(c.passed for c in analysis.checks),
    )
    if config.field == "builtin:example":
        expected = expected_example_moduli(params)
        row["expected_moduli"] = expected
        if expected is not None:
            row["relative_error"] = max(abs(m - e) / abs(e) for m, e in zip(sorted(report.moduli), expected))
    return row


def sweep_grid(config: RunConfig) -> List[Dict[str, float]]:
    """Cartesian grid of the sweep parameters; single-valued params are fixed."""
    grid = dict(config.sweep_params)
    if not grid and not config.params:
        grid = dict(DEFAULT_SWEEP_GRID)
    for name, value in config.params.items():
        grid.setdefault(name, [value])
    names = sorted(grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def cmd_sweep(config: RunConfig, writer: ReportWriter) -> dict:
    """Cycle analysis over a parameter grid in a process pool; one row per point."""
    logger = get_logger()
    if not config.field:
        config.field = "builtin:example"
    if not config.seeds:
        config.seeds = [list(DEFAULT_SWEEP_SEED)]
        if config.heading is None:
            config.heading = list(DEFAULT_SWEEP_HEADING)
    points = sweep_grid(config)
    workers = min(CONFIG.get_thread_count(), len(points))
    logger.info("CLI", f"sweeping {len(points)} parameter points on {workers} worker(s)")

    snapshot = config.to_dict()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(sweep_point, [snapshot] * len(points), points))

    failed = sum(1 for r in rows if r["status"] != "ok")
    body = {"rows": rows, "failed": failed}
    writer.write_json("sweep", "sweep", snapshot, body)
    table = []
    for r in rows:
        label = ", ".join(f"{k}={v:g}" for k, v in sorted(r["params"].items()))
        if r["status"] == "ok":
            table.append((label, f"{r['classification']} ({', '.join(f'{m:.6f}' for m in r['moduli'])})"))
        else:
            table.append((label, r["error"]))
    writer.write_markdown("sweep", table)
    if failed:
        logger.warning("CLI", f"{failed} of {len(rows)} sweep points failed")
    return body


COMMAND_HANDLERS = {
    "analyze": cmd_analyze,
    "trace": cmd_trace,
    "cycle": cmd_cycle,
    "hyperbolize": cmd_hyperbolize,
    "sweep": cmd_sweep,
}


def run_command(config: RunConfig, writer: Optional[ReportWriter] = None) -> dict:
    """Validate, dispatch and finish the report."""
    config.validate()
    writer = writer if writer is not None else ReportWriter(config.output_dir)
    try:
        return COMMAND_HANDLERS[config.command](config, writer)
    finally:
        writer.add_file("run_config", config.save(writer.out_dir / "run_config.json"))
        writer.finish()
