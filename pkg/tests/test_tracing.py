import csv

import numpy as np
import pytest

from config.settings import CONFIG
from conftest import CIRCLE_HEADING, CIRCLE_SEED, TORUS_SEED
from core.errors import NoReturnError, UmbilicError
from core.tracing import (
    CSV_COLUMNS,
    CycleFinder,
    LineTracer,
    StopReason,
    export_csv,
    find_cycle,
    step_direction,
    trace_line,
)
from utils.logger import get_logger


def _torus_level(points, major=2.0):
    r = np.hypot(points[:, 0], points[:, 1])
    return (r - major) ** 2 + points[:, 2] ** 2


def test_constant_field_traces_a_straight_line(constant_field):
    line = trace_line(constant_field, [0.0, 0.0, 0.0], arc_budget=1.0, step=0.1)
    assert line.stop_reason is StopReason.BUDGET
    assert line.length == pytest.approx(1.0)
    assert len(line) == 11
    offsets = line.points - line.points[0]
    direction = offsets[-1] / np.linalg.norm(offsets[-1])
    residual = offsets - np.outer(offsets @ direction, direction)
    assert np.abs(residual).max() < 1e-12
    assert np.abs(offsets[:, 2]).max() < 1e-12


def test_umbilic_start_is_logged(constant_field):
    trace_line(constant_field, [0.0, 0.0, 0.0], arc_budget=0.05, step=0.05)
    warnings = [e for e in get_logger().get_entries() if e.level == "WARNING"]
    assert any("umbilic" in e.message for e in warnings)


def test_torus_lines_stay_on_their_torus(tori_field):
    for foliation in (1, 2):
        line = trace_line(tori_field, TORUS_SEED, foliation=foliation, arc_budget=2.0, step=5e-3)
        assert line.stop_reason is StopReason.BUDGET
        level = _torus_level(line.points)
        assert np.abs(level - 0.25).max() < 1e-6


def test_torus_foliations_are_meridians_and_parallels(tori_field):
    meridian = trace_line(tori_field, TORUS_SEED, foliation=1, arc_budget=0.5, step=5e-3)
    parallel = trace_line(tori_field, TORUS_SEED, foliation=2, arc_budget=0.5, step=5e-3)
    # meridians keep their azimuth, parallels keep their height
    azimuth = np.arctan2(meridian.points[:, 1], meridian.points[:, 0])
    assert np.abs(azimuth).max() < 1e-8
    assert np.abs(parallel.points[:, 2]).max() < 1e-8


def test_arclength_is_monotone_and_steps_are_unit(example_field):
    line = trace_line(example_field, [1.2, 0.1, 0.05], arc_budget=0.3, step=1e-2)
    assert np.all(np.diff(line.arclength) > 0)
    np.testing.assert_allclose(np.linalg.norm(line.directions, axis=1), 1.0, atol=1e-12)
    assert np.all(np.einsum("ij,ij->i", line.directions[1:], line.directions[:-1]) > 0)


def test_heading_selects_sense(example_field):
    forward = trace_line(example_field, [1.05, 0.0, 0.0], arc_budget=0.1, heading=[0, 1, 0])
    backward = trace_line(example_field, [1.05, 0.0, 0.0], arc_budget=0.1, heading=[0, -1, 0])
    assert forward.points[-1][1] > 0
    assert backward.points[-1][1] < 0


def test_domain_escape_stops_trace(constant_field):
    line = trace_line(constant_field, [9.95, 0.0, 0.0], arc_budget=5.0, step=0.05, heading=[1.0, 0.0, 0.0])
    assert line.stop_reason is StopReason.DOMAIN_ESCAPE
    assert line.length < 5.0


def test_invalid_step_rejected(constant_field):
    with pytest.raises(ValueError):
        trace_line(constant_field, [0, 0, 0], step=0.0)
    with pytest.raises(ValueError):
        LineTracer(constant_field, foliation=3)


def test_step_direction_follows_previous(example_field):
    jet = example_field.jet([1.0, 0.0, 0.0])
    d = step_direction(jet, None, 1)
    flipped = step_direction(jet, -d, 1)
    np.testing.assert_allclose(flipped, -d)
    assert abs(d[1]) == pytest.approx(1.0)


def test_step_direction_refuses_umbilic(radial_field):
    with pytest.raises(UmbilicError):
        step_direction(radial_field.jet([1.0, 2.0, 2.0]), None, 1)
    d = step_direction(radial_field.jet([1.0, 2.0, 2.0]), None, 1, umbilic_tol=None)
    assert np.linalg.norm(d) == pytest.approx(1.0)


def test_export_csv(tmp_path, example_field):
    line = trace_line(example_field, [1.05, 0.0, 0.0], arc_budget=0.05, step=1e-2)
    path = export_csv(line, tmp_path / "nested" / "line.csv")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == len(line)
    assert float(rows[-1]["s"]) == line.length
    assert float(rows[3]["x"]) == line.points[3][0]


def test_no_return_on_straight_lines(constant_field):
    with pytest.raises(NoReturnError):
        find_cycle(constant_field, [0.0, 0.0, 0.0], max_turns=1, step=0.05)


def test_section_coordinates_round_trip(tori_field):
    finder = CycleFinder(tori_field, TORUS_SEED, foliation=1)
    coords = np.array([0.01, -0.02])
    np.testing.assert_allclose(finder.to_coords(finder.to_point(coords)), coords, atol=1e-15)
    assert finder.normal @ finder.basis[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.slow
def test_torus_meridian_is_a_cycle(tori_field):
    cycle = find_cycle(tori_field, TORUS_SEED, foliation=1)
    assert cycle.converged
    assert cycle.length == pytest.approx(np.pi, abs=1e-6)
    assert cycle.closure_residual < 1e-8
    level = _torus_level(cycle.polyline.points)
    assert np.abs(level - 0.25).max() < 1e-6

    back = cycle.reversed()
    np.testing.assert_allclose(back.polyline.points[0], cycle.polyline.points[-1])
    np.testing.assert_allclose(back.direction, -cycle.direction)
    assert back.polyline.arclength[0] == pytest.approx(0.0, abs=1e-12)
    assert set(cycle.summary()) >= {"length", "closure_residual", "converged"}


@pytest.mark.slow
def test_unit_circle_is_a_cycle(example_field):
    cycle = find_cycle(example_field, [1.05, 0.0, 0.0], heading=[0.0, 1.0, 0.0])
    assert cycle.length == pytest.approx(2 * np.pi, abs=1e-6)
    radii = np.linalg.norm(cycle.polyline.points[:, :2], axis=1)
    assert np.abs(radii - 1.0).max() < 1e-6
    assert np.abs(cycle.polyline.points[:, 2]).max() < 1e-6


def test_return_ignores_start_below_the_section(example_field):
    finder = CycleFinder(example_field, [1.0, 0.0, 0.0], heading=[0.0, 1.0, 0.0], step=0.02)
    tilted = np.array([finder.basis[0] - 1e-3 * finder.normal, finder.basis[1]])
    skewed = CycleFinder(example_field, [1.0, 0.0, 0.0], step=0.02, section=(finder.normal, tilted))
    coords = np.array([0.01, 0.0])
    assert skewed._height(skewed.to_point(coords)) < 0.0

    ret = skewed.first_return(coords)
    assert ret.arc > CONFIG.CYCLE_MIN_RETURN_ARC
    assert ret.arc == pytest.approx(2 * np.pi, abs=0.1)


def test_return_arc_is_a_full_turn_near_the_circle(example_field):
    finder = CycleFinder(example_field, [1.0, 0.0, 0.0], heading=[0.0, 1.0, 0.0], step=0.02)
    for coords in ([0.0, -0.05], [0.0, 0.05], [-0.03, 0.0]):
        ret = finder.first_return(np.array(coords))
        assert 5.5 < ret.arc < 7.0


@pytest.mark.slow
def test_closed_seed_is_reported():
    from core.testfields import builtin

    field = builtin("example", {"lambda": 0.0, "a": 0.2, "eps": 0.5})
    cycle = find_cycle(field, [1.05, 0.0, 0.0], heading=[0.0, 1.0, 0.0])
    assert cycle.length == pytest.approx(2 * np.pi * 1.05, abs=1e-6)
    assert cycle.iterations == 0
    entries = get_logger().get_entries(source="CycleFinder", level="INFO")
    assert any("already lies on a closed line" in e.message for e in entries)


@pytest.mark.slow
def test_nearby_line_spirals_onto_the_circle(example_field):
    line = trace_line(example_field, [1.15, 0.0, 0.0], arc_budget=30.0, heading=[0.0, 1.0, 0.0])
    assert line.stop_reason is StopReason.BUDGET
    pts = line.points
    crossings = [i + 1 for i in range(len(pts) - 1)
                 if pts[i, 1] < 0.0 <= pts[i + 1, 1] and pts[i + 1, 0] > 0.0]
    assert len(crossings) >= 3
    distance = [float(np.hypot(np.hypot(*pts[i, :2]) - 1.0, pts[i, 2])) for i in crossings]
    assert all(b < a for a, b in zip(distance, distance[1:]))


@pytest.mark.slow
def test_cycle_length_converges_at_fourth_order(example_field):
    errors = []
    for step in (0.04, 0.02):
        cycle = find_cycle(example_field, CIRCLE_SEED, heading=CIRCLE_HEADING, step=step)
        errors.append(abs(cycle.length - 2 * np.pi))
    coarse, fine = errors
    assert fine <= coarse / 8.0 + 1e-9


@pytest.mark.slow
def test_retrace_from_anchor_reproduces_the_cycle(example_field):
    cycle = find_cycle(example_field, CIRCLE_SEED, heading=CIRCLE_HEADING)
    line = trace_line(example_field, cycle.anchor, arc_budget=cycle.length,
                      step=CONFIG.TRACE_STEP, heading=cycle.direction)
    assert np.linalg.norm(line.points[-1] - cycle.anchor) < 1e-7
    n = min(len(line), len(cycle.polyline)) - 1
    np.testing.assert_allclose(line.points[:n], cycle.polyline.points[:n], atol=1e-9)
