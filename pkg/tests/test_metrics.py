import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsisolve.assembly import LinearStats, StepStats
from fsisolve.mesh import GeometryCase, build_case, quad_mesh
from fsisolve.metrics import (QoISeries, SolverReport, aggregate_metrics, boundary_flux,
                              cavity_volume_change, cumulative_flux, estimate_alpha)


def step(k, its, rhos, newton=None):
    lin = [LinearStats(i, 1.0, r, True, 0.0) for i, r in zip(its, rhos)]
    return StepStats(k, k * 0.1, 0.1, len(lin) if newton is None else newton, [], lin, True, 0.0)


def test_aggregates_hand_values():
    agg = aggregate_metrics([step(1, [7], [0.1])])
    assert (agg.N, agg.rho, agg.s_max) == (7.0, 0.1, 1.0)
    agg = aggregate_metrics([step(1, [6], [0.2]), step(2, [8], [0.4])])
    assert agg.N == 7.0 and agg.rho == pytest.approx(0.3) and agg.s_max == 1.0
    # two steps with 3 and 4 Newton iterations
    agg = aggregate_metrics(SolverReport("as", [step(1, [10, 9, 8], [0.1] * 3),
                                                step(2, [12, 10, 9, 9], [0.2] * 4)]))
    assert agg.s_max == 3.5 and agg.N == pytest.approx(67 / 7) and agg.n_solves == 7
    with pytest.raises(ValueError):
        aggregate_metrics([])


def test_aggregates_reproduce_published_triple():
    # 100 steps: 39 with four Newton iterations, 61 with three -> s = 3.39;
    # 339 solves with iteration counts summing to 3139 -> N = 9.2596
    steps, k = [], 0
    counts = [9] * 251 + [10] * 88
    for i in range(100):
        n = 4 if i < 39 else 3
        steps.append(step(i, counts[k:k + n], [0.16] * n))
        k += n
    agg = aggregate_metrics(steps)
    assert round(agg.N, 2) == 9.26 and agg.rho == pytest.approx(0.16) and agg.s_max == pytest.approx(3.39)


def test_report_rows(tmp_path):
    rep = SolverReport("fs", [step(1, [5, 4], [0.5, 0.25])])
    rows = rep.rows()
    assert [r["newton"] for r in rows] == [1, 2]
    assert rows[1]["rho"] == 0.25
    rep.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("solver,step")


def test_alpha():
    assert estimate_alpha(1.0, 100, 2.0, 200) == pytest.approx(1.0)
    assert estimate_alpha(5.0, 100, 5.0, 400) == 0.0
    assert estimate_alpha(37.58, 81492, 139.08, 323524) == pytest.approx(0.949, abs=1e-3)
    for bad in [(0, 1, 1, 2), (1, 0, 1, 2), (1, 5, 2, 5)]:
        with pytest.raises(ValueError):
            estimate_alpha(*bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3), st.floats(1e-3, 1e3), st.floats(10, 1e6), st.floats(1.5, 10))
def test_alpha_recovers_power_law(a, c, n1, ratio):
    n2 = n1 * ratio
    assert estimate_alpha(c * n1 ** a, n1, c * n2 ** a, n2) == pytest.approx(a, rel=1e-9)


def test_flux_examples():
    m = build_case(GeometryCase("sq", "square", 2.0, nx=2))
    n = m.n_nodes
    assert boundary_flux(m, np.zeros((n, 2)), "right") == 0.0
    uniform = np.tile([1.0, 0.0], (n, 1))
    assert boundary_flux(m, uniform, "right") == pytest.approx(2.0)
    # inlet normal points inward so inflow counts positive
    assert boundary_flux(m, uniform, "left") == pytest.approx(2.0)
    assert boundary_flux(m, uniform, "top") == pytest.approx(0.0, abs=1e-15)
    # stretch the right edge vertically by 2
    d = np.zeros((n, 2))
    d[:, 1] = m.nodes[:, 1]
    assert boundary_flux(m, uniform, "right", d) == pytest.approx(4.0)
    with pytest.raises((ValueError, KeyError)):
        boundary_flux(m, uniform, "nowhere")


def test_flux_of_poiseuille_profile():
    m = quad_mesh([[0, -1], [2, -1], [2, 1], [0, 1]])
    y = m.nodes[:, 1]
    u = np.stack([1 - y ** 2, 0 * y], axis=1)
    # closed boundary, divergence free: zero net outflow
    assert boundary_flux(m, u, "boundary") == pytest.approx(0.0, abs=1e-14)
    sq = build_case(GeometryCase("sq", "square", 1.0, nx=3))
    yy = sq.nodes[:, 1]
    u = np.stack([4 * yy * (1 - yy), 0 * yy], axis=1)
    assert boundary_flux(sq, u, "right") == pytest.approx(2 / 3, rel=1e-13)


def test_cumulative_flux():
    assert np.allclose(cumulative_flux(np.full(5, 2.0), 0.5), [0, 1, 2, 3, 4])
    t = np.linspace(0, 1, 257)
    assert abs(cumulative_flux(np.sin(2 * np.pi * t), t[1])[-1]) < 1e-12
    assert cumulative_flux([], 0.1).size == 0


def test_qoi_conservation_defect(tmp_path):
    q = QoISeries()
    for k in range(5):
        q.append(0.25 * k, 1.0, 0.98)
    assert q.conservation_defect() == pytest.approx(0.02)
    q.write_csv(tmp_path / "q.csv")
    assert len((tmp_path / "q.csv").read_text().splitlines()) == 6
    still = QoISeries()
    still.append(0, 0, 0)
    still.append(1, 0, 0)
    assert still.conservation_defect() == 0.0


@pytest.mark.parametrize("eps", [0.0, 0.01, -0.05])
def test_cavity_volume_change(eps):
    m = build_case(GeometryCase("sq", "square", 1.0, nx=2))
    cav = np.arange(m.n_elements)
    d = eps * m.nodes
    assert cavity_volume_change(m, d, cav) == pytest.approx((1 + eps) ** 2 - 1, abs=1e-14)
    with pytest.raises(ValueError):
        cavity_volume_change(m, d, [])
