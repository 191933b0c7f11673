import math

import numpy as np
import pytest

from acflow.errors import EmptyInterfaceError
from acflow.experiments import (ExactFlow, auto_anchors, bump, extract_interface, run_canonical, run_eps_sweep,
                                support_identity_probe, sweep_clauses)
from acflow.manifold import ChartGrid, MetricSpec
from acflow.phasefield import InitialInterface, PhaseField, well_prepared_init

from conftest import torus_config

SIGMA = 2 * math.sqrt(2) / 3


def test_exact_circle():
    f = ExactFlow("torus-circle", 0.5)
    assert f.radius(0.08) == pytest.approx(0.3)
    assert f.extinction == pytest.approx(0.125)
    assert f.curvature(0.08) == pytest.approx(1 / 0.3)
    assert f.length(0.0) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        f.radius(0.2)


def test_exact_circle_solves_curve_shortening():
    f = ExactFlow("torus-circle", 0.5)
    t, h = 0.05, 1e-6
    drdt = (f.radius(t + h) - f.radius(t - h)) / (2 * h)
    assert drdt == pytest.approx(-f.curvature(t), rel=1e-6)


def test_exact_cap():
    f = ExactFlow("sphere-cap", math.pi / 3)
    assert math.cos(f.radius(0.3)) == pytest.approx(0.5 * math.exp(0.3))
    assert f.extinction == pytest.approx(math.log(2))
    # the boundary latitude moves with the geodesic curvature cot(theta)
    t, h = 0.2, 1e-6
    dth = (f.radius(t + h) - f.radius(t - h)) / (2 * h)
    assert dth == pytest.approx(-f.curvature(t), rel=1e-6)
    with pytest.raises(ValueError):
        ExactFlow("sphere-cap", 2.0)


def test_extract_interface_torus():
    g = ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=160))
    s = well_prepared_init(g, InitialInterface(center=(0.1, 1.9), radius=0.5), 0.05)
    est = extract_interface(s)
    assert est.radius == pytest.approx(0.5, abs=g.h)
    assert np.allclose(np.array(est.center) % 2.0, (0.1, 1.9), atol=g.h)
    with pytest.raises(EmptyInterfaceError):
        extract_interface(PhaseField(np.ones(g.n_nodes), 0.05, 0.0, g))


def test_extract_interface_sphere():
    g = ChartGrid(MetricSpec(kind="sphere", n_theta=128))
    s = well_prepared_init(g, InitialInterface(kind="cap", theta0=1.0), 0.1)
    assert extract_interface(s).radius == pytest.approx(1.0, abs=g.h_theta)


def test_bump_is_c2_and_supported():
    g = ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=64))
    b = bump(g, g.node_at(1.0, 1.0), 0.4)
    assert b.max() == 1.0 and np.all(b[g.distance_from(g.node_at(1.0, 1.0)) >= 0.4] == 0)


def test_auto_anchors_cover_interface():
    cfg = torus_config(0.05)
    g = ChartGrid(cfg.metric_spec(0.05))
    anchors = auto_anchors(cfg, g, 0.1)
    assert len(anchors) == 5
    d = g.distance_from(g.node_at(1.0, 1.0))
    assert d[anchors[1][0]] == pytest.approx(math.sqrt(0.25 - 0.2), abs=2 * g.h)


def test_smoke_run_and_determinism():
    cfg = torus_config(0.05, T=0.02)
    a = run_canonical(cfg)
    b = run_canonical(cfg)
    assert len(a.rows) == 5
    np.testing.assert_equal(a.rows, b.rows)
    assert all(np.array_equal(x.u, y.u) for x, y in zip(a.snapshots, b.snapshots))


@pytest.mark.slow
def test_canonical_run_emits_samples(run_005):
    assert len(run_005.rows) >= 20
    assert run_005.summary["untangented_max"] <= 1e-3
    assert run_005.summary["energy_increase_max"] <= 1e-8
    assert run_005.summary["grad_eps_max"] <= 1.3 / math.sqrt(2)


@pytest.mark.slow
def test_run_past_extinction():
    cfg = torus_config(0.05, T=0.175)
    res = run_canonical(cfg)
    t = res.times
    assert np.isnan(res.rows[-1]["radius"])
    assert res.column("mass")[-1] <= 0.01 * res.column("mass")[0]
    assert res.exact.extinction < t[-1]


@pytest.mark.slow
def test_perimeter_law_at_smallest_eps(sweep):
    rep, _ = sweep
    assert rep.rows[-1]["perimeter_rel_err"] <= 0.03
    assert rep.clauses["perimeter_smallest_eps"]
    assert [r["eps"] for r in rep.rows] == [0.08, 0.04, 0.02]


@pytest.mark.slow
def test_sweep_clauses_all_hold(sweep):
    rep, _ = sweep
    assert rep.ok, rep.clauses


def test_single_eps_sweep_has_no_trend_clauses():
    rep, results = run_eps_sweep(torus_config(0.05, T=0.02))
    assert len(rep.rows) == 1 and rep.clauses == {}
    assert sweep_clauses(rep.rows) == {}


@pytest.mark.slow
def test_support_probe_off_and_on(sweep):
    _, results = sweep
    res = results[-1]
    g = res.grid
    off = g.node_at(1.0 + 0.9 / math.sqrt(2), 1.0 + 0.9 / math.sqrt(2))
    on = g.node_at(1.0 + 0.5, 1.0)
    rep = support_identity_probe(res, [off, on])
    assert rep["n_off"] > 0 and rep["off_violations"] == []
    assert rep["n_on"] > 0 and rep["on_violations"] == []


@pytest.mark.slow
def test_sphere_cap_shrinks(sphere_run):
    r = sphere_run.column("radius")
    assert np.all(np.diff(r) < 0)
    assert sphere_run.summary["radius_rel_err"] <= 0.05
