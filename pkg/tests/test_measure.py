import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acflow.errors import KernelDomainError
from acflow.manifold import ChartGrid, MetricSpec
from acflow.measure import (ConstantsLedger, DiscreteMeasure, MonotonicityKernel, check_differential_monotonicity,
                            check_integrated_monotonicity, check_lemma31, clearing_out_scan, density_ratio,
                            discrepancy_measure, energy_density, energy_measure, fit_monotonicity, forward_density,
                            heat_kernel, kernel_phi, lemma42_suite, monotonicity_G, phi_r, read_csv,
                            semidecreasing_check, write_csv, zeta_hat, zeta_hat_bounds)
from acflow.phasefield import PhaseField, standing_wave, QUARTIC

SIGMA = 2 * math.sqrt(2) / 3
EPS = 0.05


@pytest.fixture(scope="module")
def g():
    return ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=160))


@pytest.fixture(scope="module")
def line(g):
    """Planar wave with interfaces at x = 0.5 and x = 1.5."""
    d = 0.5 - np.abs(g.coords[:, 0] - 1.0)
    return PhaseField(standing_wave(QUARTIC)(d / EPS), EPS, 0.0, g)


def const(g, c):
    return PhaseField(np.full(g.n_nodes, c), EPS, 0.0, g)


def test_energy_measure_trivial_and_perimeter(g, line):
    assert energy_measure(const(g, 1.0)).mass == 0.0
    # two lines of length 2
    assert energy_measure(line).mass == pytest.approx(SIGMA * 4, rel=0.02)


def test_equipartition_nodewise(g, line):
    grad_term = 0.5 * EPS * g.grad_norm_sq(line.u)
    pot_term = QUARTIC.F(line.u) / EPS
    assert np.abs(grad_term - pot_term).max() <= 0.01 * pot_term.max()


def test_discrepancy_signs(g):
    xi = discrepancy_measure(const(g, 0.0))
    assert np.all(xi.weights < 0)
    np.testing.assert_allclose(xi.weights / g.w, -0.25 / EPS)
    ramp = PhaseField(np.clip(g.coords[:, 0] - 1.0, -1, 1), EPS, 0.0, g)
    assert discrepancy_measure(ramp).sup_density > 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(0.0, 3.0))
def test_discrepancy_bounded_by_energy(a, b):
    g = ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=32))
    s = PhaseField(a * np.sin(np.pi * g.coords[:, 0]) + b * np.cos(np.pi * g.coords[:, 1]), 0.3, 0.0, g)
    assert np.all(np.abs(discrepancy_measure(s).weights) <= energy_measure(s).weights + 1e-12)


def test_zeta_hat_plateau_and_cutoff():
    R0 = 1.0
    assert np.all(zeta_hat(np.linspace(0, 0.2499, 50), R0) == 1.0)
    assert np.all(zeta_hat(np.linspace(1.0, 4.0, 50), R0) == 0.0)
    b = zeta_hat_bounds(R0)
    assert b["zeta"] <= 1.0
    # the transition band is narrow for R0 = 1, so the derivative bounds exceed 1
    assert b["zeta_prime"] == pytest.approx(1.875 / 0.75)


def test_kernel_values(g):
    y = g.node_at(1.0, 1.0)
    k = MonotonicityKernel(y, 0.05, 1.0, g)
    assert kernel_phi(k, y, 0.04) == pytest.approx(0.01**-0.5)
    assert kernel_phi(k, g.node_at(0.0, 0.0), 0.0) == 0.0
    assert heat_kernel(np.array(0.09), 0.01, 1.0) == pytest.approx(10 * math.exp(-2.25))
    assert 10 * math.exp(-2.25) == pytest.approx(1.054, abs=1e-3)
    with pytest.raises(KernelDomainError):
        k.field(0.05)


def test_kernel_monotone_in_distance(g):
    y = g.node_at(1.0, 1.0)
    f = MonotonicityKernel(y, 0.1, 1.0, g).field(0.0)
    d = g.distance_from(y)
    order = np.argsort(d)
    assert np.all(np.diff(f[order]) <= 1e-14) and np.all(f >= 0)


def test_phi_r(g):
    y = g.node_at(1.0, 1.0)
    assert phi_r(g, y, 1.0, 2.0)[y] == pytest.approx(1.0)
    x = g.node_at(1.25, 1.0)
    assert phi_r(g, y, 0.25, 2.0)[x] == pytest.approx(math.exp(-0.5) / 0.25)
    rng = np.random.default_rng(1)
    nodes = rng.choice(g.n_nodes, 100, replace=False)
    s, t = 0.05, 0.02
    k = MonotonicityKernel(y, s, 1.0, g)
    np.testing.assert_allclose(k.values(t, nodes), math.sqrt(2) * phi_r(g, y, math.sqrt(2 * (s - t)), 1.0, nodes),
                               rtol=1e-12)


def test_monotonicity_G(g, line):
    y = g.node_at(0.5, 1.0)
    k = MonotonicityKernel(y, 0.02, 1.0, g)
    assert monotonicity_G(DiscreteMeasure(np.zeros(g.n_nodes), g), k, 0.0) == 0.0
    w = np.zeros(g.n_nodes)
    w[y] = 3.0
    assert monotonicity_G(DiscreteMeasure(w, g), k, 0.01) == pytest.approx(3.0 / 0.1)
    # line through y: G -> 2 sigma sqrt(pi)
    assert monotonicity_G(energy_measure(line), k, 0.0) == pytest.approx(2 * SIGMA * math.sqrt(math.pi), rel=0.03)


def test_integrated_monotonicity_trivial_fits():
    t = np.linspace(0, 0.09, 10)
    assert check_integrated_monotonicity(t, np.ones(10), 0.1).constants == (0.0, 0.0, 0.0)
    assert check_integrated_monotonicity(t, 2 - t, 0.1).constants == (0.0, 0.0, 0.0)
    fit = check_integrated_monotonicity(t, 1 + t, 0.1)
    assert fit.violations == 0 and fit.C4 >= 1.0 or fit.C3 > 0 or fit.C5 > 0
    with pytest.raises(ValueError):
        fit_monotonicity([([], [], 0.1)])


def test_integrated_monotonicity_reports_violations_under_caps():
    t = np.linspace(0, 0.09, 10)
    fit = check_integrated_monotonicity(t, 1 + 100 * t, 0.1, caps=(0.0, 0.0, 0.0))
    assert fit.violations > 0


def test_differential_monotonicity(g, line):
    k = MonotonicityKernel(g.node_at(0.5, 1.0), 1.0, 1.0, g)
    one = const(g, 1.0)
    r = check_differential_monotonicity(one, one.with_u(one.u, t=0.01), k, 0.0, 0.0)
    assert r["lhs"] == 0.0 and r["slack"] >= 0
    r = check_differential_monotonicity(line, line.with_u(line.u, t=0.01), k, 1.0, 0.0)
    assert r["slack"] >= 0
    with pytest.raises(KernelDomainError):
        check_differential_monotonicity(line, line.with_u(line.u, t=0.95), k, 0.0, 0.0)


def test_density_ratio(g, line):
    mu = energy_measure(line)
    assert density_ratio(DiscreteMeasure(np.zeros(g.n_nodes), g), 0, 0.2, 1.0) == 0.0
    assert density_ratio(mu, g.node_at(0.5, 1.0), 0.25, 1.0) == pytest.approx(SIGMA, rel=0.05)
    assert density_ratio(mu, g.node_at(1.0, 1.0), 0.2, 1.0) < 1e-6
    with pytest.raises(ValueError):
        density_ratio(mu, 0, 1.5, 1.0)


def test_semidecreasing_trivial():
    t = np.linspace(0, 1, 11)
    assert semidecreasing_check(t, -t).C == 0.0
    assert semidecreasing_check(t, t).C == pytest.approx(1.0)


def test_gradient_ratio_bound(g):
    d = g.distance_from(g.node_at(1.0, 1.0))
    assert check_lemma31(np.clip(1 - (d / 0.5) ** 2, 0, None) ** 3, g) < 0
    # the squared bump attains equality at its support edge; strict slack holds away from it
    sq = np.clip(1 - (d / 0.5) ** 2, 0, None) ** 2
    assert -0.1 * 64 <= check_lemma31(sq, g, rel_threshold=1e-3) < 0
    assert check_lemma31(np.full(g.n_nodes, 2.0), g) <= 0
    # 1 - cos(pi x) behaves like x^2 at 0, where the bound is attained
    phi = 1 - np.cos(np.pi * (g.coords[:, 0] - 1.0))
    assert abs(check_lemma31(phi, g)) <= 2 * np.pi**2 * g.h


def test_kernel_clauses_zero_measure_and_line(g, line):
    rep = lemma42_suite(DiscreteMeasure(np.zeros(g.n_nodes), g), 1.0, [0], [0.1], [0.2])
    assert rep.worst >= 0
    ys = [g.node_at(0.5, 1.0), g.node_at(0.8, 0.4)]
    rep = lemma42_suite(energy_measure(line), 1.0, ys, [0.05, 0.1], [0.2, 0.4])
    assert min(rep.clauses.values()) >= -1e-3
    # tail for R = 4r is below 2 D e^-6
    assert rep.clauses["ii"] >= 0


def test_scale_comparison_single_atom_brute_force():
    r, R = 0.1, 0.3
    d = np.linspace(0, 3, 301)
    lhs = np.exp(-d**2 / (2 * r * r)) / r
    assert np.all((R / r) * np.exp(-d**2 / (2 * R * R)) / R >= lhs * (1 - 1e-12))


def test_clearing_out_trivial(g):
    snaps = [const(g, 1.0).with_u(np.ones(g.n_nodes), t=k * 0.01) for k in range(5)]
    rep = clearing_out_scan(snaps, [0, 500], [0.03, 0.04], 0.05, 0.6, 0.6, 1.0)
    assert rep.n_hypothesis == 4 and not rep.violations


def test_clearing_out_skips_probe_on_interface(g, line):
    snaps = [line.with_u(line.u, t=k * 0.005) for k in range(5)]
    y = g.node_at(0.5, 1.0)
    rep = clearing_out_scan(snaps, [y], [0.02], 0.05, SIGMA * math.sqrt(math.pi) / 2, 0.6, 1.0)
    assert rep.n_hypothesis == 0


def test_forward_density(g, line):
    zero = [DiscreteMeasure(np.zeros(g.n_nodes), g, t) for t in (0.01, 0.02)]
    assert forward_density(0, 0.0, zero, 1.0) == 0.0
    # the Gaussian width must dominate eps for the line value to appear
    mus = [energy_measure(line.with_u(line.u, t=t)) for t in (0.02, 0.03, 0.04)]
    assert forward_density(g.node_at(0.5, 1.0), 0.0, mus, 1.0) == pytest.approx(
        2 * SIGMA * math.sqrt(math.pi), rel=0.05)
    near = [energy_measure(line.with_u(line.u, t=t)) for t in (0.002, 0.004)]
    # only the exponentially small tail of the diffuse profile remains
    assert forward_density(g.node_at(1.0, 1.0), 0.0, near, 1.0) < 1e-4
    with pytest.raises(ValueError):
        forward_density(0, 0.015, zero, 1.0)


def test_ledger_round_trip_and_tags():
    led = ConstantsLedger.default(SIGMA, 1.0)
    assert led.get("kappa1") == pytest.approx(1 / 64)
    assert led.get("kappa2") == pytest.approx(SIGMA * math.sqrt(math.pi) / 2)
    back = ConstantsLedger.loads(led.dumps())
    assert back.dumps() == led.dumps()
    with pytest.raises(ValueError):
        led.set("x", 1.0, "guessed")


def test_csv_header_and_neg_inf(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, "demo", [{"t": 0.0, "B": -math.inf}])
    assert p.read_text().splitlines()[0] == "# acflow-csv/1 demo"
    kind, rows = read_csv(p)
    assert kind == "demo" and rows[0]["B"] == "NEG_INF"


def test_energy_density_nonnegative(line):
    assert np.all(energy_density(line) >= 0)
