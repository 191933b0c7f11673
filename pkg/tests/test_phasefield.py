import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acflow.errors import GeometryError, ResolutionError, SolverBlowUpError, StabilityError
from acflow.manifold import ChartGrid, MetricSpec
from acflow.measure import energy_measure
from acflow.phasefield import (QUARTIC, AllenCahnStepper, DoubleWell, InitialInterface, PhaseField,
                               check_H0, chemical_potential, discrete_energy, dissipation_identity_check,
                               dissipation_rhs, gradient_sup, load_checkpoint, read_checkpoint_header,
                               save_checkpoint, standing_wave, step, surface_tension, well_prepared_init)

SIGMA = 2 * math.sqrt(2) / 3


def grid(n=160):
    return ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=n))


def test_quartic_satisfies_H0():
    assert check_H0(QUARTIC).ok


def test_H0_fails_for_small_alpha():
    rep = check_H0(DoubleWell.quartic(alpha=0.5))
    assert not rep.clauses["convex_beyond_alpha"]


def test_H0_fails_for_single_well():
    w = DoubleWell(name="single", F=lambda s: 0.5 * np.asarray(s) ** 2, f=lambda s: np.asarray(s),
                   fprime=lambda s: np.ones_like(np.asarray(s, float)))
    assert not check_H0(w).ok


def test_surface_tension_value_and_scaling():
    assert surface_tension(QUARTIC) == pytest.approx(0.942809, abs=1e-6)
    assert surface_tension(DoubleWell.quartic(scale=4.0)) == pytest.approx(2 * SIGMA, rel=1e-9)


def test_standing_wave_is_tanh():
    z = np.linspace(-6, 6, 101)
    np.testing.assert_allclose(standing_wave(QUARTIC)(z), np.tanh(z / math.sqrt(2)), atol=1e-12)


def test_tabulated_profile_solves_ode():
    w = DoubleWell.quartic(scale=2.0)
    w = DoubleWell(name="table", F=w.F, f=w.f, fprime=w.fprime, alpha=w.alpha)
    z = np.linspace(-3, 3, 61)
    q = standing_wave(w)(z)
    np.testing.assert_allclose(q, np.tanh(z), atol=1e-6)


def test_initial_mass_matches_perimeter():
    s = well_prepared_init(grid(), InitialInterface(radius=0.5), 0.05)
    assert energy_measure(s).mass == pytest.approx(SIGMA * 2 * math.pi * 0.5, rel=0.02)


def test_gradient_sup_of_profile():
    eps = 0.05
    s = well_prepared_init(grid(), InitialInterface(radius=0.5), eps)
    assert gradient_sup(s) == pytest.approx(1 / (math.sqrt(2) * eps), rel=0.02)


def test_resolution_and_geometry_errors():
    with pytest.raises(ResolutionError):
        well_prepared_init(grid(64), InitialInterface(), 0.05)
    with pytest.raises(GeometryError):
        well_prepared_init(ChartGrid(MetricSpec(kind="sphere", n_theta=64)), InitialInterface(), 0.2)
    with pytest.raises(GeometryError):
        well_prepared_init(ChartGrid(MetricSpec(kind="sphere", n_theta=256)),
                           InitialInterface(kind="cap", theta0=0.1), 0.05)


def test_dt_above_limit_raises():
    with pytest.raises(StabilityError):
        AllenCahnStepper(grid(), 0.05, 0.6 * 0.05**2)


def test_energy_decreases_and_max_principle():
    eps = 0.05
    s = well_prepared_init(grid(), InitialInterface(radius=0.5), eps)
    stepper = AllenCahnStepper(s.grid, eps, 0.5 * eps**2)
    E = discrete_energy(s)
    for _ in range(100):
        s = stepper(s)
        E1 = discrete_energy(s)
        assert E1 <= E * (1 + 1e-8)
        assert np.abs(s.u).max() <= 1 + 1e-6
        E = E1
    assert eps * gradient_sup(s) <= 1.2 / math.sqrt(2)


def test_constant_states_are_fixed():
    g = grid(64)
    for c in (1.0, -1.0, 0.0):
        s = PhaseField(np.full(g.n_nodes, c), 0.1, 0.0, g)
        out = step(s, 0.005)
        np.testing.assert_allclose(out.u, c, atol=1e-12)
        assert out.t == pytest.approx(0.005)


def test_blow_up_reports_time():
    g = grid(64)
    s = PhaseField(np.full(g.n_nodes, np.nan), 0.1, 0.3, g)
    with pytest.raises(SolverBlowUpError) as info:
        step(s, 0.001)
    assert info.value.time == 0.3


def test_chemical_potential_vanishes_on_planar_wave():
    eps = 0.05
    g = ChartGrid(MetricSpec(kind="flat-torus", side=2.0, n=320))
    d = 0.5 - np.abs(g.coords[:, 0] - 1.0)
    s = PhaseField(np.tanh(d / (math.sqrt(2) * eps)), eps, 0.0, g)
    assert np.abs(chemical_potential(s)).max() * eps**2 < 1e-3


def test_dissipation_identity_single_step():
    eps = 0.05
    s = well_prepared_init(grid(), InitialInterface(radius=0.5), eps)
    nxt = step(s, 0.25 * eps**2)
    phi = np.ones(s.grid.n_nodes)
    B = dissipation_rhs(s, phi)
    assert B < 0
    assert dissipation_identity_check(s, nxt, phi) <= 0.05 * abs(B)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1, 1), st.floats(0.1, 2.0))
def test_dissipation_with_constant_phi_is_nonpositive(a, b):
    g = grid(32)
    x, y = g.coords.T * np.pi
    s = PhaseField(a * np.sin(x) + 0.3 * np.cos(y), b * 0.25, 0.0, g)
    assert dissipation_rhs(s, np.ones(g.n_nodes)) <= 1e-12


def test_checkpoint_round_trip(tmp_path):
    g = grid(64)
    s = PhaseField(np.random.default_rng(0).uniform(-1, 1, g.n_nodes), 0.1, 1 / 3, g)
    path = tmp_path / "a.acf"
    save_checkpoint(path, s)
    back = load_checkpoint(path, g)
    assert np.array_equal(back.u, s.u) and back.t == s.t and back.eps == s.eps
    assert read_checkpoint_header(path)["t"] == 1 / 3
    with pytest.raises(ValueError):
        load_checkpoint(path, grid(32))
    (tmp_path / "b.acf").write_bytes(b"junk" * 8)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "b.acf", g)
