"""Exact curve-shortening oracles, interface extraction, the canonical run
harness and the eps-sweep report."""

from __future__ import annotations

import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig
from .errors import EmptyInterfaceError
from .manifold import ChartGrid, injectivity_radius
from .measure import (
    ConstantsLedger,
    DiscreteMeasure,
    MonotonicityKernel,
    clearing_out_scan,
    density_ratio,
    discrepancy_density,
    energy_density,
    energy_measure,
    fit_monotonicity,
    forward_density,
    lemma42_suite,
    monotonicity_G,
    probe_lattice,
    semidecreasing_check,
    write_csv,
)
from .phasefield import (
    AllenCahnStepper,
    PhaseField,
    discrete_energy,
    dissipation_rhs,
    save_checkpoint,
    surface_tension,
    well_prepared_init,
)
from .varifold import (
    brakke_functional_limit,
    brakke_pairings,
    brakke_residual,
    build_varifold,
    first_variation_identity_check,
    lemma74_bounds_check,
    mean_curvature_estimate,
)


# --------------------------------------------------------------------------
# exact flows
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ExactFlow:
    """Shrinking circle on a flat torus or shrinking polar cap on the unit sphere.

    ``torus-circle``: ``R(t) = sqrt(R0^2 - 2 t)``.
    ``sphere-cap``: the boundary latitude obeys ``cos theta(t) = cos theta0 e^t``.
    """

    kind: str
    r0: float

    def __post_init__(self):
        if self.kind not in ("torus-circle", "sphere-cap"):
            raise ValueError(f"unknown flow {self.kind!r}")
        if self.kind == "sphere-cap" and not 0 < self.r0 < math.pi / 2:
            raise ValueError("cap oracle needs 0 < theta0 < pi/2")

    @property
    def extinction(self) -> float:
        if self.kind == "torus-circle":
            return 0.5 * self.r0**2
        return -math.log(math.cos(self.r0))

    def radius(self, t):
        """Circle radius, or polar angle of the cap boundary."""
        t = np.asarray(t, float)
        if np.any(t > self.extinction + 1e-15):
            raise ValueError("time past extinction")
        if self.kind == "torus-circle":
            out = np.sqrt(np.maximum(self.r0**2 - 2.0 * t, 0.0))
        else:
            out = np.arccos(np.minimum(math.cos(self.r0) * np.exp(t), 1.0))
        return out if out.ndim else float(out)

    def curvature(self, t):
        """Curvature ``1/R`` or geodesic curvature ``cot theta``."""
        r = np.asarray(self.radius(t))
        with np.errstate(divide="ignore"):
            out = 1.0 / r if self.kind == "torus-circle" else 1.0 / np.tan(r)
        return out if out.ndim else float(out)

    def length(self, t):
        r = np.asarray(self.radius(t))
        out = 2 * np.pi * (r if self.kind == "torus-circle" else np.sin(r))
        return out if out.ndim else float(out)

    @classmethod
    def for_config(cls, cfg: RunConfig) -> "ExactFlow | None":
        if cfg.metric.kind == "flat-torus" and cfg.interface.kind == "circle":
            return cls("torus-circle", cfg.interface.radius)
        if cfg.metric.kind == "sphere" and cfg.interface.kind == "cap" and cfg.interface.theta0 < math.pi / 2:
            return cls("sphere-cap", cfg.interface.theta0)
        return None


# --------------------------------------------------------------------------
# interface extraction
# --------------------------------------------------------------------------
@dataclass
class InterfaceEstimate:
    points: np.ndarray  # chart coordinates of zero crossings
    center: tuple[float, float]
    radius: float
    radius_std: float


def _crossings(U: np.ndarray, axis: int, periodic: bool):
    a = U
    b = np.roll(U, -1, axis) if periodic else np.take(U, range(1, U.shape[axis]), axis)
    if not periodic:
        a = np.take(U, range(U.shape[axis] - 1), axis)
    hit = (a * b < 0) | ((a == 0) & (b != 0))
    idx = np.argwhere(hit)
    fa, fb = a[hit], b[hit]
    frac = fa / (fa - fb)
    return idx, frac


def extract_interface(s: PhaseField) -> InterfaceEstimate:
    """Zero crossings along grid lines and a radius estimate.

    Torus: a circle is fitted to the crossings (algebraic least squares,
    unwrapped around the inside region's circular mean); the radius is the
    mean distance to the center, geodesic on a conformal torus.  Sphere:
    crossings along meridians; the radius is the mean polar angle.
    """
    g = s.grid
    if not (s.u.max() > 0 and s.u.min() < 0):
        raise EmptyInterfaceError(f"no sign change at t={s.t:g}")
    if g.kind == "sphere":
        B = g.block(s.u)
        idx, frac = _crossings(B, 0, periodic=False)
        if idx.size == 0:
            raise EmptyInterfaceError(f"no meridian crossing at t={s.t:g}")
        th = (idx[:, 0] + 1 + frac) * g.h_theta
        ph = idx[:, 1] * g.h_phi
        pts = np.stack([th, ph], axis=1)
        return InterfaceEstimate(pts, (0.0, 0.0), float(th.mean()), float(th.std()))
    U = g.block(s.u)
    n, h, L = g.n, g.h, g.L
    pts, edges = [], []
    for axis in (0, 1):
        idx, frac = _crossings(U, axis, periodic=True)
        p = idx.astype(float) * h
        p[:, axis] += frac * h
        pts.append(p)
        nb = idx.copy()
        nb[:, axis] = (nb[:, axis] + 1) % n
        edges.append((idx[:, 0] * n + idx[:, 1], nb[:, 0] * n + nb[:, 1], frac))
    P = np.concatenate(pts)
    if P.size == 0:
        raise EmptyInterfaceError(f"no crossing at t={s.t:g}")
    inside = g.coords[s.u > 0]
    ang = inside * (2 * np.pi / L)
    guess = (np.arctan2(np.sin(ang).mean(0), np.cos(ang).mean(0)) % (2 * np.pi)) * L / (2 * np.pi)
    P = guess + (P - guess + L / 2) % L - L / 2
    A = np.column_stack([P, np.ones(len(P))])
    rhs = -(P**2).sum(1)
    D, E, F = np.linalg.lstsq(A, rhs, rcond=None)[0]
    c = np.array([-D / 2, -E / 2])
    if g.kind == "flat-torus":
        r = np.hypot(*(P - c).T)
    else:
        dist = g.distance_from(g.node_at(*(c % L)))
        r = np.concatenate([(1 - f) * dist[i] + f * dist[j] for i, j, f in edges])
    return InterfaceEstimate(P, (float(c[0] % L), float(c[1] % L)), float(r.mean()), float(r.std()))


# --------------------------------------------------------------------------
# test fields
# --------------------------------------------------------------------------
def bump(g: ChartGrid, center_node: int, rho: float) -> np.ndarray:
    """``(1 - d^2/rho^2)_+^3``, a C^2 test function."""
    d = g.distance_from(center_node)
    return np.clip(1.0 - (d / rho) ** 2, 0.0, None) ** 3


def radial_field(g: ChartGrid, center: tuple[float, float], r_in: float, r_out: float) -> np.ndarray:
    """Unit outward field about ``center`` damped to zero outside ``[r_in, r_out]``."""
    diff = g.coords - np.asarray(center)
    if g.kind != "sphere":
        diff = (diff + g.L / 2) % g.L - g.L / 2
    r = np.hypot(diff[:, 0], diff[:, 1])
    mid, half = 0.5 * (r_in + r_out), 0.5 * (r_out - r_in)
    b = np.clip(1 - ((r - mid) / half) ** 2, 0, None) ** 3
    out = diff / np.maximum(r, 1e-12)[:, None] * b[:, None]
    return out / np.sqrt(g.metric)


def probe_vector_fields(g: ChartGrid, center: tuple[float, float], radius: float) -> dict[str, np.ndarray]:
    """Three smooth fields supported near a circle of ``radius``."""
    Y1 = radial_field(g, center, max(radius - 0.3, 0.02), radius + 0.3)
    diff = g.coords - np.asarray(center)
    diff = (diff + g.L / 2) % g.L - g.L / 2
    r = np.hypot(diff[:, 0], diff[:, 1])
    env = np.clip(1 - (r / (radius + 0.4)) ** 2, 0, None) ** 3
    Y2 = np.stack([env * np.sin(np.pi * diff[:, 1]), env * 0.5 * np.cos(np.pi * diff[:, 0])], 1)
    Y3 = np.stack([env * diff[:, 0] * diff[:, 1], -env * diff[:, 0] ** 2], 1) * 2.0
    return {"radial": Y1, "shear": Y2 / np.sqrt(g.metric), "polynomial": Y3 / np.sqrt(g.metric)}


# --------------------------------------------------------------------------
# run harness
# --------------------------------------------------------------------------
@dataclass
class RunResult:
    config: RunConfig
    eps: float
    grid: ChartGrid
    dt: float
    R0: float
    rows: list[dict]
    snapshots: list[PhaseField]
    next_states: list[PhaseField]
    anchors: list[tuple[int, float]]
    phis: dict[str, np.ndarray]
    ledger: ConstantsLedger
    exact: ExactFlow | None
    summary: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def auto_anchors(cfg: RunConfig, g: ChartGrid, s: float) -> list[tuple[int, float]]:
    """Five anchors at time ``s``: inside, on and off the evolving interface."""
    if g.kind == "sphere":
        th0 = cfg.interface.theta0
        thetas = [0.35 * th0, th0 * 0.9, th0, th0 + 0.3, math.pi - 0.6]
        return [(g.node_at(th, 0.0), s) for th in thetas]
    c = np.asarray(cfg.interface.center)
    R0c = cfg.interface.radius
    flow = ExactFlow.for_config(cfg)
    Rs = flow.radius(min(s, 0.99 * flow.extinction)) if flow else R0c
    offs = [0.0, Rs, R0c, R0c + 0.3, math.hypot(g.L / 2, g.L / 2) * 0.7]
    return [(g.node_at(*((c + (o / math.sqrt(2)) * np.array([1.0, 1.0])) % g.L)), s) for o in offs]


def _test_functions(cfg: RunConfig, g: ChartGrid) -> dict[str, np.ndarray]:
    one = np.ones(g.n_nodes)
    if g.kind == "sphere":
        node = g.node_at(cfg.interface.theta0, 0.0)
        return {"one": one, "bump": bump(g, node, 0.5)}
    c = np.asarray(cfg.interface.center)
    node = g.node_at(*((c + np.array([cfg.interface.radius, 0.0])) % g.L))
    return {"one": one, "bump": bump(g, node, 0.4)}


def _positive_sup(xi: np.ndarray, e: np.ndarray, floor: float = 1e-10) -> float:
    """``max(xi, 0)`` with values below ``floor * max(e)`` treated as round-off."""
    m = float(xi.max())
    return m if m > floor * float(e.max()) else 0.0


def discrepancy_tolerance(eps: float, sigma: float) -> float:
    """Declared bound on the positive discrepancy density, ``sigma * eps``."""
    return sigma * eps


def _sample_row(s: PhaseField, nxt: PhaseField, phis, anchors, R0, exact, sigma, window) -> dict:
    g = s.grid
    e = energy_density(s)
    xi = discrepancy_density(s)
    mu = DiscreteMeasure(e * g.w, g, s.t)
    row = {
        "t": s.t,
        "mass": mu.mass,
        "energy": discrete_energy(s),
        "xi_abs": float(np.dot(np.abs(xi), g.w)),
        "xi_pos_sup": _positive_sup(xi, e),
        "grad_sup": float(np.sqrt(g.grad_norm_sq(s.u).max())),
        "u_min": float(s.u.min()),
        "u_max": float(s.u.max()),
        "in_window": bool(window[0] - 1e-12 <= s.t <= window[1] + 1e-12),
    }
    try:
        est = extract_interface(s)
        row["radius"] = est.radius
    except EmptyInterfaceError:
        row["radius"] = float("nan")
    if exact is not None and s.t <= exact.extinction:
        row["radius_exact"] = exact.radius(s.t)
        row["B_exact"] = -sigma * exact.length(s.t) * exact.curvature(s.t) ** 2
    else:
        row["radius_exact"] = float("nan")
        row["B_exact"] = float("nan")
    V = build_varifold(s)
    H = mean_curvature_estimate(s, V)
    row["untangented_fraction"] = V.untangented_fraction
    nxt_mu = DiscreteMeasure(energy_density(nxt) * g.w, g, nxt.t)
    dt = nxt.t - s.t
    for name, phi in phis.items():
        row[f"mu_{name}"] = mu.integrate(phi)
        row[f"Beps_{name}"] = dissipation_rhs(s, phi)
        row[f"fd_{name}"] = (nxt_mu.integrate(phi) - mu.integrate(phi)) / dt
        row[f"Beps_avg_{name}"] = 0.5 * (row[f"Beps_{name}"] + dissipation_rhs(nxt, phi))
        row[f"Blim_{name}"] = brakke_functional_limit(mu, H, V, phi)
        row[f"Blim_unproj_{name}"] = -brakke_pairings(V, H, phi)["phiH2"] + brakke_pairings(V, H, phi)["unprojected"]
        row[f"mu_supp_{name}"] = mu.of_set(phi > 0)
    for k, (y, sa) in enumerate(anchors):
        row[f"G{k}"] = monotonicity_G(mu, MonotonicityKernel(y, sa, R0, g), s.t) if s.t < sa else float("nan")
    return row


def run_canonical(cfg: RunConfig, eps: float | None = None, out_dir: str | Path | None = None,
                  keep_snapshots: bool = True, progress: Callable[[float], None] | None = None) -> RunResult:
    """Run the flow to ``T`` sampling diagnostics every ``cadence``.

    Each sample also takes the next time step so that the weighted
    dissipation identity can be checked by a forward difference.
    """
    eps = cfg.eps_list[0] if eps is None else eps
    t_start = _time.perf_counter()
    spec = cfg.metric_spec(eps)
    g = ChartGrid(spec)
    well = cfg.double_well()
    sigma = surface_tension(well)
    R0 = injectivity_radius(spec, g)
    ledger = ConstantsLedger.default(sigma, R0, well.alpha)
    for k, v in cfg.ledger.items():
        ledger.set(k, v, "fitted-from-runs" if k not in ledger else ledger.entries[k][1])
    dt = cfg.dt(eps)
    stepper = AllenCahnStepper(g, eps, dt, well)
    exact = ExactFlow.for_config(cfg)
    anchors = auto_anchors(cfg, g, cfg.T) if cfg.anchors == "auto" else [
        (g.node_at(*a.y), a.s) for a in cfg.anchors]
    phis = _test_functions(cfg, g)
    window = (0.2 * cfg.T, 0.8 * cfg.T)
    s = well_prepared_init(g, cfg.initial_interface(), eps, well)
    per = cfg.steps_per_sample(eps)
    rows, snaps, nexts = [], [], []
    out = Path(out_dir) if out_dir else None
    if out and cfg.checkpoint_every:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    for k in range(cfg.n_samples() + 1):
        nxt = stepper(s)
        rows.append(_sample_row(s, nxt, phis, anchors, R0, exact, sigma, window))
        if keep_snapshots:
            snaps.append(s)
            nexts.append(nxt)
        if out and cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            save_checkpoint(out / "checkpoints" / f"eps{eps:g}_{k:05d}.acf", s)
        if progress:
            progress(s.t)
        if k == cfg.n_samples():
            break
        s = nxt
        for _ in range(per - 1):
            s = stepper(s)
        s = s.with_u(s.u, t=(k + 1) * cfg.cadence)
    res = RunResult(cfg, eps, g, dt, R0, rows, snaps, nexts, anchors, phis, ledger, exact)
    res.runtime = _time.perf_counter() - t_start
    res.summary = summarize_run(res)
    return res


def _interp(times, values, t):
    return float(np.interp(t, times, values))


def checkpoint_time(cfg: RunConfig) -> float:
    if cfg.metric.kind == "sphere":
        return min(0.3, cfg.T)
    return min(0.08, cfg.T)


def summarize_run(res: RunResult) -> dict:
    """Per-run scalar diagnostics (one row of a sweep report)."""
    cfg, rows = res.config, res.rows
    t = res.times
    row: dict = {"eps": res.eps, "n": cfg.grid_n(res.eps), "dt": res.dt, "samples": len(rows)}
    inw = np.array([r["in_window"] for r in rows])
    xi = res.column("xi_abs")
    row["xi_window_mass"] = float(np.trapezoid(xi[inw], t[inw])) if inw.sum() > 1 else float("nan")
    row["xi_pos_sup"] = float(res.column("xi_pos_sup")[inw].max()) if inw.any() else float("nan")
    row["xi_sup_tol"] = discrepancy_tolerance(res.eps, res.ledger.get("sigma"))
    row["xi_rel_max"] = float(np.nanmax(xi / np.maximum(res.column("mass"), 1e-300)))
    tc = checkpoint_time(cfg)
    kc = int(np.argmin(np.abs(t - tc)))
    row["t_check"] = float(t[kc])
    row["radius"] = rows[kc]["radius"]
    row["radius_exact"] = rows[kc]["radius_exact"]
    row["radius_rel_err"] = abs(row["radius"] - row["radius_exact"]) / row["radius_exact"] \
        if np.isfinite(row["radius_exact"]) else float("nan")
    if res.exact is not None:
        km = int(np.argmin(np.abs(t - 0.5 * cfg.T)))
        row["perimeter_rel_err"] = abs(rows[km]["mass"] / res.ledger.get("sigma") / res.exact.length(t[km]) - 1)
    series = [(t[t < s], res.column(f"G{k}")[t < s], s) for k, (_, s) in enumerate(res.anchors)]
    fit = fit_monotonicity(series)
    row.update(C3=fit.C3, C4=fit.C4, C5=fit.C5, mono_violations=fit.violations)
    for name in res.phis:
        fd, B = res.column(f"fd_{name}"), res.column(f"Beps_avg_{name}")
        row[f"dissipation_rel_err_{name}"] = float(np.max(np.abs(fd - B) / np.abs(B)))
    semi = semidecreasing_check(t, res.column("mu_bump"), res.phis["bump"], res.grid,
                                res.column("mu_supp_bump"))
    row.update(semi_C=semi.C, semi_bound=semi.bound_hessian, semi_bound_sharp=semi.bound_proof)
    Blim = res.column("Blim_one")
    br = brakke_residual(t, res.column("mu_one"), Blim)
    row["brakke_violation_fraction"] = br.violation_fraction
    Bex = res.column("B_exact")
    ok = np.isfinite(Bex) & np.isfinite(Blim)
    row["brakke_oracle_rel_err"] = float(np.max(np.abs(Blim[ok] - Bex[ok]) / np.abs(Bex[ok]))) if ok.any() else float("nan")
    row["grad_eps_max"] = float(res.column("grad_sup").max() * res.eps)
    row["energy_increase_max"] = float(max(0.0, np.diff(res.column("energy")).max() / abs(res.column("energy")[0])))
    row["untangented_max"] = float(res.column("untangented_fraction").max())
    row["runtime"] = res.runtime
    return row


# --------------------------------------------------------------------------
# post-run suites
# --------------------------------------------------------------------------
def density_suite(res: RunResult, n_probes: int | None = None, radii: Sequence[float] = (0.05, 0.1, 0.2, 0.4, 0.8)
                  ) -> dict:
    """Density ratios at random probes over all stored states."""
    g = res.grid
    rng = np.random.default_rng(res.config.seed)
    n_probes = res.config.scan.density_probes if n_probes is None else n_probes
    probes = rng.choice(g.n_nodes, size=n_probes, replace=False)
    Rs = [r * res.R0 for r in radii]
    vals = []
    for s in res.snapshots:
        mu = energy_measure(s)
        vals.append([max(density_ratio(mu, int(y), R, res.R0) for R in Rs) for y in probes])
    vals = np.array(vals)
    on = []
    for s in res.snapshots:
        mu = energy_measure(s)
        try:
            est = extract_interface(s)
        except EmptyInterfaceError:
            continue
        pts = est.points[:: max(1, len(est.points) // 8)]
        for p in pts[:8]:
            y = g.node_at(*p)
            on.extend(mu.of_set(g.distance_from(y) <= R) / res.ledger.get("sigma") / (2 * R) for R in Rs)
    return {"D0": float(vals.max()), "sigma": res.ledger.get("sigma"),
            "on_interface_max": float(max(on)) if on else 0.0}


def verify_states(res: RunResult, states: Sequence[int] | None = None) -> dict:
    """Kernel integral clauses, Cauchy-Schwarz bounds and the first-variation identity."""
    g = res.grid
    idx = range(len(res.snapshots)) if states is None else states
    ys = [y for y, _ in res.anchors]
    rs = [0.05, 0.1, 0.2]
    Rs = [0.1, 0.2, 0.4, 0.8]
    worst42 = {}
    worst74 = {}
    fv = []
    for i in idx:
        s = res.snapshots[i]
        mu = energy_measure(s)
        rep = lemma42_suite(mu, res.R0, ys, rs, Rs)
        for k, v in rep.clauses.items():
            worst42[k] = min(worst42.get(k, np.inf), v)
        for name, phi in res.phis.items():
            for k, v in lemma74_bounds_check(s, phi).items():
                worst74[k] = min(worst74.get(k, np.inf), v["slack"] / v["scale"])
        if g.kind != "sphere":
            try:
                est = extract_interface(s)
            except EmptyInterfaceError:
                continue
            for name, Y in probe_vector_fields(g, est.center, est.radius).items():
                fv.append(first_variation_identity_check(s, Y)["residual"])
    return {"lemma42": worst42, "lemma74": worst74, "first_variation_max": max(fv) if fv else 0.0}


def support_identity_probe(res: RunResult, probes: Sequence[int] | None = None, n: int = 10,
                           off_threshold: float = 1e-2) -> dict:
    """Compare the kernel-energy support proxy with the phase field.

    Off-support (``G < kappa2`` with ``s - t`` the largest sample gap below
    ``kappa1``) requires ``min |u| >= 1 - off_threshold`` on the ball of
    radius ``sqrt(s - t)/2``; a probe whose ball meets the extracted
    interface requires ``min |u| <= alpha`` there.
    """
    g = res.grid
    kap1, kap2 = res.ledger.get("kappa1"), res.ledger.get("kappa2")
    alpha = res.ledger.get("alpha")
    probes = probe_lattice(g, n) if probes is None else probes
    t = res.times
    lag = max(1, int(math.floor(kap1 / res.config.cadence - 1e-9)))
    tau = lag * res.config.cadence
    off_bad, on_bad, n_off, n_on = [], [], 0, 0
    for j in range(lag, len(t)):
        s_state = res.snapshots[j]
        mu = energy_measure(res.snapshots[j - lag])
        try:
            pts = extract_interface(s_state).points
        except EmptyInterfaceError:
            pts = np.zeros((0, 2))
        pnodes = np.array([g.node_at(*p) for p in pts], dtype=int)
        for y in probes:
            d = g.distance_from(y)
            ball = d <= 0.5 * math.sqrt(tau)
            G = monotonicity_G(mu, MonotonicityKernel(y, t[j], res.R0, g), t[j - lag])
            m = float(np.abs(s_state.u[ball]).min())
            if G < kap2:
                n_off += 1
                if m < 1 - off_threshold:
                    off_bad.append((int(y), float(t[j]), m))
            elif pnodes.size and d[pnodes].min() <= 0.5 * math.sqrt(tau):
                n_on += 1
                if m > alpha:
                    on_bad.append((int(y), float(t[j]), m))
    return {"n_off": n_off, "n_on": n_on, "off_violations": off_bad, "on_violations": on_bad, "tau": tau}


def scan_run(res: RunResult, n: int | None = None, n_s: int | None = None) -> dict:
    """Clearing-out scan, support probe and forward densities on a lattice."""
    cfg = res.config
    n = cfg.scan.lattice if n is None else n
    n_s = cfg.scan.s_values if n_s is None else n_s
    probes = probe_lattice(res.grid, n)
    t = res.times
    s_vals = [float(v) for v in t[np.linspace(len(t) // (n_s + 1), len(t) - 1, n_s).astype(int)]]
    rep = clearing_out_scan(res.snapshots, probes, s_vals, res.ledger.get("kappa1"),
                            res.ledger.get("kappa2"), res.ledger.get("alpha"), res.R0)
    sup = support_identity_probe(res, probes)
    measures = [energy_measure(s) for s in res.snapshots]
    fwd = [forward_density(y, tt, measures, res.R0) for y in probes[:: max(1, len(probes) // 20)]
           for tt in s_vals[:-1]]
    return {"clearing_out": rep, "support": sup, "forward_density_max": max(fwd) if fwd else 0.0,
            "s_values": s_vals}


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------
def _close(a: float, b: float, rel: float = 0.2) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b)) or (a == 0 and b == 0)


@dataclass
class SweepReport:
    rows: list[dict]
    clauses: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.clauses.values())

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sweep.csv", "sweep-report", self.rows)
        (out / "summary.json").write_text(json.dumps(
            {"ok": self.ok, "clauses": self.clauses, "rows": self.rows}, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def sweep_clauses(rows: Sequence[dict]) -> dict[str, bool]:
    """Trend clauses over rows ordered by decreasing eps."""
    if len(rows) < 2:
        return {}
    xm = [r["xi_window_mass"] for r in rows]
    last = rows[-1]
    cl = {
        "xi_mass_decreasing": all(b < a for a, b in zip(xm, xm[1:])),
        "xi_mass_ratio_le_half": xm[-1] / xm[0] <= 0.5,
        "xi_sup_within_tol": all(r["xi_pos_sup"] <= r["xi_sup_tol"] for r in rows),
        "monotonicity_fit_exists": all(r["mono_violations"] == 0 for r in rows),
        "monotonicity_stable": all(
            _close(a[k], b[k]) for a, b in zip(rows, rows[1:]) for k in ("C3", "C4", "C5")),
    }
    if np.isfinite(last.get("radius_rel_err", np.nan)):
        cl["radius_smallest_eps"] = last["radius_rel_err"] <= max(0.02, 2 * last["eps"])
    if "perimeter_rel_err" in last:
        cl["perimeter_smallest_eps"] = last["perimeter_rel_err"] <= 0.03
    return cl


def run_eps_sweep(cfg: RunConfig, out_dir: str | Path | None = None,
                  keep: bool = False) -> tuple[SweepReport, list[RunResult]]:
    """Run every eps of ``cfg`` on the same geometry and assemble a report."""
    eps = cfg.eps_list
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps list must be strictly decreasing")
    results, rows = [], []
    for e in eps:
        r = run_canonical(cfg, e, out_dir=out_dir, keep_snapshots=keep or e == eps[-1])
        rows.append(r.summary)
        if not keep and e != eps[-1]:
            r.snapshots, r.next_states = [], []
        results.append(r)
    rep = SweepReport(rows, sweep_clauses(rows))
    if out_dir:
        rep.write(out_dir)
    return rep, results
