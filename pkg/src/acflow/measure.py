"""Energy and discrepancy measures, the localized monotonicity kernel, and
the density / clearing-out diagnostics built on them.

For ``N = 2`` the kernel anchored at ``(y, s)`` is

    phi(x, t) = zeta_hat(d(x, y)^2) * (s - t)^(-1/2) * exp(-d^2 / (4 (s - t)))

and its scale-``r`` form is ``phi_y^r(x) = zeta * r^-1 * exp(-d^2 / (2 r^2))``.
Under ``r^2 = 2 (s - t)`` the two agree up to a constant:
``phi(x, t) = sqrt(2) * phi_y^r(x)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import KernelDomainError
from .manifold import ChartGrid
from .phasefield import PhaseField

OMEGA_1 = 2.0
SQRT_PI = math.sqrt(math.pi)
CSV_SCHEMA = "acflow-csv/1"


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------
@dataclass
class DiscreteMeasure:
    """Atomic measure with one (possibly zero) atom per grid node."""

    weights: np.ndarray
    grid: ChartGrid
    t: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("measure weights must be nonnegative")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def atoms(self) -> list[tuple[int, float]]:
        idx = self.support
        return list(zip(idx.tolist(), self.weights[idx].tolist()))

    def integrate(self, phi: np.ndarray | float) -> float:
        return float(np.dot(np.broadcast_to(phi, self.weights.shape), self.weights))

    def of_set(self, mask: np.ndarray) -> float:
        return float(self.weights[mask].sum())

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(self.weights + other.weights, self.grid, self.t)

    def __mul__(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.weights * c, self.grid, self.t)

    __rmul__ = __mul__


@dataclass
class SignedDiscreteMeasure:
    weights: np.ndarray
    grid: ChartGrid
    t: float = 0.0
    sup_density: float = 0.0

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    @property
    def positive_part(self) -> float:
        return float(np.clip(self.weights, 0, None).sum())

    def integrate(self, phi: np.ndarray | float) -> float:
        return float(np.dot(np.broadcast_to(phi, self.weights.shape), self.weights))


def energy_density(s: PhaseField) -> np.ndarray:
    """``eps/2 |grad u|^2 + F(u)/eps`` per node."""
    return 0.5 * s.eps * s.grid.grad_norm_sq(s.u) + s.well.F(s.u) / s.eps


def discrepancy_density(s: PhaseField) -> np.ndarray:
    return 0.5 * s.eps * s.grid.grad_norm_sq(s.u) - s.well.F(s.u) / s.eps


def energy_measure(s: PhaseField) -> DiscreteMeasure:
    return DiscreteMeasure(energy_density(s) * s.grid.w, s.grid, s.t)


def discrepancy_measure(s: PhaseField) -> SignedDiscreteMeasure:
    dens = discrepancy_density(s)
    return SignedDiscreteMeasure(dens * s.grid.w, s.grid, s.t, float(dens.max()))


# --------------------------------------------------------------------------
# kernel
# --------------------------------------------------------------------------
def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def zeta_hat(rho: np.ndarray, R0: float) -> np.ndarray:
    """Cutoff in ``rho = d^2``: 1 below ``R0^2/4``, 0 above ``R0^2``."""
    a, b = 0.25 * R0**2, R0**2
    return 1.0 - _smoothstep((np.asarray(rho, dtype=float) - a) / (b - a))


def zeta_hat_bounds(R0: float, n: int = 20001) -> dict[str, float]:
    """Sampled ``sup |zeta_hat|``, ``sup |zeta_hat'|``, ``sup |zeta_hat''|``."""
    a, b = 0.25 * R0**2, R0**2
    x = np.linspace(0.0, 1.0, n)
    d1 = 30.0 * x**2 * (1 - x) ** 2 / (b - a)
    d2 = 60.0 * x * (1 - x) * (1 - 2 * x) / (b - a) ** 2
    return {
        "zeta": float(np.abs(zeta_hat(np.linspace(0, 2 * b, n), R0)).max()),
        "zeta_prime": float(np.abs(d1).max()),
        "zeta_second": float(np.abs(d2).max()),
    }


def heat_kernel(d2: np.ndarray, tau: float, R0: float) -> np.ndarray:
    """``zeta_hat(d^2) tau^(-1/2) exp(-d^2 / (4 tau))`` for ``tau > 0``."""
    return zeta_hat(d2, R0) * np.exp(-d2 / (4.0 * tau)) / math.sqrt(tau)


@dataclass
class MonotonicityKernel:
    y: int
    s: float
    R0: float
    grid: ChartGrid

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("anchor time must be positive")

    @property
    def dist2(self) -> np.ndarray:
        return self.grid.distance_from(self.y) ** 2

    def field(self, t: float) -> np.ndarray:
        if t >= self.s:
            raise KernelDomainError(f"kernel needs t < s (t={t:g}, s={self.s:g})")
        return heat_kernel(self.dist2, self.s - t, self.R0)

    def values(self, t: float, nodes: np.ndarray) -> np.ndarray:
        if t >= self.s:
            raise KernelDomainError(f"kernel needs t < s (t={t:g}, s={self.s:g})")
        return heat_kernel(self.dist2[nodes], self.s - t, self.R0)


def kernel_phi(k: MonotonicityKernel, x: int, t: float) -> float:
    return float(k.values(t, np.array([x]))[0])


def phi_r(grid: ChartGrid, y: int, r: float, R0: float, nodes: np.ndarray | None = None) -> np.ndarray:
    """``zeta(x) r^-1 exp(-d(x, y)^2 / (2 r^2))``; equals ``kernel / sqrt(2)``
    at ``r = sqrt(2 (s - t))``."""
    if r <= 0:
        raise ValueError("r must be positive")
    d2 = grid.distance_from(y) ** 2
    if nodes is not None:
        d2 = d2[nodes]
    return zeta_hat(d2, R0) * np.exp(-d2 / (2.0 * r * r)) / r


def monotonicity_G(mu: DiscreteMeasure, k: MonotonicityKernel, t: float | None = None) -> float:
    """``G(t) = int phi(x, t) dmu``; only the support of ``mu`` is visited."""
    t = mu.t if t is None else t
    idx = mu.support
    if idx.size == 0:
        if t >= k.s:
            raise KernelDomainError("kernel needs t < s")
        return 0.0
    return float(np.dot(k.values(t, idx), mu.weights[idx]))


# --------------------------------------------------------------------------
# constants ledger
# --------------------------------------------------------------------------
TAGS = ("paper-existential", "fitted-from-runs", "analytic")


@dataclass
class ConstantsLedger:
    """Named constants with provenance tags.

    Serialized as ``name = value  # tag`` lines.
    """

    entries: dict[str, tuple[float, str]] = field(default_factory=dict)

    def set(self, name: str, value: float, tag: str) -> None:
        if tag not in TAGS:
            raise ValueError(f"unknown provenance tag {tag!r}")
        self.entries[name] = (float(value), tag)

    def get(self, name: str, default: float | None = None) -> float:
        if name in self.entries:
            return self.entries[name][0]
        if default is None:
            raise KeyError(name)
        return default

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def dumps(self) -> str:
        lines = [f"# {CSV_SCHEMA} constants-ledger"]
        for name in sorted(self.entries):
            value, tag = self.entries[name]
            lines.append(f"{name} = {value!r}  # {tag}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ConstantsLedger":
        out = cls()
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            body, _, tag = line.partition("#")
            name, _, value = body.partition("=")
            out.set(name.strip(), float(value), tag.strip())
        return out

    @classmethod
    def default(cls, sigma: float, R0: float, alpha: float = 0.6) -> "ConstantsLedger":
        """Constants fixed before any run: the clearing-out calibration and
        analytic values."""
        led = cls()
        led.set("sigma", sigma, "analytic")
        led.set("omega_1", OMEGA_1, "analytic")
        led.set("R0", R0, "analytic")
        led.set("alpha", alpha, "analytic")
        led.set("kappa1", (R0 / 8.0) ** 2, "fitted-from-runs")
        led.set("kappa2", sigma * SQRT_PI / 2.0, "fitted-from-runs")
        led.set("k_tilde", 1.3 / math.sqrt(2.0), "fitted-from-runs")
        return led


# --------------------------------------------------------------------------
# monotonicity checks
# --------------------------------------------------------------------------
MONO_LATTICE = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


@dataclass
class MonotonicityFit:
    C3: float
    C4: float
    C5: float
    violations: int
    worst_slack: float

    @property
    def constants(self) -> tuple[float, float, float]:
        return (self.C3, self.C4, self.C5)


def integrated_monotonicity_rhs(G0, t0, t, s, C3, C4, C5):
    a, b = np.sqrt(s - t0), np.sqrt(s - t)
    return np.exp(0.5 * C3 * (a - b)) * (G0 + C4 * (t - t0) + C5 * (a - b))


def check_integrated_monotonicity(
    times: Sequence[float], G: Sequence[float], s: float,
    lattice: Sequence[float] = MONO_LATTICE, caps: tuple[float, float, float] | None = None,
    rel_tol: float = 1e-9,
) -> MonotonicityFit:
    """Smallest lattice constants making the integrated inequality hold.

    Triples are scanned in order of (sum of lattice levels, max level,
    lexicographic), so the result is deterministic.  ``violations`` counts
    failing pairs for the returned triple; it is nonzero only when no triple
    within ``caps`` works (the largest admissible triple is then returned).
    """
    return fit_monotonicity([(times, G, s)], lattice, caps, rel_tol)


def fit_monotonicity(series: Sequence[tuple[Sequence[float], Sequence[float], float]],
                     lattice: Sequence[float] = MONO_LATTICE,
                     caps: tuple[float, float, float] | None = None,
                     rel_tol: float = 1e-9) -> MonotonicityFit:
    """One constant triple valid for several ``(times, G, s)`` series at once."""
    blocks = []
    for times, G, s in series:
        times = np.asarray(times, float)
        G = np.asarray(G, float)
        if times.size == 0:
            raise ValueError("empty G-series")
        i0, i1 = np.triu_indices(times.size, k=1)
        tol = rel_tol * max(1.0, float(np.abs(G).max()))
        blocks.append((G[i0], times[i0], times[i1], float(s), G[i1], tol))
    lat = list(lattice)
    if caps is not None:
        levels = [[j for j, v in enumerate(lat) if v <= c] for c in caps]
    else:
        levels = [list(range(len(lat)))] * 3
    triples = sorted(itertools.product(*levels), key=lambda q: (sum(q), max(q), q))
    best = None
    for q in triples:
        C3, C4, C5 = (lat[j] for j in q)
        worst, bad = np.inf, 0
        for G0, t0, t1, s, G1, tol in blocks:
            slack = integrated_monotonicity_rhs(G0, t0, t1, s, C3, C4, C5) - G1
            if slack.size:
                worst = min(worst, float(slack.min()))
                bad += int(np.sum(slack < -tol))
        if bad == 0:
            return MonotonicityFit(C3, C4, C5, 0, worst if np.isfinite(worst) else 0.0)
        best = (C3, C4, C5, bad, worst)
    return MonotonicityFit(*best)


def check_differential_monotonicity(
    before: PhaseField, after: PhaseField, k: MonotonicityKernel, C3: float, C4: float,
    dt: float | None = None,
) -> dict[str, float]:
    """Slack of ``dG/dt <= (1/(2(s-t))) int phi dxi + C3 (s-t)^-1/2 G + C4``.

    The left side is a forward difference; the right side is averaged over
    the two ends of the step.
    """
    if dt is None:
        dt = after.t - before.t
    if k.s - after.t < 10.0 * dt - 1e-15:
        raise KernelDomainError("anchor time too close: need s - t >= 10 dt")

    def rhs(st: PhaseField):
        phi = k.field(st.t)
        G = energy_measure(st).integrate(phi)
        xi = discrepancy_measure(st).integrate(phi)
        tau = k.s - st.t
        return xi / (2.0 * tau) + C3 * G / math.sqrt(tau) + C4, G

    r0, g0 = rhs(before)
    r1, g1 = rhs(after)
    lhs = (g1 - g0) / dt
    r = 0.5 * (r0 + r1)
    return {"lhs": lhs, "rhs": r, "slack": r - lhs, "scale": abs(r) + abs(lhs)}


# --------------------------------------------------------------------------
# density and semidecreasing checks
# --------------------------------------------------------------------------
def density_ratio(mu: DiscreteMeasure, x: int, R: float, R0: float) -> float:
    """``mu(B_R(x)) / (omega_1 R)``."""
    if not 0.0 < R < R0:
        raise ValueError(f"radius {R:g} outside (0, R0={R0:g})")
    d = mu.grid.distance_from(x)
    return mu.of_set(d <= R) / (OMEGA_1 * R)


@dataclass
class SemidecreasingResult:
    C: float
    bound_hessian: float
    bound_proof: float
    sup_mass: float


def semidecreasing_check(times: Sequence[float], values: Sequence[float], phi: np.ndarray | None = None,
                         grid: ChartGrid | None = None, support_masses: Sequence[float] | None = None,
                         ) -> SemidecreasingResult:
    """Smallest ``C >= 0`` such that ``values - C t`` is nonincreasing.

    With ``phi``, ``grid`` and ``support_masses`` (``mu_t({phi > 0})``) the
    two a-priori bounds are returned as well: ``2 max|Hess phi| sup mu`` and
    the sharper ``(1/2) max(|grad phi|^2 / phi) sup mu``.
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    q = np.diff(v) / np.diff(t) if t.size > 1 else np.zeros(0)
    C = float(max(0.0, q.max())) if q.size else 0.0
    bh = bp = sup = float("nan")
    if phi is not None and grid is not None and support_masses is not None:
        sup = float(np.max(support_masses))
        hess = float(grid.hessian_norm(phi).max())
        bh = 2.0 * hess * sup
        bp = 0.5 * lemma31_ratio(phi, grid) * sup
    return SemidecreasingResult(C, bh, bp, sup)


def lemma31_ratio(phi: np.ndarray, grid: ChartGrid, rel_threshold: float = 1e-6) -> float:
    """``max |grad phi|^2 / phi`` over ``{phi > rel_threshold * max phi}``."""
    mask = (phi > rel_threshold * phi.max()) & grid.regular
    if not mask.any():
        return 0.0
    return float((grid.grad_norm_sq(phi)[mask] / phi[mask]).max())


def check_lemma31(phi: np.ndarray, grid: ChartGrid, rel_threshold: float = 1e-6) -> float:
    """``max |grad phi|^2/phi - 2 max |Hess phi|`` (nonpositive up to O(h))."""
    mask = (phi > 0) & grid.regular
    hess = float(grid.hessian_norm(phi)[mask].max()) if mask.any() else 0.0
    return lemma31_ratio(phi, grid, rel_threshold) - 2.0 * hess


# --------------------------------------------------------------------------
# kernel integral inequalities
# --------------------------------------------------------------------------
@dataclass
class Lemma42Report:
    precondition_D0: float
    D: float
    clauses: dict[str, float]
    fitted: dict[str, float]
    vacuous: bool = False

    @property
    def worst(self) -> float:
        return min(self.clauses.values()) if self.clauses else 0.0


def _phi_r_integral(mu: DiscreteMeasure, y: int, r: float, R0: float, mask=None) -> float:
    idx = mu.support
    if mask is not None:
        idx = idx[mask[idx]]
    if idx.size == 0:
        return 0.0
    return float(np.dot(phi_r(mu.grid, y, r, R0, idx), mu.weights[idx]))


def lemma42_suite(mu: DiscreteMeasure, R0: float, ys: Sequence[int], rs: Sequence[float],
                  Rs: Sequence[float], delta: float = 0.1, D0_cap: float | None = None,
                  neighbors: int = 6) -> Lemma42Report:
    """Evaluate the six measure-kernel inequalities on samples.

    ``D`` is fitted as the largest ``int phi_y^rho dmu`` over samples with
    ``rho`` in ``rs`` and ``2 rs``.  Existential constants (``gamma2``,
    ``gamma3``, ``alpha_vi``) are fitted as the largest lattice value for
    which the inequality holds on every sample; a clause with no admissible
    value gets slack ``-inf``.  Slacks are ``rhs - lhs`` normalized by ``D``.
    """
    g = mu.grid
    ys, rs, Rs = list(ys), [float(r) for r in rs], [float(R) for R in Rs if 0 < R < R0]
    D0 = 0.0
    for y in ys:
        for R in Rs:
            D0 = max(D0, density_ratio(mu, y, R, R0))
    vacuous = D0_cap is not None and D0 > D0_cap
    cache: dict[tuple[int, float], float] = {}

    def I(y, r):
        key = (y, r)
        if key not in cache:
            cache[key] = _phi_r_integral(mu, y, r, R0)
        return cache[key]

    D = max([I(y, r) for y in ys for r in rs + [2 * r for r in rs]] + [0.0])
    scale = max(D, 1e-300)
    cl: dict[str, float] = {}
    fit: dict[str, float] = {}

    cl["i"] = min((D - I(y, r)) / scale for y in ys for r in rs) if mu.mass > 0 else 0.0

    worst = np.inf
    for y in ys:
        d = g.distance_from(y)
        for r in rs:
            for R in Rs:
                lhs = _phi_r_integral(mu, y, r, R0, d > R)
                worst = min(worst, (2.0 * D * math.exp(-3 * R * R / (8 * r * r)) - lhs) / scale)
    cl["ii"] = float(worst) if np.isfinite(worst) else 0.0

    worst = np.inf
    for y in ys:
        for r in rs:
            for R in Rs:
                if r <= R and r < R0:
                    worst = min(worst, ((R / r) * I(y, R) - I(y, r)) / scale)
    cl["iv"] = float(worst) if np.isfinite(worst) else 0.0

    # (iii): nearby anchors, d(y, y1) <= gamma2 r
    lattice = [2.0**-k for k in range(0, 9)]
    pairs = []
    for y in ys:
        d = g.distance_from(y)
        order = np.argsort(d)[1:neighbors + 1]
        pairs.extend((y, int(y1), float(d[y1])) for y1 in order)
    rbar = max(rs)
    cl["iii"], fit["gamma2"] = -np.inf, 0.0
    for gam in lattice:
        slack = np.inf
        for y, y1, dy in pairs:
            for r in rs:
                if dy <= gam * r:
                    slack = min(slack, ((1 + delta) * I(y, r) + D * delta - I(y1, r)) / scale)
        if slack >= -1e-12:
            cl["iii"], fit["gamma2"] = (float(slack) if np.isfinite(slack) else 0.0), gam
            break
    fit["rbar"] = rbar

    # (v): nearby scales, 1 <= R/r <= 1 + gamma3
    cl["v"], fit["gamma3"] = -np.inf, 0.0
    for gam in lattice:
        slack = np.inf
        for y in ys:
            for r in rs:
                for ratio in np.linspace(1.0, 1.0 + gam, 5):
                    R = r * ratio
                    if R < R0:
                        slack = min(slack, ((1 + delta) * I(y, r) + D * delta - I(y, R)) / scale)
        if slack >= -1e-12:
            cl["v"], fit["gamma3"] = float(slack), gam
            break

    # (vi): int phi^{a r} <= mu(B_r) / (omega_2 a r) + delta D, omega_2 = pi
    cl["vi"], fit["alpha_vi"] = -np.inf, 0.0
    for a in lattice:
        slack = np.inf
        for y in ys:
            d = g.distance_from(y)
            for r in Rs:
                ball = mu.of_set(d <= r)
                slack = min(slack, (ball / (math.pi * a * r) + delta * D - I(y, a * r)) / scale)
        if slack >= -1e-12:
            cl["vi"], fit["alpha_vi"] = float(slack) if np.isfinite(slack) else 0.0, a
            break
    return Lemma42Report(D0, D, cl, fit, vacuous)


# --------------------------------------------------------------------------
# clearing out and forward density
# --------------------------------------------------------------------------
@dataclass
class ProbeResult:
    y: int
    s: float
    t: float
    G: float
    min_abs_u: float
    ok: bool


@dataclass
class ScanReport:
    probes: list[ProbeResult]
    n_probes: int
    n_hypothesis: int

    @property
    def violations(self) -> list[ProbeResult]:
        return [p for p in self.probes if not p.ok]


def probe_lattice(grid: ChartGrid, n: int = 10, margin: float = 0.0) -> list[int]:
    """``n x n`` nodes spread evenly over the chart (sphere: away from poles)."""
    if grid.kind == "sphere":
        th = np.linspace(margin + 0.25, np.pi - margin - 0.25, n)
        ph = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return [grid.node_at(a, b) for a in th for b in ph]
    xs = (np.arange(n) + 0.5) * grid.L / n
    return [grid.node_at(a, b) for a in xs for b in xs]


def clearing_out_scan(snapshots: Sequence[PhaseField], probes: Iterable[int], s_values: Iterable[float],
                      kappa1: float, kappa2: float, alpha: float, R0: float) -> ScanReport:
    """Check ``|u| >= alpha`` near ``(y, s)`` whenever the kernel energy is small.

    For each probe ``(y, s)`` and every snapshot time ``t`` with
    ``0 < s - t < kappa1`` and ``G(t) < kappa2``, ``|u|`` is checked on the
    ball of radius ``sqrt(s - t)/2`` about ``y`` at every snapshot within
    ``(s - t)/4`` of ``s``.
    """
    snaps = list(snapshots)
    times = np.array([sn.t for sn in snaps])
    measures = [energy_measure(sn) for sn in snaps]
    grid = snaps[0].grid
    out: list[ProbeResult] = []
    n_probes = 0
    for y in probes:
        d = grid.distance_from(y)
        for s in s_values:
            n_probes += 1
            k = MonotonicityKernel(y, s, R0, grid)
            for i in np.flatnonzero((times < s) & (s - times < kappa1)):
                G = monotonicity_G(measures[i], k, times[i])
                if G >= kappa2:
                    continue
                tau = s - times[i]
                near = d <= 0.5 * math.sqrt(tau)
                window = np.flatnonzero(np.abs(times - s) <= 0.25 * tau + 1e-12)
                m = min(float(np.abs(snaps[j].u[near]).min()) for j in window) if window.size else np.nan
                out.append(ProbeResult(int(y), float(s), float(times[i]), G, m, bool(m >= alpha)))
    n_hyp = len({(p.y, p.s) for p in out})
    return ScanReport(out, n_probes, n_hyp)


def forward_density(y: int, t: float, measures: Sequence[DiscreteMeasure], R0: float,
                    window: int = 5) -> float:
    """Finite-window estimate of ``limsup_{s -> t+} int phi_{x,s}(y, t) dmu_s(x)``.

    Returns the max over the ``window`` smallest sample times ``s > t``.
    """
    later = sorted((m for m in measures if m.t > t), key=lambda m: m.t)
    if len(later) < 2:
        raise ValueError("need at least two samples after t")
    best = 0.0
    for mu in later[:window]:
        idx = mu.support
        if idx.size == 0:
            continue
        d2 = mu.grid.distance_from(y)[idx] ** 2
        best = max(best, float(np.dot(heat_kernel(d2, mu.t - t, R0), mu.weights[idx])))
    return best


# --------------------------------------------------------------------------
# CSV helpers
# --------------------------------------------------------------------------
def write_csv(path: str | Path, kind: str, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    """CSV with a ``# acflow-csv/1 <kind>`` schema line before the header."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA} {kind}\n")
        wr = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        wr.writeheader()
        for row in rows:
            wr.writerow({c: _fmt(row.get(c)) for c in columns})


def _fmt(v):
    if isinstance(v, float):
        if v == -math.inf:
            return "NEG_INF"
        return repr(v)
    return v


def read_csv(path: str | Path) -> tuple[str, list[dict[str, str]]]:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith(f"# {CSV_SCHEMA}"):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.DictReader(fh))
    return first[len(f"# {CSV_SCHEMA}"):].strip(), rows
