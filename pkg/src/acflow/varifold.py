"""Discrete varifolds built from phase fields, first variation, the stress
tensor and the diffuse and limit Brakke functionals.

Vectors are stored by their contravariant chart components, shape
``(n, 2)``; the grid metric is diagonal, so lowering an index is a
multiplication by ``grid.metric``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .manifold import ChartGrid
from .measure import DiscreteMeasure, energy_density
from .phasefield import PhaseField, chemical_potential, dissipation_rhs

NEG_INF = -math.inf
UNTANGENTED_CAP = 1e-2
H2_CAP = 1e6


@dataclass
class DiscreteVarifold:
    """Atoms ``(node, mass, nu)`` with ``nu`` the unit normal ``grad u / |grad u|``.

    ``untangented_mass`` is the energy carried by nodes where the gradient
    is below threshold and no normal is defined.
    """

    nodes: np.ndarray
    mass: np.ndarray
    nu: np.ndarray
    untangented_mass: float
    grid: ChartGrid
    t: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @property
    def untangented_fraction(self) -> float:
        tot = self.total_mass + self.untangented_mass
        return self.untangented_mass / tot if tot > 0 else 0.0

    def __len__(self) -> int:
        return int(self.nodes.size)


@dataclass
class MeanCurvatureField:
    """Per-atom curvature vectors ``H`` (contravariant) with a validity mask."""

    H: np.ndarray
    mask: np.ndarray
    nodes: np.ndarray

    def norm_sq(self, grid: ChartGrid) -> np.ndarray:
        return np.sum(grid.metric[self.nodes] * self.H * self.H, axis=1)


def default_threshold(eps: float) -> float:
    return 1e-6 / eps


def build_varifold(s: PhaseField, grad_threshold: float | None = None) -> DiscreteVarifold:
    g = s.grid
    thr = default_threshold(s.eps) if grad_threshold is None else grad_threshold
    weights = energy_density(s) * g.w
    grad = g.gradient(s.u)
    gnorm = g.norm(grad)
    keep = gnorm > thr
    nodes = np.flatnonzero(keep)
    nu = grad[nodes] / gnorm[nodes, None]
    untangented = float(weights[~keep].sum())
    return DiscreteVarifold(nodes, weights[nodes], nu, untangented, g, s.t)


def first_variation(V: DiscreteVarifold, Y: np.ndarray, DY: np.ndarray | None = None) -> float:
    """``sum mass * (I - nu (x) nu) : DY`` with ``DY[:, a, b] = nabla_a Y^b``."""
    if len(V) == 0:
        return 0.0
    if DY is None:
        DY = V.grid.covariant_derivative(Y)
    D = DY[V.nodes]
    nu_low = V.nu * V.grid.metric[V.nodes]
    div = D[:, 0, 0] + D[:, 1, 1]
    nn = np.einsum("na,nb,nab->n", V.nu, nu_low, D)
    return float(np.dot(V.mass, div - nn))


def stress_tensor(s: PhaseField) -> np.ndarray:
    """Mixed tensor ``T[:, a, b] = e delta^a_b - eps grad^a u d_b u``."""
    g = s.grid
    e = energy_density(s)
    du = g._partials(s.u)
    up = du / g.metric
    T = -s.eps * up[:, :, None] * du[:, None, :]
    T[:, 0, 0] += e
    T[:, 1, 1] += e
    return T


def ibp_identity_check(s: PhaseField, Y: np.ndarray) -> dict[str, float]:
    """Both terms of ``int eps w <grad u, Y> dV + int T : DY dV = 0``."""
    g = s.grid
    w = chemical_potential(s)
    a = float(np.dot(s.eps * w * g.inner(g.gradient(s.u), Y), g.w))
    DY = g.covariant_derivative(Y)
    b = float(np.dot(np.einsum("nab,nab->n", stress_tensor(s), DY), g.w))
    return {"velocity_term": a, "stress_term": b, "residual": abs(a + b)}


def first_variation_identity_check(s: PhaseField, Y: np.ndarray,
                                   grad_threshold: float | None = None) -> dict[str, float]:
    """Compare ``delta V(Y)`` with its discrepancy-plus-velocity expression.

    ``rhs = int nu (x) nu : DY dxi - int eps <Y, grad u> w dV``.  The
    returned ``residual`` is ``|lhs - rhs| / (|lhs| + |rhs| + 1)``.
    """
    g = s.grid
    V = build_varifold(s, grad_threshold)
    DY = g.covariant_derivative(Y)
    lhs = first_variation(V, Y, DY)
    n = V.nodes
    xi = (0.5 * s.eps * g.grad_norm_sq(s.u) - s.well.F(s.u) / s.eps) * g.w
    nn = np.einsum("na,nb,nab->n", V.nu, V.nu * g.metric[n], DY[n])
    w = chemical_potential(s)
    vel = s.eps * w * g.inner(Y, g.gradient(s.u)) * g.w
    rhs = float(np.dot(nn, xi[n])) - float(vel.sum())
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0),
            "untangented_mass": V.untangented_mass, **{f"ibp_{k}": v for k, v in ibp_identity_check(s, Y).items()}}


def mean_curvature_estimate(s: PhaseField, V: DiscreteVarifold | None = None) -> MeanCurvatureField:
    """``H = eps w grad u / e`` on the atoms of ``V``.

    Its pairing against ``mu`` reproduces the velocity term of the first
    variation, ``int <Y, H> dmu = int eps w <Y, grad u> dV``.  For a
    shrinking circle ``H`` points inward with ``|H| ~ 1/r``.
    """
    g = s.grid
    if V is None:
        V = build_varifold(s)
    n = V.nodes
    e = energy_density(s)[n]
    w = chemical_potential(s)[n]
    grad = g.gradient(s.u)[n]
    mask = e > 0
    H = np.zeros((n.size, 2))
    H[mask] = (s.eps * w[mask] / e[mask])[:, None] * grad[mask]
    return MeanCurvatureField(H, mask, n)


def brakke_functional_eps(s: PhaseField, phi: np.ndarray) -> float:
    """``-int eps phi w^2 dV + int eps <grad phi, grad u> w dV``.

    Equals ``d/dt mu_t(phi)`` along the flow.
    """
    return dissipation_rhs(s, phi)


def brakke_pairings(V: DiscreteVarifold, H: MeanCurvatureField, phi: np.ndarray) -> dict[str, float]:
    """Terms of the limit functional on the atoms of ``V``.

    ``projected`` pairs ``grad phi`` with the normal part ``<H, nu> nu``;
    ``unprojected`` pairs it with ``H`` itself.
    """
    g = V.grid
    n = V.nodes
    if n.size == 0:
        return {"phiH2": 0.0, "projected": 0.0, "unprojected": 0.0}
    met = g.metric[n]
    h2 = np.sum(met * H.H * H.H, axis=1)
    gp = g.gradient(phi)[n]
    hn = np.sum(met * H.H * V.nu, axis=1)
    proj = hn * np.sum(met * gp * V.nu, axis=1)
    unproj = np.sum(met * gp * H.H, axis=1)
    m = V.mass * H.mask
    return {
        "phiH2": float(np.dot(m, phi[n] * h2)),
        "projected": float(np.dot(m, proj)),
        "unprojected": float(np.dot(m, unproj)),
    }


def brakke_functional_limit(mu: DiscreteMeasure, H: MeanCurvatureField, V: DiscreteVarifold,
                            phi: np.ndarray, untangented_cap: float = UNTANGENTED_CAP,
                            h2_cap: float = H2_CAP) -> float:
    """``int (-phi H^2 + <grad phi, <H, nu> nu>) dmu``, or ``-inf``.

    ``-inf`` is returned when the untangented fraction of ``mu`` exceeds
    ``untangented_cap`` or ``int phi H^2 dmu`` exceeds ``h2_cap``.
    """
    if mu.mass == 0:
        return 0.0
    if V.untangented_mass > untangented_cap * mu.mass:
        return NEG_INF
    p = brakke_pairings(V, H, phi)
    if not np.isfinite(p["phiH2"]) or p["phiH2"] > h2_cap:
        return NEG_INF
    return -p["phiH2"] + p["projected"]


@dataclass
class BrakkeResidual:
    times: np.ndarray
    upper_derivative: np.ndarray
    B: np.ndarray
    residual: np.ndarray
    tolerance: np.ndarray

    @property
    def violations(self) -> np.ndarray:
        return self.residual > self.tolerance

    @property
    def violation_fraction(self) -> float:
        return float(self.violations.mean()) if self.residual.size else 0.0

    @property
    def ok(self) -> bool:
        return self.violation_fraction <= 0.05


def upper_derivative(times: Sequence[float], values: Sequence[float], window: int = 3) -> np.ndarray:
    """Max of the forward difference quotients over the next ``window`` samples.

    Defined for every sample except the last.
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    out = np.full(t.size - 1, -np.inf)
    for k in range(1, window + 1):
        q = (v[k:] - v[:-k]) / (t[k:] - t[:-k])
        out[: q.size] = np.maximum(out[: q.size], q)
    return out


def brakke_residual(times: Sequence[float], mu_phi: Sequence[float], B: Sequence[float],
                    window: int = 3, rel_tol: float = 0.1, abs_tol: float = 1e-3) -> BrakkeResidual:
    """Residual series ``upper d/dt mu_t(phi) - B(mu_t, phi)``.

    A sample counts as a violation when the residual exceeds
    ``rel_tol |B| + abs_tol``.  A ``-inf`` value of ``B`` is always a
    violation unless the upper derivative is also ``-inf``.
    """
    t = np.asarray(times, float)
    if t.size < 4:
        raise ValueError("need at least 4 samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6):
        raise ValueError("time sampling must be uniform")
    Bv = np.asarray(B, float)[:-1]
    D = upper_derivative(t, mu_phi, window)
    with np.errstate(invalid="ignore"):
        res = np.where(np.isneginf(Bv) & np.isneginf(D), 0.0, D - Bv)
    tol = rel_tol * np.where(np.isfinite(Bv), np.abs(Bv), 0.0) + abs_tol
    return BrakkeResidual(t[:-1], D, Bv, res, tol)


def lemma74_bounds_check(s: PhaseField, phi: np.ndarray, V: DiscreteVarifold | None = None
                         ) -> dict[str, dict[str, float]]:
    """Slacks (``rhs - lhs``) of the four Cauchy-Schwarz bounds.

    ``C1 = max |Hess phi|`` (operator norm).  Two bounds use the discrete
    varifold and the limit functional; two use the diffuse quantities.
    Each entry carries a ``scale`` for normalizing the slack.
    """
    g = s.grid
    if V is None:
        V = build_varifold(s)
    H = mean_curvature_estimate(s, V)
    pos = phi > 0
    C1 = float(g.hessian_norm(phi)[pos].max()) if pos.any() else 0.0
    mu_w = energy_density(s) * g.w
    mu_pos = float(mu_w[pos].sum())
    p = brakke_pairings(V, H, phi)
    B = -p["phiH2"] + p["projected"]
    out = {}
    rhs = 0.5 * p["phiH2"] + C1 * mu_pos
    out["varifold_pairing"] = {"lhs": p["projected"], "rhs": rhs}
    out["varifold_H2"] = {"lhs": p["phiH2"], "rhs": -2.0 * B + 2.0 * C1 * mu_pos}
    w = chemical_potential(s)
    gu = g.gradient(s.u)
    cross = float(np.dot(s.eps * g.inner(g.gradient(phi), gu) * w, g.w))
    diss = float(np.dot(s.eps * phi * w * w, g.w))
    dirichlet = float(np.dot(0.5 * s.eps * g.grad_norm_sq(s.u) * pos, g.w))
    out["diffuse_pairing"] = {"lhs": cross, "rhs": 0.5 * diss + 2.0 * C1 * dirichlet}
    out["diffuse_dissipation"] = {"lhs": diss, "rhs": -2.0 * (cross - diss) + 4.0 * C1 * dirichlet}
    for v in out.values():
        v["slack"] = v["rhs"] - v["lhs"]
        v["scale"] = abs(v["lhs"]) + abs(v["rhs"]) + 1e-12
    return out
