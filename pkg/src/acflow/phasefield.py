"""Double-well potentials, initial data and the Allen-Cahn time stepper."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, interpolate
from scipy.sparse import diags
from scipy.sparse.linalg import cg

from .errors import (
    GeometryError,
    QuadratureError,
    ResolutionError,
    SolverBlowUpError,
    StabilityError,
)
from .manifold import ChartGrid, laplace_beltrami

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class DoubleWell:
    """Even double-well potential ``F`` with ``f = F'``.

    ``alpha`` is the threshold beyond which ``F`` is uniformly convex and
    ``k0`` the a-priori bound on ``|u|``.  ``profile`` is an optional closed
    form of the standing wave ``q' = sqrt(2 F(q))``, ``q(0) = 0``.
    """

    F: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    alpha: float = 0.6
    k0: float = 1.0 + 1e-6
    name: str = "custom"
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @classmethod
    def quartic(cls, alpha: float = 0.6, scale: float = 1.0) -> "DoubleWell":
        """``F(s) = scale * (1 - s^2)^2 / 4``."""
        prof = None
        if scale == 1.0:
            prof = lambda z: np.tanh(np.asarray(z) / SQRT2)  # noqa: E731
        return cls(
            F=lambda s: scale * 0.25 * (1.0 - np.asarray(s) ** 2) ** 2,
            f=lambda s: scale * (np.asarray(s) ** 3 - np.asarray(s)),
            fprime=lambda s: scale * (3.0 * np.asarray(s) ** 2 - 1.0),
            alpha=alpha,
            name="quartic" if scale == 1.0 else f"quartic*{scale:g}",
            profile=prof,
        )

    @property
    def max_fprime(self) -> float:
        """``max |f'|`` over ``[-k0, k0]`` (sampled)."""
        s = np.linspace(-self.k0, self.k0, 2001)
        return float(np.abs(self.fprime(s)).max())

    @property
    def max_F2(self) -> float:
        """``max F''`` over ``[-k0, k0]`` (sampled)."""
        s = np.linspace(-self.k0, self.k0, 2001)
        return float(self.fprime(s).max())

    @property
    def lipschitz_F(self) -> float:
        s = np.linspace(-self.k0, self.k0, 2001)
        return float(np.abs(self.f(s)).max())


QUARTIC = DoubleWell.quartic()


@dataclass
class H0Report:
    clauses: dict[str, bool]
    details: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.clauses.values())


def check_H0(w: DoubleWell, n_samples: int = 10_000) -> H0Report:
    """Evaluate the double-well hypotheses on a sample grid of ``[-2, 2]``."""
    s = np.linspace(-2.0, 2.0, n_samples)
    F, f = np.asarray(w.F(s), float), np.asarray(w.f(s), float)
    tol = 1e-12
    off = np.abs(np.abs(s) - 1.0) > 1e-6
    pos = (s > 1e-9) & (s < 1.0 - 1e-9)
    out = s > 1.0 + 1e-9
    convex = s >= w.alpha
    clauses = {
        "even": bool(np.allclose(F, w.F(-s), atol=1e-12, rtol=1e-12)),
        "f_roots": bool(np.all(np.abs(w.f(np.array([0.0, 1.0, -1.0]))) <= tol)),
        "f_negative_on_(0,1)": bool(np.all(f[pos] < 0)),
        "f_positive_beyond_1": bool(np.all(f[out] > 0)),
        "fprime_signs": bool(w.fprime(0.0) < 0 and w.fprime(1.0) > 0 and w.fprime(-1.0) > 0),
        "F_zero_at_wells": bool(np.all(np.abs(w.F(np.array([1.0, -1.0]))) <= tol)),
        "F_positive_elsewhere": bool(np.all(F[off] > 0)),
        "alpha_in_(0,1)": bool(0.0 < w.alpha < 1.0),
        "convex_beyond_alpha": bool(np.all(w.fprime(s[convex]) > 0)),
    }
    details = {
        "min_F2_beyond_alpha": float(np.min(w.fprime(s[convex]))) if convex.any() else float("nan"),
        "fprime_0": float(w.fprime(0.0)),
        "fprime_1": float(w.fprime(1.0)),
    }
    return H0Report(clauses, details)


def surface_tension(w: DoubleWell, rtol: float = 1e-10) -> float:
    """``sigma = int_{-1}^{1} sqrt(2 F(s)) ds`` by adaptive quadrature."""
    val, err, info = _quad(lambda s: np.sqrt(max(2.0 * float(w.F(s)), 0.0)), -1.0, 1.0, rtol)
    if val != 0.0 and err > 1e-8 * abs(val):
        raise QuadratureError(f"surface tension quadrature did not converge: {info}")
    return float(val)


def _quad(fn, a, b, rtol):
    val, err, info = integrate.quad(fn, a, b, epsabs=1e-14, epsrel=rtol, limit=200, full_output=True)[:3]
    return val, err, info.get("last", "") if isinstance(info, dict) else info


def standing_wave(w: DoubleWell) -> Callable[[np.ndarray], np.ndarray]:
    """Profile ``q`` with ``q' = sqrt(2 F(q))`` and ``q(0) = 0``."""
    if w.profile is not None:
        return w.profile
    # invert z(q) = int_0^q dr / sqrt(2 F(r)) on a table
    qs = np.tanh(np.linspace(-12.0, 12.0, 4001))
    dz = lambda r: 1.0 / np.sqrt(2.0 * w.F(r))  # noqa: E731
    mid = qs.size // 2
    zs = np.zeros_like(qs)
    for i in range(mid + 1, qs.size):
        zs[i] = zs[i - 1] + integrate.quad(dz, qs[i - 1], qs[i])[0]
    for i in range(mid - 1, -1, -1):
        zs[i] = zs[i + 1] - integrate.quad(dz, qs[i], qs[i + 1])[0]
    table = interpolate.CubicSpline(zs, qs)
    return lambda z: table(np.clip(np.asarray(z, float), zs[0], zs[-1]))


@dataclass
class PhaseField:
    """Snapshot of ``u^eps`` at time ``t`` on a grid."""

    u: np.ndarray
    eps: float
    t: float
    grid: ChartGrid
    well: DoubleWell = QUARTIC

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.grid.n_nodes,):
            raise ValueError("field size does not match node count")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def with_u(self, u: np.ndarray, t: float | None = None) -> "PhaseField":
        return replace(self, u=u, t=self.t if t is None else t)


@dataclass(frozen=True)
class InitialInterface:
    """Boundary of the initial set ``E0``.

    ``kind="circle"`` is a geodesic circle of ``radius`` about ``center``
    (chart coordinates) on a torus; ``kind="cap"`` is the polar cap
    ``theta < theta0`` on the sphere.
    """

    kind: str = "circle"
    center: tuple[float, float] = (1.0, 1.0)
    radius: float = 0.5
    theta0: float = np.pi / 3

    def signed_distance(self, g: ChartGrid) -> np.ndarray:
        """Signed geodesic distance to the interface, positive inside ``E0``."""
        if self.kind == "circle":
            if g.kind == "sphere":
                raise GeometryError("circle interfaces are defined on torus charts")
            if g.kind == "flat-torus":
                diff = np.abs(g.coords - np.asarray(self.center))
                diff = np.minimum(diff, g.L - diff)
                return self.radius - np.hypot(diff[:, 0], diff[:, 1])
            return self.radius - g.distance_from(g.node_at(*self.center))
        if self.kind == "cap":
            if g.kind != "sphere":
                raise GeometryError("cap interfaces are defined on the sphere")
            return self.theta0 - g.coords[:, 0]
        raise ValueError(f"unknown interface kind {self.kind!r}")


def well_prepared_init(
    g: ChartGrid, iface: InitialInterface, eps: float, w: DoubleWell = QUARTIC
) -> PhaseField:
    """``u0 = q(d / eps)`` with ``d`` the signed distance to the interface."""
    if eps < 4.0 * g.h * (1 - 1e-12):
        raise ResolutionError(f"eps={eps:g} < 4h={4 * g.h:g}")
    if iface.kind == "cap" and not (4 * eps <= iface.theta0 <= np.pi - 4 * eps):
        raise GeometryError("cap boundary lies within 4 eps of a pole")
    d = iface.signed_distance(g)
    u = np.asarray(standing_wave(w)(d / eps), dtype=float)
    return PhaseField(u, eps, 0.0, g, w)


def chemical_potential(s: PhaseField) -> np.ndarray:
    """``w = -Lap u + f(u) / eps^2`` (so that ``u_t = -w``)."""
    return -laplace_beltrami(s.u, s.grid) + s.well.f(s.u) / s.eps**2


def discrete_energy(s: PhaseField) -> float:
    """Lyapunov energy of the scheme, ``-u K u / 2 + sum w F(u) / eps^2``."""
    g = s.grid
    dir_ = -0.5 * float(s.u @ (g.stiffness @ s.u))
    return dir_ + float(np.dot(s.well.F(s.u), g.w)) / s.eps**2


def dt_max(eps: float) -> float:
    return 0.5 * eps**2


class AllenCahnStepper:
    """Linearly implicit Allen-Cahn stepper.

    Each step solves

        (1/dt + c) u' - Lap u' + f'(u) u' / eps^2
            = (1/dt + c) u - (f(u) - f'(u) u) / eps^2

    i.e. diffusion and the linearization of ``f`` at the current iterate are
    implicit, with an optional stabilization ``c = stabilization / eps^2``.
    The symmetrized system ``W (1/dt + c + f'(u)/eps^2) - K`` is positive
    definite for ``dt < eps^2`` and is solved by Jacobi-preconditioned
    conjugate gradients.  With the second-order stencil it is also an
    M-matrix, so ``dt <= eps^2 / 2`` keeps ``|u| <= 1`` for the quartic
    well; the fourth-order stencil gives up that guarantee (overshoots are
    of order ``(h/eps)^4``).  The discrete energy decreases for
    ``dt <= eps^2 / 2``.
    """

    def __init__(self, grid: ChartGrid, eps: float, dt: float, well: DoubleWell = QUARTIC,
                 stabilization: float = 0.0, rtol: float = 1e-10):
        if dt <= 0 or dt > dt_max(eps) * (1 + 1e-12):
            raise StabilityError(f"dt={dt:g} exceeds dt_max={dt_max(eps):g}")
        self.grid, self.eps, self.dt, self.well = grid, eps, dt, well
        self.c = stabilization / eps**2
        self.rtol = rtol
        self._K = grid.stiffness
        self._Kdiag = grid.stiffness.diagonal()
        self._last: tuple[float, np.ndarray, np.ndarray] | None = None
        self.iterations = 0

    def __call__(self, s: PhaseField) -> PhaseField:
        g, e2 = self.grid, self.eps**2
        u = s.u
        fp = self.well.fprime(u)
        coef = 1.0 / self.dt + self.c + fp / e2
        rhs = g.w * ((1.0 / self.dt + self.c) * u - (self.well.f(u) - fp * u) / e2)
        mass = g.w * coef
        A = (diags(mass) - self._K).tocsr()
        M = diags(1.0 / (mass - self._Kdiag))
        x0 = u
        if self._last is not None and self._last[0] == s.t and self._last[1] is u:
            x0 = 2.0 * u - self._last[2]
        count = [0]

        def tick(_):
            count[0] += 1

        x, info = cg(A, rhs, x0=x0, rtol=self.rtol, atol=0.0, M=M, maxiter=10_000, callback=tick)
        self.iterations += count[0]
        if info != 0 or not np.all(np.isfinite(x)):
            raise SolverBlowUpError(f"linear solve failed at t={s.t:g} (info={info})", time=s.t)
        out = s.with_u(x, t=s.t + self.dt)
        self._last = (out.t, out.u, u)
        return out


def step(s: PhaseField, dt: float, stabilization: float = 0.0) -> PhaseField:
    """Advance one step; builds a fresh stepper (use :class:`AllenCahnStepper` in loops)."""
    return AllenCahnStepper(s.grid, s.eps, dt, s.well, stabilization)(s)


def gradient_sup(s: PhaseField) -> float:
    return float(np.sqrt(s.grid.grad_norm_sq(s.u).max()))


def dissipation_rhs(s: PhaseField, phi: np.ndarray) -> float:
    """Right side of the weighted energy identity.

    ``d/dt int phi dmu = -int eps phi w^2 dV + int eps <grad phi, grad u> w dV``
    with ``w = -Lap u + f(u)/eps^2``.
    """
    g = s.grid
    w = chemical_potential(s)
    gp = g.gradient(phi)
    gu = g.gradient(s.u)
    dens = -s.eps * phi * w**2 + s.eps * g.inner(gp, gu) * w
    return float(np.dot(dens, g.w))


def dissipation_identity_check(s_before: PhaseField, s_after: PhaseField, phi: np.ndarray,
                               dt: float | None = None) -> float:
    """``|d/dt mu(phi) - RHS|`` with the RHS averaged over the step ends."""
    from .measure import energy_measure

    if s_before.grid is not s_after.grid:
        raise ValueError("phase fields live on different grids")
    if dt is None:
        dt = s_after.t - s_before.t
    lhs = (energy_measure(s_after).integrate(phi) - energy_measure(s_before).integrate(phi)) / dt
    rhs = 0.5 * (dissipation_rhs(s_before, phi) + dissipation_rhs(s_after, phi))
    return abs(lhs - rhs)


# ------------------------------------------------------------------ checkpoints
CHECKPOINT_MAGIC = b"ACFLOWCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, s: PhaseField) -> None:
    """Write a checkpoint.

    Layout (little-endian): 8-byte magic ``ACFLOWCK``; uint32 version;
    uint32 header length ``n``; ``n`` bytes of UTF-8 JSON header with
    ``eps``, ``t``, ``grid_hash``, ``n_nodes`` and ``well``; then
    ``n_nodes`` float64 values of ``u`` in node order (row-major block,
    then poles on the sphere).
    """
    header = json.dumps({
        "eps": float(s.eps).hex(), "t": float(s.t).hex(), "grid_hash": s.grid.spec_hash,
        "n_nodes": int(s.grid.n_nodes), "well": s.well.name,
    }).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(s.u, dtype="<f8").tobytes())


def _read_header(fh, path) -> dict:
    if fh.read(8) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an acflow checkpoint")
    version, n = struct.unpack("<II", fh.read(8))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    return json.loads(fh.read(n))


def read_checkpoint_header(path: str | Path) -> dict:
    """Header of a checkpoint with ``eps`` and ``t`` decoded to floats."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
    return {**header, "eps": float.fromhex(header["eps"]), "t": float.fromhex(header["t"])}


def load_checkpoint(path: str | Path, grid: ChartGrid, well: DoubleWell = QUARTIC) -> PhaseField:
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        u = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    if header["grid_hash"] != grid.spec_hash or u.size != grid.n_nodes:
        raise ValueError(f"{path}: checkpoint was written for a different grid")
    return PhaseField(u, float.fromhex(header["eps"]), float.fromhex(header["t"]), grid, well)
