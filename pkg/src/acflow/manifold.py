"""Discretized two-dimensional Riemannian manifolds.

Three chart realizations are supported:

* ``flat-torus``: the square torus of side ``L`` with the Euclidean metric;
* ``conformal-torus``: the same chart with metric ``lambda(x)**2 * delta``;
* ``sphere``: the unit sphere on a latitude/longitude grid, with each pole
  collapsed into a single node.

All fields are flat ``numpy`` arrays with one entry per node (vector fields
carry a trailing axis of length 2, tensors a trailing ``(2, 2)``).  Vector
components are contravariant chart components; every metric used here is
diagonal, so the metric is stored as its two diagonal entries per node.

The Laplace-Beltrami operator has the form ``L = W^{-1} K`` with ``W`` the
volume weights and ``K`` symmetric.  On tori ``K`` is the fourth-order
five-point-per-axis stencil by default; the second-order edge form
``edge_stiffness`` is kept alongside because summation by parts holds
exactly for it (see :meth:`ChartGrid.edge_grad_sq`).  The sphere uses the
edge form only.  Pointwise gradients use fourth-order centered differences.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import dijkstra

from .errors import MetricDegenerateError

KINDS = ("flat-torus", "conformal-torus", "sphere")


@dataclass(frozen=True)
class MetricSpec:
    """Description of a chart manifold.

    For the conformal torus the factor is either ``factor`` (a callable
    ``(x, y) -> lambda`` on chart coordinates) or the trigonometric family
    ``1 + amplitude * sin(2 pi m x / L) * sin(2 pi m y / L)``.
    """

    kind: str = "flat-torus"
    side: float = 2.0
    n: int = 128
    amplitude: float = 0.0
    mode: int = 1
    n_theta: int = 128
    n_phi: int | None = None
    #: order of the torus Laplacian (2 or 4); the sphere always uses 2
    order: int = 4
    factor: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "sphere":
            if self.side <= 0:
                raise ValueError("side length must be positive")
            if self.n < 16:
                raise ValueError("grid resolution must be >= 16 per side")
            if self.order not in (2, 4):
                raise ValueError("Laplacian order must be 2 or 4")
        else:
            if self.n_theta < 16:
                raise ValueError("sphere resolution must be >= 16 per side")
            if self.n_phi is not None and (self.n_phi < 16 or self.n_phi % 2):
                raise ValueError("n_phi must be even and >= 16")

    def conformal_factor(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "flat-torus":
            return np.ones(np.broadcast(x, y).shape)
        if self.factor is not None:
            return np.asarray(self.factor(x, y), dtype=float) * np.ones(np.broadcast(x, y).shape)
        k = 2.0 * np.pi * self.mode / self.side
        return 1.0 + self.amplitude * np.sin(k * x) * np.sin(k * y)


def _d4(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered first derivative on a periodic axis."""
    return (
        -np.roll(a, -2, axis) + 8.0 * np.roll(a, -1, axis)
        - 8.0 * np.roll(a, 1, axis) + np.roll(a, 2, axis)
    ) / (12.0 * h)


class ChartGrid:
    """A rectangular chart grid with metric weights and boundary rule.

    Use :meth:`from_spec` to build one.  Attributes of interest:

    ``w``
        volume weight per node (sums to the total area).
    ``metric``
        ``(n_nodes, 2)`` diagonal metric entries ``g_11, g_22``.
    ``coords``
        ``(n_nodes, 2)`` chart coordinates (``x, y`` or ``theta, phi``).
    ``regular``
        boolean mask of nodes where chart vectors are meaningful (all nodes
        on the torus, all but the two poles on the sphere).
    """

    def __init__(self, spec: MetricSpec):
        self.spec = spec
        self.kind = spec.kind
        if self.kind == "sphere":
            self._build_sphere()
        else:
            self._build_torus()
        self.n_nodes = self.w.size
        ii, jj, cc = self._edges
        k = sps.coo_matrix((np.r_[cc, cc], (np.r_[ii, jj], np.r_[jj, ii])), shape=(self.n_nodes,) * 2)
        diag = -np.asarray(k.sum(axis=1)).ravel()
        self.edge_stiffness = (k + sps.diags(diag)).tocsr()
        self.stiffness = self.edge_stiffness
        if self.kind != "sphere" and spec.order == 4:
            self.stiffness = self._stiffness4()
        self._dist_cache: dict[int, np.ndarray] = {}

    @classmethod
    def from_spec(cls, spec: MetricSpec) -> "ChartGrid":
        return cls(spec)

    # ------------------------------------------------------------------ build
    def _build_torus(self):
        spec = self.spec
        n, L = spec.n, spec.side
        self.n = n
        self.L = L
        self.h = L / n
        self.shape = (n, n)
        x = np.arange(n) * self.h
        X, Y = np.meshgrid(x, x, indexing="ij")
        lam = spec.conformal_factor(X, Y)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise MetricDegenerateError("conformal factor must be positive at every node")
        self.lam = lam.ravel()
        self.coords = np.stack([X.ravel(), Y.ravel()], axis=1)
        self.w = self.lam**2 * self.h**2
        self.metric = np.stack([self.lam**2, self.lam**2], axis=1)
        self.regular = np.ones(n * n, dtype=bool)

        idx = np.arange(n * n).reshape(n, n)
        ii = np.r_[idx.ravel(), idx.ravel()]
        jj = np.r_[np.roll(idx, -1, 0).ravel(), np.roll(idx, -1, 1).ravel()]
        # conformal invariance of the 2-D Dirichlet integral: unit conductances
        self._edges = (ii, jj, np.ones(ii.size))

        # derivatives of the diagonal metric entries: dG[:, a, b] = d_b G_a
        loglam = np.log(lam)
        dlog = np.stack([_d4(loglam, 0, self.h).ravel(), _d4(loglam, 1, self.h).ravel()], axis=1)
        G = self.lam**2
        self._dG = np.empty((n * n, 2, 2))
        for a in range(2):
            for b in range(2):
                self._dG[:, a, b] = 2.0 * G * dlog[:, b]

    def _stiffness4(self) -> sps.csr_matrix:
        # 2-D conformal invariance again: the stencil carries no metric factor
        n = self.n
        idx = np.arange(n * n).reshape(n, n)
        rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.full(n * n, -5.0)]
        for axis in (0, 1):
            for shift, c in ((1, 16.0 / 12.0), (-1, 16.0 / 12.0), (2, -1.0 / 12.0), (-2, -1.0 / 12.0)):
                rows.append(idx.ravel())
                cols.append(np.roll(idx, -shift, axis).ravel())
                vals.append(np.full(n * n, c))
        return sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n * n,) * 2).tocsr()

    def _build_sphere(self):
        spec = self.spec
        nt = spec.n_theta
        nphi = spec.n_phi if spec.n_phi is not None else 2 * nt
        self.n_theta, self.n_phi = nt, nphi
        ht, hp = np.pi / nt, 2.0 * np.pi / nphi
        self.h_theta, self.h_phi = ht, hp
        self.h = ht
        self.shape = (nt - 1, nphi)
        theta = np.arange(1, nt) * ht
        phi = np.arange(nphi) * hp
        TH, PH = np.meshgrid(theta, phi, indexing="ij")
        nring = TH.size
        self.north, self.south = nring, nring + 1

        th_all = np.r_[TH.ravel(), 0.0, np.pi]
        ph_all = np.r_[PH.ravel(), 0.0, 0.0]
        self.coords = np.stack([th_all, ph_all], axis=1)
        upper = np.cos(theta - ht / 2) - np.cos(theta + ht / 2)
        wr = np.repeat(upper * hp, nphi)
        wpole = 2.0 * np.pi * (1.0 - np.cos(ht / 2))
        self.w = np.r_[wr, wpole, wpole]
        s = np.sin(th_all)
        self.metric = np.stack([np.ones_like(s), np.where(s > 0, s**2, 1.0)], axis=1)
        self.regular = np.r_[np.ones(nring, dtype=bool), False, False]
        self.lam = np.ones(nring + 2)

        idx = np.arange(nring).reshape(nt - 1, nphi)
        ii, jj, cc = [], [], []
        # theta edges between consecutive rings
        ii.append(idx[:-1].ravel())
        jj.append(idx[1:].ravel())
        cc.append(np.repeat(np.sin(theta[:-1] + ht / 2) * hp / ht, nphi))
        # phi edges within each ring
        ii.append(idx.ravel())
        jj.append(np.roll(idx, -1, 1).ravel())
        cc.append(np.repeat(ht / (np.sin(theta) * hp), nphi))
        # pole edges
        cpole = np.sin(ht / 2) * hp / ht
        ii.append(np.full(nphi, self.north))
        jj.append(idx[0])
        cc.append(np.full(nphi, cpole))
        ii.append(np.full(nphi, self.south))
        jj.append(idx[-1])
        cc.append(np.full(nphi, cpole))
        self._edges = (np.concatenate(ii), np.concatenate(jj), np.concatenate(cc))

        self._dG = np.zeros((nring + 2, 2, 2))
        self._dG[:, 1, 0] = 2.0 * s * np.cos(th_all)
        self._dG[nring:] = 0.0

        self.xyz = np.stack([s * np.cos(ph_all), s * np.sin(ph_all), np.cos(th_all)], axis=1)

    # ------------------------------------------------------------ utilities
    @property
    def total_volume(self) -> float:
        return float(self.w.sum())

    @cached_property
    def spec_hash(self) -> str:
        """Stable digest of the grid geometry (used in checkpoints)."""
        hsh = hashlib.sha256()
        hsh.update(self.kind.encode())
        hsh.update(np.asarray(self.shape, dtype=np.int64).tobytes())
        hsh.update(str(self.spec.order if self.kind != "sphere" else 2).encode())
        hsh.update(np.ascontiguousarray(self.w).tobytes())
        return hsh.hexdigest()[:16]

    def block(self, f: np.ndarray) -> np.ndarray:
        """View of the rectangular block of a field (excludes sphere poles)."""
        nb = self.shape[0] * self.shape[1]
        return f[:nb].reshape(self.shape + f.shape[1:])

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n_nodes)

    def node_at(self, a: float, b: float) -> int:
        """Nearest grid node to chart coordinates ``(a, b)``."""
        if self.kind == "sphere":
            if a <= self.h_theta / 2:
                return self.north
            if a >= np.pi - self.h_theta / 2:
                return self.south
            j = int(round(a / self.h_theta)) - 1
            k = int(round(b / self.h_phi)) % self.n_phi
            return j * self.n_phi + k
        i = int(round(a / self.h)) % self.n
        j = int(round(b / self.h)) % self.n
        return i * self.n + j

    # ------------------------------------------------------- differentiation
    def _partials(self, f: np.ndarray, parity: float = 1.0) -> np.ndarray:
        """Fourth-order chart partial derivatives, shape ``(n_nodes, 2)``.

        ``parity`` is the sign picked up by the quantity under reflection
        through a pole (``+1`` for scalars, ``-1`` for vector components).
        """
        out = np.zeros((self.n_nodes, 2))
        if self.kind != "sphere":
            F = f.reshape(self.shape)
            out[:, 0] = _d4(F, 0, self.h).ravel()
            out[:, 1] = _d4(F, 1, self.h).ravel()
            return out
        B = self.block(f)
        half = self.n_phi // 2
        ext = np.empty((B.shape[0] + 4, B.shape[1]))
        ext[2:-2] = B
        ext[1] = f[self.north]
        ext[0] = parity * np.roll(B[0], -half)
        ext[-2] = f[self.south]
        ext[-1] = parity * np.roll(B[-1], -half)
        if parity < 0:
            ext[1] = 0.0
            ext[-2] = 0.0
        dth = (-ext[4:] + 8.0 * ext[3:-1] - 8.0 * ext[1:-3] + ext[:-4]) / (12.0 * self.h_theta)
        dph = _d4(B, 1, self.h_phi)
        nb = B.size
        out[:nb, 0] = dth.ravel()
        out[:nb, 1] = dph.ravel()
        return out

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Metric gradient (contravariant components); zero at pole nodes."""
        return self._partials(f) / self.metric

    def inner(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return np.sum(self.metric * X * Y, axis=-1)

    def norm(self, X: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(X, X), 0.0))

    def grad_norm_sq(self, f: np.ndarray) -> np.ndarray:
        """``|grad f|^2`` from fourth-order differences (edge form at poles)."""
        d = self._partials(f)
        out = np.sum(d * d / self.metric, axis=1)
        if self.kind == "sphere":
            e = self.edge_grad_sq(f)
            out[~self.regular] = e[~self.regular]
        return out

    def edge_grad_sq(self, f: np.ndarray) -> np.ndarray:
        """Nodal ``|grad f|^2`` built from edge differences.

        Satisfies ``sum(w * edge_grad_sq(f)) == -f @ edge_stiffness @ f`` exactly.
        """
        ii, jj, cc = self._edges
        e = 0.5 * cc * (f[jj] - f[ii]) ** 2
        acc = np.bincount(ii, e, self.n_nodes) + np.bincount(jj, e, self.n_nodes)
        return acc / self.w

    @cached_property
    def christoffel(self) -> np.ndarray:
        """``Gamma[:, a, b, c] = Gamma^a_{bc}`` for the diagonal metric."""
        G = self.metric
        dG = self._dG
        gam = np.zeros((self.n_nodes, 2, 2, 2))
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    v = np.zeros(self.n_nodes)
                    if a == c:
                        v += dG[:, a, b]
                    if a == b:
                        v += dG[:, a, c]
                    if b == c:
                        v -= dG[:, b, a]
                    gam[:, a, b, c] = v / (2.0 * G[:, a])
        gam[~self.regular] = 0.0
        return gam

    def covariant_derivative(self, Y: np.ndarray) -> np.ndarray:
        """``DY[:, a, b] = nabla_a Y^b`` for a vector field ``Y``."""
        D = np.empty((self.n_nodes, 2, 2))
        for b in range(2):
            D[:, :, b] = self._partials(Y[:, b], parity=-1.0)
        D += np.einsum("nbac,nc->nab", self.christoffel, Y)
        return D

    def divergence(self, Y: np.ndarray) -> np.ndarray:
        D = self.covariant_derivative(Y)
        return D[:, 0, 0] + D[:, 1, 1]

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Covariant Hessian ``H[:, a, b]`` (lower indices)."""
        d = self._partials(f)
        H = np.empty((self.n_nodes, 2, 2))
        for a, parity in ((0, -1.0), (1, 1.0)):
            H[:, a, :] = self._partials(d[:, a], parity=parity)
        H = 0.5 * (H + H.transpose(0, 2, 1))
        H -= np.einsum("ncab,nc->nab", self.christoffel, d)
        return H

    def hessian_norm(self, f: np.ndarray) -> np.ndarray:
        """Operator norm of the Hessian in an orthonormal frame."""
        H = self.hessian(f)
        s = np.sqrt(self.metric)
        M = H / (s[:, :, None] * s[:, None, :])
        tr = 0.5 * (M[:, 0, 0] + M[:, 1, 1])
        det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        disc = np.sqrt(np.maximum(tr**2 - det, 0.0))
        out = np.maximum(np.abs(tr + disc), np.abs(tr - disc))
        out[~self.regular] = 0.0
        return out

    # ------------------------------------------------------------- distances
    @cached_property
    def _graph(self) -> sps.csr_matrix:
        n, h = self.n, self.h
        idx = np.arange(n * n).reshape(n, n)
        rows, cols, vals = [], [], []
        for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
            nb = np.roll(np.roll(idx, -di, 0), -dj, 1)
            lam_mid = 0.5 * (self.lam + self.lam[nb.ravel()])
            rows.append(idx.ravel())
            cols.append(nb.ravel())
            vals.append(lam_mid * h * np.hypot(di, dj))
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        return sps.coo_matrix((np.r_[v, v], (np.r_[r, c], np.r_[c, r])), shape=(n * n,) * 2).tocsr()

    def distance_from(self, y: int) -> np.ndarray:
        """Geodesic distance from node ``y`` to every node (cached)."""
        y = int(y)
        d = self._dist_cache.get(y)
        if d is None:
            d = self._compute_distance(y)
            d.setflags(write=False)
            if len(self._dist_cache) > 256:
                self._dist_cache.clear()
            self._dist_cache[y] = d
        return d

    def _compute_distance(self, y: int) -> np.ndarray:
        if self.kind == "flat-torus":
            diff = np.abs(self.coords - self.coords[y])
            diff = np.minimum(diff, self.L - diff)
            return np.hypot(diff[:, 0], diff[:, 1])
        if self.kind == "sphere":
            dots = np.clip(self.xyz @ self.xyz[y], -1.0, 1.0)
            return np.arccos(dots)
        return dijkstra(self._graph, directed=False, indices=y)


def laplace_beltrami(f: np.ndarray, g: ChartGrid) -> np.ndarray:
    """Laplace-Beltrami of a nodal field, ``K f / w``."""
    return (g.stiffness @ f) / g.w


def geodesic_distance(g: ChartGrid, y: int) -> np.ndarray:
    return g.distance_from(y)


def volume_integrate(f: np.ndarray, g: ChartGrid) -> float:
    return float(np.dot(np.broadcast_to(f, g.w.shape), g.w))


def injectivity_radius(spec: MetricSpec, grid: ChartGrid | None = None) -> float:
    """Injectivity radius, or a certified lower bound for conformal tori."""
    if spec.kind == "flat-torus":
        return spec.side / 2.0
    if spec.kind == "sphere":
        return float(np.pi)
    if grid is None:
        grid = ChartGrid(spec)
    return float(grid.lam.min() * spec.side / 2.0)
