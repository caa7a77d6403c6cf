"""Structured collocated grids and adjoint-consistent difference operators.

The spatial discretization is variational: gradient and divergence are
exact discrete adjoints under the cell-volume inner product, so the
discrete Green identities behind the momentum weak form and the energy
ledger hold to round-off.  Second-order centered stencils in the
interior; periodic wrap or summation-by-parts one-sided closures with
boundary-weighted quadrature on slip boxes.

Field layout: a rank-k field is an ndarray of shape grid.shape + extra
trailing axes (components).  Flattening for sparse solves is C-order
over the grid axes, matching the Kronecker construction of the full
operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["Grid", "GridOps"]


@dataclass(frozen=True)
class Grid:
    """Cell-sampled box in d in {2, 3} dimensions.

    bc "periodic": points x_i = i h on a torus of extent n h per axis.
    bc "slip-box": points include both walls, h = L / (n - 1); the
    normal velocity vanishes strongly at walls, higher-order conditions
    are natural in the variational assembly.
    """

    shape: tuple
    extent: tuple
    bc: str = "periodic"

    def __post_init__(self):
        if self.bc not in ("periodic", "slip-box"):
            raise ValueError("unknown boundary mode %r" % self.bc)
        if len(self.shape) not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if len(self.extent) != len(self.shape):
            raise ValueError("extent and shape dimension mismatch")
        if any(n < 4 for n in self.shape):
            raise ValueError("need at least 4 cells per axis")
        if any(l <= 0 for l in self.extent):
            raise ValueError("extent must be positive")

    @property
    def d(self):
        return len(self.shape)

    @property
    def n(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        if self.bc == "periodic":
            return tuple(l / n for l, n in zip(self.extent, self.shape))
        return tuple(l / (n - 1) for l, n in zip(self.extent, self.shape))

    def axis_coords(self, a):
        return self.spacing[a] * np.arange(self.shape[a])

    def coords(self):
        """Point coordinates, shape grid.shape + (d,)."""
        axes = [self.axis_coords(a) for a in range(self.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def wall_mask(self, axis):
        """Boolean mask of the two walls normal to `axis` (empty if periodic)."""
        m = np.zeros(self.shape, dtype=bool)
        if self.bc == "slip-box":
            idx = [slice(None)] * self.d
            idx[axis] = 0
            m[tuple(idx)] = True
            idx[axis] = -1
            m[tuple(idx)] = True
        return m


def _d1_periodic(n, h):
    main = np.zeros(n)
    off = np.full(n - 1, 0.5 / h)
    D = sp.diags([main, off, -off], [0, 1, -1], format="lil")
    D[0, n - 1] = -0.5 / h
    D[n - 1, 0] = 0.5 / h
    return D.tocsr()


def _d1_sbp(n, h):
    off = np.full(n - 1, 0.5 / h)
    D = sp.diags([np.zeros(n), off, -off], [0, 1, -1], format="lil")
    D[0, 0], D[0, 1] = -1.0 / h, 1.0 / h
    D[n - 1, n - 2], D[n - 1, n - 1] = -1.0 / h, 1.0 / h
    return D.tocsr()


def _d1_oneside(n, h, forward, periodic):
    """First-order one-sided difference, used by the upwind transport."""
    if forward:
        D = sp.diags([np.full(n, -1.0 / h), np.full(n - 1, 1.0 / h)], [0, 1], format="lil")
        if periodic:
            D[n - 1, 0] = 1.0 / h
        else:
            D[n - 1, n - 2], D[n - 1, n - 1] = -1.0 / h, 1.0 / h
    else:
        D = sp.diags([np.full(n, 1.0 / h), np.full(n - 1, -1.0 / h)], [0, -1], format="lil")
        if periodic:
            D[0, n - 1] = -1.0 / h
        else:
            D[0, 0], D[0, 1] = -1.0 / h, 1.0 / h
    return D.tocsr()


class GridOps:
    """Discrete differential operators bound to a grid.

    All operators are pure; the instance only caches sparse matrices.
    The member `W` is the quadrature weight (cell volume) per point;
    `adj(axis)` is the exact W-adjoint of `D(axis)`.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        periodic = grid.bc == "periodic"
        self._d1 = []
        self._w1 = []
        self._dp1 = []
        self._dm1 = []
        for a in range(grid.d):
            n, h = grid.shape[a], grid.spacing[a]
            if periodic:
                self._d1.append(_d1_periodic(n, h))
                self._w1.append(np.full(n, h))
            else:
                self._d1.append(_d1_sbp(n, h))
                w = np.full(n, h)
                w[0] = w[-1] = 0.5 * h
                self._w1.append(w)
            self._dp1.append(_d1_oneside(n, h, True, periodic))
            self._dm1.append(_d1_oneside(n, h, False, periodic))
        self._adj1 = [
            sp.diags(1.0 / w) @ D.T @ sp.diags(w) for D, w in zip(self._d1, self._w1)
        ]
        self.W = self._kron_weights()
        self._full_cache = {}

    # -- assembly helpers ---------------------------------------------------

    def _kron_weights(self):
        w = self._w1[0]
        for wa in self._w1[1:]:
            w = np.kron(w, wa)
        return w

    def full_op(self, kind, axis):
        """Full-grid sparse operator acting on flattened scalar fields.

        kind in {"D", "adj", "Dp", "Dm"}.
        """
        key = (kind, axis)
        if key not in self._full_cache:
            table = {"D": self._d1, "adj": self._adj1, "Dp": self._dp1, "Dm": self._dm1}
            mats = [sp.identity(n, format="csr") for n in self.grid.shape]
            mats[axis] = table[kind][axis]
            full = mats[0]
            for m in mats[1:]:
                full = sp.kron(full, m, format="csr")
            self._full_cache[key] = full
        return self._full_cache[key]

    def _apply_axis(self, op1, f, axis):
        f = np.asarray(f, dtype=float)
        moved = np.moveaxis(f, axis, 0)
        flat = moved.reshape(moved.shape[0], -1)
        out = op1 @ flat
        return np.moveaxis(out.reshape(moved.shape), 0, axis)

    def deriv(self, f, axis):
        """Centered derivative along a grid axis (any trailing shape)."""
        return self._apply_axis(self._d1[axis], f, axis)

    def adj_deriv(self, f, axis):
        """Exact W-adjoint of `deriv`: <deriv f, g>_W = <f, adj_deriv g>_W."""
        return self._apply_axis(self._adj1[axis], f, axis)

    # -- differential operators ---------------------------------------------

    def grad(self, f):
        """Gradient of a scalar field, appends an axis of length d."""
        return np.stack([self.deriv(f, a) for a in range(self.grid.d)], axis=-1)

    def grad_vec(self, v):
        """Velocity gradient, out[..., i, j] = d v_i / d x_j."""
        return np.stack([self.grad(v[..., i]) for i in range(self.grid.d)], axis=-2)

    def div(self, g):
        """Adjoint divergence of a vector field (last axis length d).

        Defined as the negative W-adjoint of `grad`, so the discrete
        divergence theorem sum(W div g) = 0 holds exactly and, on slip
        boxes, consistency with d_j g_j holds wherever g.n = 0.
        """
        out = -self.adj_deriv(g[..., 0], 0)
        for a in range(1, self.grid.d):
            out = out - self.adj_deriv(g[..., a], a)
        return out

    def div_tensor(self, s):
        """Row-wise adjoint divergence, out[..., i] = (div s)_i of s[..., i, j]."""
        return np.stack([self.div(s[..., i, :]) for i in range(self.grid.d)], axis=-1)

    def hessian(self, v):
        """Second velocity gradient, out[..., c, i, j] = D_i D_j v_c."""
        d = self.grid.d
        comps = []
        for c in range(d):
            g = self.grad(v[..., c])  # (..., j)
            h = np.stack([self.grad(g[..., j]) for j in range(d)], axis=-1)
            # h[..., i, j] = D_i (D_j v_c)
            comps.append(h)
        return np.stack(comps, axis=-3)

    def hessian_adjoint(self, G):
        """W-adjoint of `hessian`: <hessian v, G>_W = <v, hessian_adjoint G>_W."""
        d = self.grid.d
        out = np.zeros(self.grid.shape + (d,))
        for c in range(d):
            for i in range(d):
                for j in range(d):
                    out[..., c] += self.adj_deriv(self.adj_deriv(G[..., c, i, j], i), j)
        return out

    def hyperstress_apply(self, v, nu, p):
        """Variational residual of the 2nd-grade viscosity.

        Returns r with <r, w>_W = sum_W nu |H(v)|^{p-2} H(v) : H(w) for
        every discrete w; linear (bi-Laplacian-like) for p = 2.  The
        higher-order boundary conditions are natural: nothing is imposed
        beyond the one-sided closures of the difference operators.
        """
        H = self.hessian(v)
        if p == 2.0:
            W = nu * H
        else:
            mag = np.sqrt(np.sum(H * H, axis=(-3, -2, -1)))
            W = nu * (mag ** (p - 2.0))[..., None, None, None] * H
        return self.hessian_adjoint(W)

    def advect(self, f, v, scheme="upwind"):
        """Transport term (v . grad) f for a field with any trailing shape."""
        d = self.grid.d
        extra = f.ndim - d
        out = np.zeros_like(np.asarray(f, dtype=float))
        for a in range(d):
            va = v[..., a].reshape(v.shape[:d] + (1,) * extra)
            if scheme == "central":
                out += va * self.deriv(f, a)
            elif scheme == "upwind":
                fwd = self._apply_axis(self._dp1[a], f, a)
                bwd = self._apply_axis(self._dm1[a], f, a)
                out += np.where(va >= 0.0, va * bwd, va * fwd)
            else:
                raise ValueError("unknown advection scheme %r" % scheme)
        return out

    def advect_matrix(self, v, scheme="upwind"):
        """Sparse matrix of f -> (v . grad) f on flattened scalar fields."""
        d = self.grid.d
        A = None
        for a in range(d):
            va = v[..., a].ravel()
            if scheme == "central":
                term = sp.diags(va) @ self.full_op("D", a)
            elif scheme == "upwind":
                term = sp.diags(np.maximum(va, 0.0)) @ self.full_op("Dm", a) + sp.diags(
                    np.minimum(va, 0.0)
                ) @ self.full_op("Dp", a)
            else:
                raise ValueError("unknown advection scheme %r" % scheme)
            A = term if A is None else A + term
        return A.tocsr()

    # -- reductions ----------------------------------------------------------

    def integrate(self, f):
        """Quadrature sum(W f) over the grid (f scalar field)."""
        return float(np.dot(self.W, np.asarray(f, dtype=float).ravel()))

    def inner(self, f, g):
        """W-weighted inner product of two fields of equal shape."""
        f = np.asarray(f, dtype=float)
        prod = f * np.asarray(g, dtype=float)
        extra = prod.ndim - self.grid.d
        if extra:
            prod = prod.sum(axis=tuple(range(-extra, 0)))
        return self.integrate(prod)

    def norm(self, f):
        return float(np.sqrt(max(self.inner(f, f), 0.0)))
