"""Cross-(h, f) covariance of the L2-indexed fractional Brownian field.

The field couples, for every Hurst parameter h, the covariance kernel
cov_l2 over an L2 index space with the fBm covariance cov_fbm over [0, 1]
through a pair of orthonormalized function families:

* dyadic points t_n in (0, 1] spanning the fBm side,
* a linearly independent family f_n of index functions spanning the L2
  side (dyadic-rectangle indicators by default).

Orthonormalization is realized as Cholesky factorization of the two Gram
matrices.  Writing a(h, f) for the coordinates of the kernel element of f
in the orthonormalized index basis, the field covariance is

    cov(B_{h,f}, B_{h',g}) = a(h, f)^T  M(h, h')  a(h', g),

where M(h, h') is the matrix of L2 inner products between the two
orthonormalized Volterra-slice families; M(h, h) is the identity, and the
entries of M come from the singular-integral quadratures in `kernels`.

Everything is truncated at a finite basis size N; `truncation_error`
returns a computable upper bound on the discarded tail mass for any index
function, so covariances never have to be trusted blindly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import CannotReachRank, NotPSD
from .kernels import (as_hurst, cov_fbm, cov_l2_pair, cross_inner_matrix,
                      kernel_slice_tensor)
from .measure import (IndexFunction, MeasureSpace, dist_sq, indicator_of_rect,
                      norm_sq)
from .quadrature import DEFAULT_QUAD, QuadratureSpec

DROP_TOL = 1e-10


@dataclass(frozen=True)
class CholeskyBasis:
    """Lower-triangular factor of a Gram matrix with near-dependence drops.

    gram: the (n, n) input Gram matrix.
    factor: (r, r) lower-triangular L over the retained indices with
        L L^T equal to the retained submatrix.
    retained: indices kept, in original order.
    dropped: indices removed because their pivot fell under the drop
        tolerance (exact or near linear dependence).
    """

    gram: np.ndarray
    factor: np.ndarray
    retained: tuple
    dropped: tuple

    @property
    def size(self) -> int:
        return len(self.retained)

    def coords(self, gram_column: np.ndarray) -> np.ndarray:
        """Coordinates of a vector v in the orthonormal basis.

        ``gram_column`` holds the inner products of v against the original
        (retained) family; the coordinates solve L a = column.
        """
        col = np.asarray(gram_column, dtype=float)[list(self.retained)]
        return solve_triangular(self.factor, col, lower=True)


def orthonormalize(gram: np.ndarray, drop_tol: float = DROP_TOL) -> CholeskyBasis:
    """Cholesky factorization with pivot-based near-dependence dropping.

    Columns whose pivot (squared distance to the span of the previous
    columns) falls below drop_tol * trace are dropped; a pivot below
    -drop_tol * trace means the matrix is not PSD and raises.
    """
    G = np.asarray(gram, dtype=float)
    n = G.shape[0]
    if G.shape != (n, n):
        raise ValueError("gram must be square")
    if np.max(np.abs(G - G.T)) > 1e-12 * max(np.max(np.abs(G)), 1e-300):
        raise ValueError("gram must be symmetric")
    tr = float(np.trace(G))
    if tr < 0 or np.any(np.diag(G) < -drop_tol * max(tr, 1.0)):
        raise NotPSD("negative diagonal entry")
    scale = max(tr, 1e-300)
    L = np.zeros((n, n))
    retained: list[int] = []
    dropped: list[int] = []
    for j in range(n):
        r = len(retained)
        row = np.zeros(r)
        if r:
            row = solve_triangular(L[:r, :r], G[retained, j], lower=True)
        pivot_sq = G[j, j] - row @ row
        if pivot_sq < -drop_tol * scale:
            raise NotPSD(f"pivot {pivot_sq} at index {j} below -tol*trace")
        if pivot_sq <= drop_tol * scale:
            dropped.append(j)
            continue
        L[r, :r] = row
        L[r, r] = np.sqrt(pivot_sq)
        retained.append(j)
    r = len(retained)
    return CholeskyBasis(G, L[:r, :r], tuple(retained), tuple(dropped))


def dyadic_points(n: int) -> np.ndarray:
    """First n dyadics of (0, 1] in breadth-first order: 1, 1/2, 1/4, 3/4, ...

    Zero is excluded: the fBm kernel slice at 0 vanishes identically and
    would break linear independence.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    pts = [1.0]
    level = 1
    while len(pts) < n:
        q = 2 ** level
        pts.extend(i / q for i in range(1, q, 2))
        level += 1
    return np.array(pts[:n])


def dyadic_corners(n: int, dim: int):
    """First n corners of the dyadic grid of (0,1]^dim, breadth-first.

    Corners are tuples of per-axis dyadics ordered by the maximum of their
    per-axis enumeration indices, then lexicographically, so refinement is
    balanced across axes.
    """
    if dim == 1:
        return [(float(v),) for v in dyadic_points(n)]
    k = 1
    while k ** dim < n:
        k += 1
    seq = dyadic_points(k)
    idx = sorted(np.ndindex(*([k] * dim)), key=lambda p: (max(p), p))
    return [tuple(float(seq[i]) for i in p) for p in idx[:n]]


def default_basis(space: MeasureSpace, n: int,
                  drop_tol: float = DROP_TOL) -> list[IndexFunction]:
    """Indicators of dyadic rectangles, filtered to a numerically
    independent family of size n.

    Independence is certified by incremental Cholesky of the plain L2
    Gram (the h = 1/2 kernel); a candidate whose pivot falls under the
    tolerance is skipped and replaced by the next corner in the
    enumeration.
    """
    if n > space.n_atoms:
        raise CannotReachRank(
            f"requested {n} basis functions on {space.n_atoms} atoms")
    dim = space.dim
    budget = 8 * n + 64
    corners = dyadic_corners(budget, dim)
    w = space.weights
    chosen: list[IndexFunction] = []
    vecs: list[np.ndarray] = []
    L = np.zeros((n, n))
    scale = float(space.total_mass)
    for corner in corners:
        if len(chosen) == n:
            break
        f = indicator_of_rect(space, corner)
        r = len(chosen)
        g_col = np.array([np.dot(w, f.values * v) for v in vecs])
        row = solve_triangular(L[:r, :r], g_col, lower=True) if r else g_col
        pivot_sq = float(np.dot(w, f.values ** 2)) - (row @ row if r else 0.0)
        if pivot_sq <= drop_tol * max(scale, 1e-300):
            continue
        L[r, :r] = row
        L[r, r] = np.sqrt(pivot_sq)
        chosen.append(f)
        vecs.append(f.values)
    if len(chosen) < n:
        raise CannotReachRank(
            f"only {len(chosen)} independent dyadic indicators on this grid")
    return chosen


class FieldModel:
    """Assembled covariance machinery of the truncated field.

    Holds the dyadic points, the index basis, per-h Cholesky bases for the
    two Gram families, cached kernel tensors and cross-h matrices.  Caches
    are write-once per key; reads after warm-up are lock-free.
    """

    def __init__(self, space: MeasureSpace, n_basis: int | None = None,
                 quad: QuadratureSpec | None = None,
                 basis: list[IndexFunction] | None = None,
                 eta: float = 0.05):
        self.space = space
        if n_basis is None:
            n_basis = 128 if space.dim == 1 else 64
        self.n_basis = int(n_basis)
        self.quad = quad or DEFAULT_QUAD
        self.eta = float(eta)
        self.dyadics = dyadic_points(self.n_basis)
        self.basis = basis if basis is not None \
            else default_basis(space, self.n_basis)
        if len(self.basis) != self.n_basis:
            raise ValueError("basis size must equal n_basis")
        self._norm_sqs = np.array([norm_sq(f) for f in self.basis])
        self._dist_sqs = np.array(
            [[dist_sq(fi, fj) for fj in self.basis] for fi in self.basis])
        self._chol_R: dict[float, CholeskyBasis] = {}
        self._chol_k: dict[float, CholeskyBasis] = {}
        self._tensor: dict[float, np.ndarray] = {}
        self._cross: dict[tuple[float, float], np.ndarray] = {}

    # -- per-h caches -------------------------------------------------
    def gram_fbm(self, h: float) -> np.ndarray:
        return cov_fbm(h, self.dyadics[:, None], self.dyadics[None, :])

    def gram_index(self, h: float) -> np.ndarray:
        n2h = self._norm_sqs ** (2 * h)
        return 0.5 * (n2h[:, None] + n2h[None, :] - self._dist_sqs ** (2 * h))

    def chol_fbm(self, h) -> CholeskyBasis:
        hv = as_hurst(h)
        if hv not in self._chol_R:
            cb = orthonormalize(self.gram_fbm(hv))
            if cb.dropped:
                raise NotPSD(
                    f"fBm Gram at h={hv} lost rank at N={self.n_basis}")
            self._chol_R[hv] = cb
        return self._chol_R[hv]

    def chol_index(self, h) -> CholeskyBasis:
        hv = as_hurst(h)
        if hv not in self._chol_k:
            cb = orthonormalize(self.gram_index(hv))
            if cb.dropped:
                raise NotPSD(
                    f"index Gram at h={hv} lost rank at N={self.n_basis}")
            self._chol_k[hv] = cb
        return self._chol_k[hv]

    def tensor(self, h) -> np.ndarray:
        hv = as_hurst(h)
        if hv not in self._tensor:
            self._tensor[hv] = kernel_slice_tensor(hv, self.dyadics, self.quad)
        return self._tensor[hv]

    def cross(self, h, h2) -> np.ndarray:
        """Raw cross matrix C(h, h')[i, j] over the dyadic points."""
        hv, hv2 = as_hurst(h), as_hurst(h2)
        if hv == hv2:
            return self.gram_fbm(hv)
        key = (hv, hv2)
        if key not in self._cross:
            if (hv2, hv) in self._cross:
                self._cross[key] = self._cross[(hv2, hv)].T
            else:
                self._cross[key] = cross_inner_matrix(
                    hv, hv2, self.dyadics, self.quad,
                    tensors=(self.tensor(hv), self.tensor(hv2)))
        return self._cross[key]

    # -- manifest ------------------------------------------------------
    def manifest(self) -> dict:
        """Reproducibility manifest: inputs that pin every covariance."""
        return {
            "n_basis": self.n_basis,
            "dim": self.space.dim,
            "n_atoms": self.space.n_atoms,
            "dyadics": [float(t) for t in self.dyadics],
            "basis_labels": [f.label for f in self.basis],
            "basis_norm_sq": [float(v) for v in self._norm_sqs],
            "quad": {"nodes_per_panel": self.quad.nodes_per_panel,
                     "tol": self.quad.tol, "step": self.quad.step},
            "eta": self.eta,
            "drop_tol": DROP_TOL,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def coeff_vector(h, f: IndexFunction, model: FieldModel) -> np.ndarray:
    """Coordinates a(h, f) of the kernel element of f in the orthonormal
    index basis; satisfies sum a_n^2 <= cov_l2(h, f, f) (Bessel), with
    equality exactly when f is one of the basis members.
    """
    hv = as_hurst(h)
    col = np.array([cov_l2_pair(hv, f, fn) for fn in model.basis])
    return model.chol_index(hv).coords(col)


def cross_basis_matrix(h, h2, model: FieldModel) -> np.ndarray:
    """M(h, h') between the two orthonormalized Volterra families.

    M(h, h) is the identity exactly (the quadrature is bypassed through
    the closed-form reproduction identity); all singular values are <= 1
    up to quadrature error.
    """
    hv, hv2 = as_hurst(h), as_hurst(h2)
    if hv == hv2:
        return np.eye(model.chol_fbm(hv).size)
    C = model.cross(hv, hv2)
    L1 = model.chol_fbm(hv).factor
    L2 = model.chol_fbm(hv2).factor
    X = solve_triangular(L1, C, lower=True)
    return solve_triangular(L2, X.T, lower=True).T


def field_cov(h, f: IndexFunction, h2, g: IndexFunction,
              model: FieldModel) -> float:
    """Covariance of the truncated field between (h, f) and (h2, g)."""
    a1 = coeff_vector(h, f, model)
    a2 = coeff_vector(h2, g, model)
    if as_hurst(h) == as_hurst(h2):
        return float(a1 @ a2)
    return float(a1 @ cross_basis_matrix(h, h2, model) @ a2)


def truncation_error(h, f: IndexFunction, model: FieldModel) -> float:
    """Upper bound on cov_l2(h, f, f) - ||a(h, f)||^2, the tail mass lost
    to truncation: min over basis members of dist_sq(f, f_j)**(2h).
    """
    hv = as_hurst(h)
    d = np.array([dist_sq(f, fj) for fj in model.basis])
    return float(np.min(d ** (2 * hv)))


def assemble_cov_matrix(points, model: FieldModel) -> np.ndarray:
    """Covariance matrix over a batch of (h, IndexFunction) points.

    Groups points by h so each coefficient vector and cross matrix is
    built once; the result is symmetric and PSD up to quadrature error.
    """
    points = list(points)
    if not points:
        raise ValueError("empty point list")
    hs = [as_hurst(h) for h, _ in points]
    avecs = [coeff_vector(h, f, model) for (h, f) in points]
    n = len(points)
    sigma = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            if hs[i] == hs[j]:
                sigma[i, j] = avecs[i] @ avecs[j]
            else:
                M = cross_basis_matrix(hs[i], hs[j], model)
                sigma[i, j] = avecs[i] @ M @ avecs[j]
            sigma[j, i] = sigma[i, j]
    return sigma
