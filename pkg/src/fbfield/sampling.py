"""Exact Gaussian sampling of the field and its derived processes.

Two sampling routes coexist:

* dense-factorization sampling from an assembled covariance matrix
  (``simulate_field``), the default for arbitrary (h, f) batches; and
* causal path simulation from a shared white noise through cell-averaged
  Volterra kernel weights (``simulate_fbm_volterra``/``simulate_fbf_1d``),
  which couples different Hurst parameters pathwise.

Both routes agree in law but not pathwise.  Randomness comes exclusively
from counter-based Philox streams keyed by (seed, stream_id): identical
keys give bit-identical output for a fixed numpy generation algorithm, and
distinct stream ids give independent substreams.

Cell averaging of the Volterra weights matters: the kernel blows up at the
diagonal, and midpoint weights would systematically lose variance there.
The per-cell averages are computed by the same singularity-aware
quadratures as everything else, so the discrete path variance converges to
t**2h at first order in the cell width.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSD, RangeViolation
from .gram import FieldModel, assemble_cov_matrix, field_cov
from .kernels import as_hurst, volterra_kernel_grid
from .measure import IndexFunction, as_rect, indicator_of_rect
from .quadrature import DEFAULT_QUAD, QuadratureSpec, gauss_legendre_01, get_rule


@dataclass(frozen=True)
class SeededStream:
    """Counter-based RNG coordinates: (seed, stream_id) -> Philox key.

    Identical coordinates reproduce the exact draw sequence on any
    platform; distinct stream ids are independent substreams of the same
    seed (used to parallelize paths).
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, k: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id + k)


@dataclass(frozen=True)
class RegularityFunction:
    """Hurst function t -> h(t) with a declared guard band.

    The evaluator must stay inside [eta, 1/2 - eta]; violations raise at
    sampling time.  ``holder_exponent`` documents the smoothness budget
    the mBm admissibility condition asks for (function smoother than the
    regularity it prescribes); it is declared, not verified.
    """

    func: object
    eta: float = 0.05
    holder_exponent: float = 1.0
    label: str = ""

    def __call__(self, t):
        coords = np.asarray(t, dtype=float)
        val = np.asarray(self.func(coords), dtype=float)
        lo, hi = self.eta, 0.5 - self.eta
        if np.any(val < lo - 1e-12) or np.any(val > hi + 1e-12):
            raise RangeViolation(
                f"regularity function leaves [{lo}, {hi}]")
        return val


@dataclass(frozen=True)
class FieldSample:
    """Realized Gaussian values at a list of field points.

    values has shape (n_samples, n_points); provenance carries the model
    fingerprint, the stream and any jitter applied during factorization.
    locations optionally stores grid coordinates for path-type samples.
    """

    points: tuple
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    locations: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]


def factor_psd(sigma: np.ndarray,
               jitter_start_scale: float = 1e-12,
               jitter_max_scale: float = 1e-6):
    """Lower-triangular factor of a PSD matrix with an escalating jitter.

    Jitter starts at 1e-12 * trace/n, grows by x10 up to 1e-6 * trace/n;
    the applied value is returned and must be surfaced in provenance.
    Raises NotPSD when the ladder is exhausted.
    """
    S = np.asarray(sigma, dtype=float)
    n = S.shape[0]
    if S.shape != (n, n) or np.max(np.abs(S - S.T)) > 1e-10 * max(1.0, np.max(np.abs(S))):
        raise ValueError("sigma must be square symmetric")
    if not np.any(S):
        return np.zeros_like(S), 0.0
    base = float(np.trace(S)) / n
    if base < 0:
        raise NotPSD("negative trace")
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(S + jitter * np.eye(n))
            return L, jitter
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = jitter_start_scale * base
            else:
                jitter *= 10.0
            if jitter > jitter_max_scale * base * (1 + 1e-9):
                raise NotPSD(
                    f"not PSD within the jitter budget ({jitter_max_scale} * trace/n)")


def sample_gaussian(factor: np.ndarray, n: int, stream: SeededStream) -> np.ndarray:
    """n i.i.d. draws of N(0, L L^T); rows are samples."""
    L = np.asarray(factor, dtype=float)
    rng = stream.generator()
    z = rng.standard_normal((int(n), L.shape[0]))
    return z @ L.T


# ---------------------------------------------------------------------------
# Volterra path simulation
# ---------------------------------------------------------------------------

_GL_CELL = gauss_legendre_01(8)


def cell_averaged_weights(h, t_out, n_cells: int,
                          q: QuadratureSpec | None = None) -> np.ndarray:
    """W[i, j] = (1/d) * int over cell j of K_h(t_out[i], s) ds.

    Interior cells use fixed Gauss-Legendre; the first cell (s -> 0
    singularity) and the cell containing t (diagonal singularity) use the
    tanh-sinh rule.  Cells at or above t get weight 0.
    """
    hv = as_hurst(h)
    rule = get_rule(q or DEFAULT_QUAD)
    t_out = np.asarray(t_out, dtype=float)
    d = 1.0 / n_cells
    glx, glw = _GL_CELL
    edges = np.arange(n_cells) * d
    W = np.zeros((len(t_out), n_cells))
    # bulk cells, chunked over outputs to bound peak memory
    rows = max(1, (1 << 22) // (n_cells * len(glx)))
    for lo in range(0, len(t_out), rows):
        hi = min(lo + rows, len(t_out))
        s = edges[None, :, None] + d * glx[None, None, :]
        t = t_out[lo:hi, None, None]
        vals = volterra_kernel_grid(hv, t, s, t - s, q)
        W[lo:hi, :] = np.einsum("ijq,q->ij", vals, glw)
    for i, t_i in enumerate(t_out):
        jt = min(int(np.floor(t_i / d - 1e-12)), n_cells - 1)
        if jt > 0:
            # first cell, singular at s=0
            r = d * rule.xm
            W[i, 0] = np.sum(rule.w * volterra_kernel_grid(hv, t_i, r, t_i - r, q))
        # cell containing t, singular at s=t
        a = edges[jt]
        width = t_i - a
        if width > 0:
            r = a + width * rule.xm
            W[i, jt] = np.sum(
                rule.w * volterra_kernel_grid(hv, t_i, r, width * rule.xp, q)
            ) * width / d
        W[i, jt + 1:] = 0.0
    return W


def simulate_fbf_1d(h_list, grid, n_paths: int, stream: SeededStream,
                    n_cells: int = 1024,
                    q: QuadratureSpec | None = None) -> FieldSample:
    """Coupled fBm paths for several Hurst parameters under one noise.

    Returns values of shape (n_paths, len(h_list) * len(grid)), with the
    point order (h_0, t_0), (h_0, t_1), ..., (h_1, t_0), ...; `values_3d`
    in the provenance records the tensor layout.  Every h slice is an fBm
    path sample; differences across h are measurable because the white
    noise increments are shared.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid > 1) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing inside (0, 1]")
    hs = [as_hurst(h) for h in h_list]
    weights = {h: cell_averaged_weights(h, grid, n_cells, q) for h in set(hs)}
    rng = stream.generator()
    dw = rng.standard_normal((int(n_paths), n_cells)) / np.sqrt(n_cells)
    blocks = [dw @ weights[h].T for h in hs]
    values = np.concatenate(blocks, axis=1)
    points = tuple((h, float(t)) for h in hs for t in grid)
    prov = {
        "sampler": "volterra-shared-noise",
        "n_cells": n_cells,
        "seed": stream.seed,
        "stream_id": stream.stream_id,
        "shape3d": (int(n_paths), len(hs), len(grid)),
        "numpy": np.__version__,
    }
    locs = np.tile(grid, len(hs))
    return FieldSample(points, values, prov, locations=locs)


def simulate_fbm_volterra(h, grid, n_paths: int, stream: SeededStream,
                          n_cells: int = 1024,
                          q: QuadratureSpec | None = None) -> FieldSample:
    """Single-h fBm paths; the h_list of length one of simulate_fbf_1d."""
    return simulate_fbf_1d([h], grid, n_paths, stream, n_cells, q)


def simulate_fbm_exact(h, grid, n_paths: int, stream: SeededStream) -> FieldSample:
    """fBm paths sampled exactly from the dense covariance factorization."""
    from .kernels import cov_fbm
    grid = np.asarray(grid, dtype=float)
    sigma = cov_fbm(h, grid[:, None], grid[None, :])
    L, jitter = factor_psd(sigma)
    values = sample_gaussian(L, n_paths, stream)
    prov = {"sampler": "fbm-exact", "jitter": jitter, "seed": stream.seed,
            "stream_id": stream.stream_id, "numpy": np.__version__}
    return FieldSample(tuple((as_hurst(h), float(t)) for t in grid),
                       values, prov, locations=grid.copy())


# ---------------------------------------------------------------------------
# Field and multifractional sampling
# ---------------------------------------------------------------------------

def simulate_field(points, model: FieldModel, n_paths: int,
                   stream: SeededStream) -> FieldSample:
    """Exact Gaussian sample of the truncated field at (h, f) points."""
    pts = list(points)
    sigma = assemble_cov_matrix(pts, model)
    L, jitter = factor_psd(sigma)
    values = sample_gaussian(L, n_paths, stream)
    prov = {
        "sampler": "field-exact",
        "model": model.fingerprint(),
        "jitter": jitter,
        "seed": stream.seed,
        "stream_id": stream.stream_id,
        "numpy": np.__version__,
    }
    labels = tuple((as_hurst(h), getattr(f, "label", "")) for h, f in pts)
    return FieldSample(labels, values, prov)


def simulate_mbm_field(hfun: RegularityFunction, grid, model: FieldModel,
                       n_paths: int, stream: SeededStream) -> FieldSample:
    """Multifractional field B_{h(t), 1_[0,t]} over rectangle corners."""
    corners = [as_rect(t) for t in grid]
    coords = np.array([c.coords for c in corners])
    hs = hfun(coords if coords.shape[1] > 1 else coords[:, 0])
    pts = [(float(hv), indicator_of_rect(model.space, c))
           for hv, c in zip(np.atleast_1d(hs), corners)]
    out = simulate_field(pts, model, n_paths, stream)
    locs = coords[:, 0] if coords.shape[1] == 1 else coords
    return FieldSample(out.points, out.values, out.provenance, locations=locs)


def mbm_cov_1d(ts, hs, q: QuadratureSpec | None = None) -> np.ndarray:
    """Exact covariance of the 1-D multifractional field on Lebesgue [0,1].

    For index functions 1_[0,t] the field covariance collapses to the
    cross inner product of Volterra slices,
    cov(B_{h_s, s}, B_{h_t, t}) = int K_{h_s}(s, r) K_{h_t}(t, r) dr,
    with no truncation error; assembled pairwise by quadrature.
    """
    from .kernels import cross_inner_pairs
    ts = np.asarray(ts, dtype=float)
    hs = np.asarray(hs, dtype=float)
    n = len(ts)
    iu, ju = np.triu_indices(n)
    vals = cross_inner_pairs(hs[iu], ts[iu], hs[ju], ts[ju], q)
    S = np.zeros((n, n))
    S[iu, ju] = vals
    S[ju, iu] = vals
    return S


def simulate_mbm_1d(hfun: RegularityFunction, grid, n_paths: int,
                    stream: SeededStream,
                    q: QuadratureSpec | None = None) -> FieldSample:
    """Exact 1-D multifractional paths from the pairwise covariance.

    Equal in law to simulate_mbm_field on a d=1 Lebesgue model whenever
    the grid points are dyadic, but without basis truncation; intended for
    dense path grids feeding the exponent estimators.
    """
    grid = np.asarray(grid, dtype=float)
    hs = hfun(grid)
    sigma = mbm_cov_1d(grid, hs, q)
    L, jitter = factor_psd(sigma)
    values = sample_gaussian(L, n_paths, stream)
    prov = {"sampler": "mbm-1d-exact", "jitter": jitter, "seed": stream.seed,
            "stream_id": stream.stream_id, "numpy": np.__version__}
    points = tuple((float(h), float(t)) for h, t in zip(hs, grid))
    return FieldSample(points, values, prov, locations=grid.copy())
