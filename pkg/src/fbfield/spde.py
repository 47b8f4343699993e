"""Poisson equation on the unit square driven by fractional sheet noise.

The chain implemented here, for a test function phi:

1. ``green_convolve``: psi = G * phi through the Dirichlet eigenbasis
   phi_mn(x, y) = 2 sin(m pi x) sin(n pi y), lambda_mn = pi^2 (m^2+n^2);
   the stored convention is -Lap(psi) = phi.
2. ``noise_integrand``: the functional that pairs psi with the fractional
   sheet.  The grid surrogate of psi's preimage under the double
   indicator-kernel map is the measure with the mixed second differences
   of psi as point masses; pushing it through the Volterra kernels of the
   two Hurst parameters tabulates the white-noise integrand.
3. ``mild_solution_var``: Var<u, phi> equals the squared L2 norm of that
   integrand, contracted exactly through the closed-form fBm Gram
   matrices of the atom grid (no quadrature, no singular tabulation).
4. ``sample_mild_solution``: draws one white-noise grid per path shared
   by all (h1, h2) pairs and pairs it with cell-averaged tensor Volterra
   weights, so cross-pair increments are measurable.
5. ``verify_spde_h_continuity``: E(u - u')^2 via difference-kernel Gram
   matrices, accurate down to h-steps near 1e-8 where the naive
   R + R' - 2C combination would cancel to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnderResolved
from .kernels import as_hurst, cov_fbm, cross_inner_matrix, diff_cross_gram, log_factor
from .quadrature import QuadratureSpec
from .regularity import ScalingFit
from .sampling import SeededStream, cell_averaged_weights


@dataclass(frozen=True)
class SpectralGreen:
    """Dirichlet Green machinery on (0,1)^2 with modes m, n <= cutoff."""

    cutoff: int = 32

    def eigenvalues(self) -> np.ndarray:
        m = np.arange(1, self.cutoff + 1)
        return np.pi ** 2 * (m[:, None] ** 2 + m[None, :] ** 2)

    def sine_basis(self, x: np.ndarray) -> np.ndarray:
        """S[i, m] = sqrt(2) sin(m pi x_i); phi_mn = outer product pairs."""
        m = np.arange(1, self.cutoff + 1)
        return np.sqrt(2.0) * np.sin(np.pi * np.outer(np.asarray(x, float), m))

    def evaluate(self, x, y, coeffs: np.ndarray) -> np.ndarray:
        Sx = self.sine_basis(x)
        Sy = self.sine_basis(y)
        return Sx @ coeffs @ Sy.T


@dataclass(frozen=True)
class TestFunction:
    """Test function on the open unit square.

    Built-ins: ``TestFunction.eigenmode(m, n)`` and
    ``TestFunction.bump(cx, cy, radius)`` (compactly supported, smooth).
    Arbitrary callables or tabulated grids are accepted; the function must
    vanish outside its declared support.
    """

    func: object
    name: str = "custom"
    support: tuple = (0.0, 1.0, 0.0, 1.0)

    def __call__(self, x, y):
        return np.asarray(self.func(np.asarray(x, float), np.asarray(y, float)),
                          dtype=float)

    def on_grid(self, grid_n: int) -> np.ndarray:
        x = np.arange(grid_n + 1) / grid_n
        X, Y = np.meshgrid(x, x, indexing="ij")
        return self(X, Y)

    @staticmethod
    def eigenmode(m: int, n: int) -> "TestFunction":
        def f(x, y):
            return 2.0 * np.sin(m * np.pi * x) * np.sin(n * np.pi * y)
        return TestFunction(f, name=f"eigenmode({m},{n})")

    @staticmethod
    def bump(cx: float = 0.5, cy: float = 0.5, radius: float = 0.3) -> "TestFunction":
        def f(x, y):
            r2 = ((x - cx) ** 2 + (y - cy) ** 2) / radius ** 2
            with np.errstate(divide="ignore", over="ignore"):
                v = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
            return v
        return TestFunction(f, name=f"bump({cx},{cy},{radius})",
                            support=(cx - radius, cx + radius,
                                     cy - radius, cy + radius))

    @staticmethod
    def from_table(values: np.ndarray, name: str = "table") -> "TestFunction":
        vals = np.asarray(values, dtype=float)
        n = vals.shape[0] - 1

        def f(x, y):
            xi = np.clip(np.round(np.asarray(x) * n).astype(int), 0, n)
            yi = np.clip(np.round(np.asarray(y) * n).astype(int), 0, n)
            return vals[xi, yi]
        return TestFunction(f, name=name)


def green_convolve(green: SpectralGreen, phi: TestFunction,
                   grid_n: int) -> np.ndarray:
    """Tabulated psi = G * phi on the (grid_n+1)^2 grid, boundary zeros.

    Spectral route: psi = sum phi_hat_mn / lambda_mn * phi_mn, with the
    coefficients taken by the rectangle rule on interior points (exact for
    band-limited phi).  Requires grid_n >= 2 * cutoff to resolve all
    retained modes.
    """
    if grid_n < 2 * green.cutoff:
        raise UnderResolved(
            f"grid {grid_n} cannot resolve {green.cutoff} modes; need >= {2 * green.cutoff}")
    x = np.arange(grid_n + 1) / grid_n
    S = green.sine_basis(x)
    vals = phi.on_grid(grid_n)
    coeffs = (S[1:-1].T @ vals[1:-1, 1:-1] @ S[1:-1]) / grid_n ** 2
    psi = S @ (coeffs / green.eigenvalues()) @ S.T
    psi[0, :] = psi[-1, :] = 0.0
    psi[:, 0] = psi[:, -1] = 0.0
    return psi


def mixed_second_difference(psi: np.ndarray) -> np.ndarray:
    """Point masses of the grid measure whose corner sums reproduce psi.

    m[i, j] = psi[i,j] - psi[i+1,j] - psi[i,j+1] + psi[i+1,j+1] over the
    interior atoms (s_i, t_j), i, j = 1..n-1; summing m over the quadrant
    {s >= u, t >= v} telescopes back to psi at the smallest atom >= (u,v).
    """
    p = np.asarray(psi, dtype=float)
    return p[1:-1, 1:-1] - p[2:, 1:-1] - p[1:-1, 2:] + p[2:, 2:]


def noise_integrand(h1, h2, psi: np.ndarray,
                    q: QuadratureSpec | None = None) -> np.ndarray:
    """Tabulated integrand Phi(u, v) at cell midpoints of the psi grid.

    Phi(u, v) = sum_ij m[i, j] K_h1(s_i, u) K_h2(t_j, v); midpoints avoid
    the kernel divergence on the lines u = s_i.  For h1 = h2 = 1/2 the
    indicator kernels telescope and Phi at midpoint (u_k, v_l) equals
    psi at the grid point (s_{k+1}, t_{l+1}) exactly.
    """
    h1v, h2v = as_hurst(h1), as_hurst(h2)
    n = psi.shape[0] - 1
    m = mixed_second_difference(psi)
    src = np.arange(1, n) / n
    mid = (np.arange(n) + 0.5) / n
    K1 = _kernel_table(h1v, src, mid, q)
    K2 = K1 if h2v == h1v else _kernel_table(h2v, src, mid, q)
    return K1.T @ m @ K2


def _kernel_table(h, src, pts, q):
    from .kernels import volterra_kernel_grid
    return volterra_kernel_grid(h, src[:, None], pts[None, :],
                                src[:, None] - pts[None, :], q)


def mild_solution_var(h1, h2, phi: TestFunction, green: SpectralGreen,
                      grid_n: int, q: QuadratureSpec | None = None) -> float:
    """Var<u, phi> = ||Phi||^2_L2, contracted through exact fBm Grams.

    ||Phi||^2 = sum m_ij m_kl R_h1(s_i, s_k) R_h2(t_j, t_l); the
    reproduction identity replaces every kernel integral by cov_fbm, so
    the only discretization left is the psi grid itself.
    """
    h1v, h2v = as_hurst(h1), as_hurst(h2)
    psi = green_convolve(green, phi, grid_n)
    m = mixed_second_difference(psi)
    src = np.arange(1, grid_n) / grid_n
    R1 = cov_fbm(h1v, src[:, None], src[None, :])
    R2 = R1 if h2v == h1v else cov_fbm(h2v, src[:, None], src[None, :])
    return float(np.einsum("ij,ik,jl,kl->", m, R1, R2, m))


def sample_mild_solution(h_pairs, phi: TestFunction, n_paths: int,
                         stream: SeededStream, green: SpectralGreen | None = None,
                         grid_n: int = 128,
                         q: QuadratureSpec | None = None):
    """Monte Carlo of <u, phi> for several (h1, h2) pairs, coupled by one
    white-noise grid per path.

    Returns (samples, discrete_vars): samples has shape
    (n_paths, len(h_pairs)); discrete_vars are the exact variances of the
    discretized functionals (cell-averaged weights), the MC targets.
    """
    green = green or SpectralGreen()
    psi = green_convolve(green, phi, grid_n)
    m = mixed_second_difference(psi)
    src = np.arange(1, grid_n) / grid_n
    pairs = [(as_hurst(a), as_hurst(b)) for a, b in h_pairs]
    weights = {}
    for h in {h for p in pairs for h in p}:
        weights[h] = cell_averaged_weights(h, src, grid_n, q)
    tabs = [weights[a].T @ m @ weights[b] for a, b in pairs]
    cell_area = 1.0 / grid_n ** 2
    rng = stream.generator()
    samples = np.empty((int(n_paths), len(pairs)))
    for p in range(int(n_paths)):
        z = rng.standard_normal((grid_n, grid_n))
        for k, tab in enumerate(tabs):
            samples[p, k] = np.sum(tab * z) * np.sqrt(cell_area)
    disc_vars = np.array([np.sum(tab ** 2) * cell_area for tab in tabs])
    return samples, disc_vars


def verify_spde_h_continuity(phi: TestFunction, base_pair, deltas,
                             green: SpectralGreen | None = None,
                             grid_n: int = 128,
                             q: QuadratureSpec | None = None,
                             move: str = "h1") -> ScalingFit:
    """Scaling of E(u_{(h1,h2)} - u_{(h1',h2')})^2 as one parameter moves.

    The increment is m^T [D1 (x) R2] m with D1 the Gram of the Volterra
    kernel differences, formed inside the quadrature; abscissae are the
    h-steps and the estimates are divided by the squared log factor
    L(delta)^2 before fitting, matching the (delta L(delta))^2 modulus the
    increment is controlled by.  The underlying decay is quadratic, so the
    divided fit approaches 2 from above as deltas shrink; resolving the
    band [1.8, 2.2] needs deltas below ~2**-18.
    """
    green = green or SpectralGreen()
    h1, h2 = (as_hurst(base_pair[0]), as_hurst(base_pair[1]))
    deltas = np.sort(np.asarray(deltas, dtype=float))
    psi = green_convolve(green, phi, grid_n)
    m = mixed_second_difference(psi)
    src = np.arange(1, grid_n) / grid_n
    fixed_h = h2 if move == "h1" else h1
    moving_h = h1 if move == "h1" else h2
    R_fixed = cov_fbm(fixed_h, src[:, None], src[None, :])
    vals = []
    for d in deltas:
        D = diff_cross_gram(moving_h, moving_h + d, src, q)
        if move == "h1":
            vals.append(float(np.einsum("ij,ik,jl,kl->", m, D, R_fixed, m)))
        else:
            vals.append(float(np.einsum("ij,ik,jl,kl->", m, R_fixed, D, m)))
    vals = np.array(vals)
    norm = np.array([log_factor(d) ** 2 for d in deltas])
    return ScalingFit.from_loglog(deltas, vals / norm)
