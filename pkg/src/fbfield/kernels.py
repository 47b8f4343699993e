"""Covariance kernels for fractional Brownian processes with h in (0, 1/2].

Three families of quantities live here:

* closed-form covariances: ``cov_fbm`` on the half-line and ``cov_l2``
  over an L2 index space (the latter depends on the index pair only
  through m(f^2), m(g^2) and m(|f-g|^2));
* the lower-triangular Volterra kernel ``volterra_kernel`` whose
  square-integral reproduces ``cov_fbm`` (K * K^T = R), evaluated in
  closed form through the regularized incomplete beta function;
* L2 inner products of Volterra kernel slices across different Hurst
  parameters (``kernel_cross_inner`` and the batched builders), computed
  by tanh-sinh quadrature aware of the r**(h-1/2)-type endpoint
  singularities.

The kernel normalization c_h is fixed by the calibration identity
``int_0^1 K_h(1, r)^2 dr = 1`` and cached per (h, quadrature spec).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, beta as beta_fn

from .errors import HurstRangeError, QuadratureError, TriangleViolation
from .measure import IndexFunction, dist_sq, norm_sq
from .quadrature import (DEFAULT_QUAD, QuadratureSpec, get_rule,
                         power_substitution_panels)

# Quadrature-backed operations keep h away from 0, where the kernel
# singularity exponent approaches -1 and double precision runs out.
H_QUAD_MIN = 0.01


@dataclass(frozen=True)
class HurstParam:
    """Hurst parameter h in (0, 1/2], with an optional interior guard band.

    When ``eta`` is set, h must satisfy eta <= h <= 1/2 - eta; operations
    that differentiate across h (increment scaling, SPDE continuity)
    require such a guard.
    """

    h: float
    eta: float | None = None

    def __post_init__(self):
        if not (0.0 < self.h <= 0.5):
            raise HurstRangeError(f"h={self.h} outside (0, 1/2]")
        if self.eta is not None:
            if not (0.0 < self.eta < 0.25):
                raise HurstRangeError(f"guard eta={self.eta} outside (0, 1/4)")
            if not (self.eta <= self.h <= 0.5 - self.eta):
                raise HurstRangeError(
                    f"h={self.h} outside guard band [{self.eta}, {0.5 - self.eta}]")

    def __float__(self):
        return self.h


def as_hurst(h, upper: float = 0.5) -> float:
    """Accept a HurstParam or a bare float; validate (0, upper]."""
    v = float(h)
    if not (0.0 < v <= upper):
        raise HurstRangeError(f"h={v} outside (0, {upper}]")
    return v


def log_factor(x: float) -> float:
    """log(1/|x|) clamped below at 1; equals 0 at x = 0.

    Only defined on (-1, 1); the clamp makes the factor continuous except
    at the origin, where it drops to 0.
    """
    x = float(x)
    if abs(x) >= 1.0:
        raise ValueError(f"log_factor requires |x| < 1, got {x}")
    if x == 0.0:
        return 0.0
    return max(math.log(1.0 / abs(x)), 1.0)


def cov_fbm(h, s, t):
    """Fractional Brownian motion covariance (s**2h + t**2h - |s-t|**2h)/2.

    Valid for h in (0, 1]; vectorizes over s, t.
    """
    hv = as_hurst(h, upper=1.0)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("cov_fbm is defined for s, t >= 0")
    out = 0.5 * (s ** (2 * hv) + t ** (2 * hv) - np.abs(s - t) ** (2 * hv))
    return float(out) if out.ndim == 0 else out


def cov_l2(h, nf, ng, dsq):
    """Covariance of the L2-indexed process from the three scalar inputs
    nf = m(f^2), ng = m(g^2), dsq = m(|f-g|^2):  (nf^2h + ng^2h - dsq^2h)/2.
    """
    hv = as_hurst(h)
    nf, ng, dsq = float(nf), float(ng), float(dsq)
    if min(nf, ng, dsq) < 0:
        raise ValueError("nf, ng, dsq must be nonnegative")
    lim = (math.sqrt(nf) + math.sqrt(ng)) ** 2
    if dsq > lim * (1 + 1e-12) + 1e-15:
        raise TriangleViolation(
            f"dsq={dsq} exceeds (sqrt(nf)+sqrt(ng))^2={lim}")
    return 0.5 * (nf ** (2 * hv) + ng ** (2 * hv) - dsq ** (2 * hv))


def cov_l2_pair(h, f: IndexFunction, g: IndexFunction) -> float:
    """Convenience overload of cov_l2 on a pair of index functions."""
    return cov_l2(h, norm_sq(f), norm_sq(g), dist_sq(f, g))


# ---------------------------------------------------------------------------
# Volterra kernel
# ---------------------------------------------------------------------------

def _check_h_quad(h) -> float:
    hv = as_hurst(h)
    if hv < H_QUAD_MIN:
        raise HurstRangeError(
            f"h={hv} below the supported quadrature range [{H_QUAD_MIN}, 0.5]")
    return hv


def _k_unnormalized(h: float, t, s, tms):
    """K_h / c_h for s < t, vectorized; ``tms`` carries t - s exactly.

    The two pieces are the algebraic factor (t (t-s) / s)**(h - 1/2) and
    the singular integral int_s^t u**(h-3/2) (u-s)**(h-1/2) du, which has
    the closed form s**(h-1/2) * B(h+1/2, 1-2h) * I_{1-s/t}(h+1/2, 1-2h)
    with I the regularized incomplete beta function.  Entries with
    tms <= 0 produce garbage and must be masked by the caller.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        alg = (s / (t * tms)) ** (0.5 - h)
        frac = np.clip(tms / t, 0.0, 1.0)
        sing = s ** (h - 0.5) * beta_fn(h + 0.5, 1.0 - 2.0 * h) \
            * betainc(h + 0.5, 1.0 - 2.0 * h, frac)
    return alg + (0.5 - h) * sing


_CH_CACHE: dict[tuple[float, QuadratureSpec], float] = {}


def calibrate_ch(h, q: QuadratureSpec | None = None) -> float:
    """Normalization constant making int_0^1 K_h(1, r)^2 dr equal 1.

    Computed once per (h, spec) by checked tanh-sinh quadrature of the
    unnormalized kernel square and cached; write-once per key, so safe to
    share across threads.
    """
    hv = as_hurst(h)
    if hv == 0.5:
        return 1.0
    _check_h_quad(hv)
    spec = q or DEFAULT_QUAD
    key = (hv, spec)
    c = _CH_CACHE.get(key)
    if c is None:
        rule = get_rule(spec)
        integral = rule.integrate_01(
            lambda xm, xp: _k_unnormalized(hv, 1.0, xm, xp) ** 2, check=True)
        c = _CH_CACHE[key] = 1.0 / math.sqrt(integral)
    return c


def volterra_kernel_grid(h, t, s, tms=None, q: QuadratureSpec | None = None):
    """Vectorized K_h(t, s); zero where s >= t; h = 1/2 is the indicator.

    ``tms`` optionally supplies t - s precomputed without cancellation
    (needed when s approaches t through quadrature nodes).
    """
    hv = as_hurst(h)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if tms is None:
        tms = t - s
    if hv == 0.5:
        return np.where(tms > 0, 1.0, 0.0)
    _check_h_quad(hv)
    c = calibrate_ch(hv, q)
    vals = c * _k_unnormalized(hv, t, s, tms)
    return np.where(tms > 0, vals, 0.0)


def volterra_kernel(h, t: float, s: float, q: QuadratureSpec | None = None,
                    singular: str = "raise") -> float:
    """Scalar Volterra kernel K_h(t, s) on [0,1]^2, h in (0, 1/2].

    Returns 0 for s >= t.  At s = 0 with t > 0 the kernel diverges; the
    ``singular`` switch picks between raising and returning +inf.
    """
    hv = as_hurst(h)
    t, s = float(t), float(s)
    if not (0 <= s <= 1 and 0 <= t <= 1):
        raise ValueError("volterra_kernel is defined on the unit square")
    if s >= t:
        return 0.0
    if s == 0.0:
        if hv == 0.5:
            return 1.0
        if singular == "inf":
            return math.inf
        raise ZeroDivisionError("K_h(t, 0) diverges for h < 1/2")
    return float(volterra_kernel_grid(hv, t, s, q=q))


def volterra_kernel_quad(h, t: float, s: float,
                         q: QuadratureSpec | None = None) -> float:
    """K_h(t, s) with the singular integral done by substitution + panels.

    The power substitution u = s + (t-s) v**(1/(h+1/2)) flattens the
    (u-s)**(h-1/2) endpoint factor; Gauss-Legendre panels handle the rest.
    This route exists as an independent cross-check of the incomplete-beta
    closed form used by ``volterra_kernel``.
    """
    hv = _check_h_quad(h)
    t, s = float(t), float(s)
    if s >= t:
        return 0.0
    spec = q or DEFAULT_QUAD
    u, w = power_substitution_panels(s, t, hv + 0.5, spec.nodes_per_panel)
    integral = np.sum(w * u ** (hv - 1.5) * (u - s) ** (hv - 0.5))
    alg = (t * (t - s) / s) ** (hv - 0.5)
    return calibrate_ch(hv, q) * (alg + (0.5 - hv) * s ** (0.5 - hv) * integral)


# ---------------------------------------------------------------------------
# Cross inner products of kernel slices
# ---------------------------------------------------------------------------

def kernel_cross_inner(h, h2, ti: float, tj: float,
                       q: QuadratureSpec | None = None) -> float:
    """int_0^min(ti,tj) K_h(ti, r) K_h2(tj, r) dr by checked tanh-sinh.

    Symmetric under swapping (h, ti) <-> (h2, tj); for h == h2 the value
    reproduces cov_fbm(h, ti, tj).
    """
    hv, hv2 = as_hurst(h), as_hurst(h2)
    ti, tj = float(ti), float(tj)
    if not (0 < ti <= 1 and 0 < tj <= 1):
        raise ValueError("ti, tj must lie in (0, 1]")
    if hv == 0.5 and hv2 == 0.5:
        return min(ti, tj)
    spec = q or DEFAULT_QUAD
    rule = get_rule(spec)
    m = min(ti, tj)

    def f(xm, xp):
        r = m * xm
        rm = m * xp
        k1 = volterra_kernel_grid(hv, ti, r, (ti - m) + rm, q)
        k2 = volterra_kernel_grid(hv2, tj, r, (tj - m) + rm, q)
        return k1 * k2

    return m * rule.integrate_01(f, check=True)


def kernel_slice_tensor(h, ts: np.ndarray, q: QuadratureSpec | None = None):
    """Kernel evaluations backing batched cross products over one h.

    Returns (A, xm_weights) where A[i, l, :] = K_h(ts[i], ts[l] * xm) over
    the tanh-sinh nodes.  Only entries with ts[l] <= ts[i] are meaningful.
    A diagonal reproduction check against cov_fbm guards the node set.
    """
    hv = as_hurst(h)
    spec = q or DEFAULT_QUAD
    rule = get_rule(spec)
    ts = np.asarray(ts, dtype=float)
    t_i = ts[:, None, None]
    t_l = ts[None, :, None]
    r = t_l * rule.xm[None, None, :]
    rm = t_l * rule.xp[None, None, :]
    tms = (t_i - t_l) + rm
    A = volterra_kernel_grid(hv, t_i, r, tms, q)
    # diagonal identity: ts[i] * sum_q w A[i,i,q]^2 == R_h(t_i, t_i)
    idx = np.arange(len(ts))
    diag = ts * np.einsum("q,iq->i", rule.w, A[idx, idx, :] ** 2)
    target = ts ** (2 * hv)
    err = np.max(np.abs(diag - target) / np.maximum(target, 1e-30))
    if err > 1000 * spec.tol:
        raise QuadratureError(
            f"kernel tensor failed the diagonal reproduction check at "
            f"h={hv}: scaled error {err:.3e}")
    return A


def cross_inner_matrix(h, h2, ts: np.ndarray,
                       q: QuadratureSpec | None = None,
                       tensors: tuple | None = None) -> np.ndarray:
    """Matrix C[i, j] = int K_h(ts[i], r) K_h2(ts[j], r) dr for one list ts.

    ``tensors`` may carry precomputed (kernel_slice_tensor(h), ...(h2)) to
    amortize evaluations across many (h, h2) pairs.
    """
    hv, hv2 = as_hurst(h), as_hurst(h2)
    spec = q or DEFAULT_QUAD
    rule = get_rule(spec)
    ts = np.asarray(ts, dtype=float)
    if tensors is not None:
        A1, A2 = tensors
    else:
        A1 = kernel_slice_tensor(hv, ts, q)
        A2 = A1 if hv2 == hv else kernel_slice_tensor(hv2, ts, q)
    idx = np.arange(len(ts))
    d1 = A1[idx, idx, :]
    d2 = A2[idx, idx, :]
    # for ts[j] <= ts[i] the integration range is [0, ts[j]]
    lower = np.einsum("q,ijq,jq->ij", rule.w, A1, d2) * ts[None, :]
    upper = np.einsum("q,iq,jiq->ij", rule.w, d1, A2) * ts[:, None]
    return np.where(ts[:, None] >= ts[None, :], lower, upper)


def diff_cross_gram(h, hp, ts: np.ndarray,
                    q: QuadratureSpec | None = None) -> np.ndarray:
    """Gram matrix of the kernel differences K_h - K_hp over ts.

    D[i, j] = int (K_h - K_hp)(ts[i], r) (K_h - K_hp)(ts[j], r) dr.
    Forming the difference inside the quadrature keeps the result accurate
    when |h - hp| is tiny, where R_h + R_hp - 2 C(h, hp) would cancel to
    roundoff.
    """
    hv, hvp = as_hurst(h), as_hurst(hp)
    spec = q or DEFAULT_QUAD
    rule = get_rule(spec)
    ts = np.asarray(ts, dtype=float)
    t_i = ts[:, None, None]
    t_l = ts[None, :, None]
    r = t_l * rule.xm[None, None, :]
    rm = t_l * rule.xp[None, None, :]
    tms = (t_i - t_l) + rm
    dA = volterra_kernel_grid(hv, t_i, r, tms, q) \
        - volterra_kernel_grid(hvp, t_i, r, tms, q)
    idx = np.arange(len(ts))
    dd = dA[idx, idx, :]
    lower = np.einsum("q,ijq,jq->ij", rule.w, dA, dd) * ts[None, :]
    upper = np.einsum("q,iq,jiq->ij", rule.w, dd, dA) * ts[:, None]
    return np.where(ts[:, None] >= ts[None, :], lower, upper)


def cross_inner_pairs(h_i, t_i, h_j, t_j, q: QuadratureSpec | None = None,
                      chunk: int = 262144) -> np.ndarray:
    """Elementwise int K_{h_i[k]}(t_i[k], r) K_{h_j[k]}(t_j[k], r) dr.

    Drives covariance assembly when the Hurst parameter varies per point
    (multifractional sampling); chunked to bound peak memory.
    """
    spec = q or DEFAULT_QUAD
    rule = get_rule(spec)
    h_i = np.asarray(h_i, dtype=float)
    h_j = np.asarray(h_j, dtype=float)
    t_i = np.asarray(t_i, dtype=float)
    t_j = np.asarray(t_j, dtype=float)
    out = np.empty(len(t_i))
    rows = max(1, chunk // len(rule.xm))
    for lo in range(0, len(t_i), rows):
        hi = min(lo + rows, len(t_i))
        ti = t_i[lo:hi, None]
        tj = t_j[lo:hi, None]
        m = np.minimum(ti, tj)
        r = m * rule.xm[None, :]
        rm = m * rule.xp[None, :]
        k1 = volterra_kernel_grid_h(h_i[lo:hi, None], ti, r, (ti - m) + rm, q)
        k2 = volterra_kernel_grid_h(h_j[lo:hi, None], tj, r, (tj - m) + rm, q)
        out[lo:hi] = np.einsum("q,kq,kq->k", rule.w, k1, k2) * m[:, 0]
    return out


def volterra_kernel_grid_h(h_arr, t, s, tms, q: QuadratureSpec | None = None):
    """K_h with h varying across entries (broadcast against t, s)."""
    h_arr = np.asarray(h_arr, dtype=float)
    if np.any((h_arr <= 0) | (h_arr > 0.5)):
        raise HurstRangeError("entries of h must lie in (0, 1/2]")
    if np.any((h_arr < H_QUAD_MIN) & (h_arr != 0.5)):
        raise HurstRangeError(f"entries of h must be >= {H_QUAD_MIN}")
    cs = np.empty_like(h_arr)
    for hh in np.unique(h_arr):
        cs[h_arr == hh] = calibrate_ch(hh, q)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = cs * _k_unnormalized(h_arr, t, s, tms)
        vals = np.where(h_arr == 0.5, 1.0, vals)
    return np.where(tms > 0, vals, 0.0)
