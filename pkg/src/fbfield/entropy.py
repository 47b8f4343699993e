"""Metric entropy estimates, Dudley-integral verdicts and small-ball MC.

Covering numbers of a finite metric sample are bracketed by the greedy
farthest-first traversal: after the traversal, the number of insertion
radii above eps is simultaneously

* the size of a valid eps-cover (upper bound on the covering number), and
* the size of an eps-separated set (a packing).

The classical sandwich packing(2 eps) <= covering(eps) <= packing(eps)
then holds exactly by construction at every eps.  True covering numbers
are NP-hard; every consumer of these profiles works with the bracket, not
a point value.

Profiles record the sample resolution (the final insertion radius); any
epsilon below it says more about the sample than about the underlying
set, and is flagged untrusted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroHits
from .sampling import SeededStream


@dataclass(frozen=True)
class EntropyProfile:
    """Covering/packing bracket over a decreasing epsilon grid."""

    epsilons: np.ndarray
    cover_upper: np.ndarray
    pack_lower: np.ndarray      # packing at 2 eps: lower bound for covering
    packing: np.ndarray         # packing at eps
    resolution: float           # smallest trusted epsilon (sample mesh)
    metric: str = ""

    def log_entropy(self) -> np.ndarray:
        return np.log(self.cover_upper.astype(float))

    def trusted(self) -> np.ndarray:
        return self.epsilons >= self.resolution


def farthest_first_radii(points, dist) -> np.ndarray:
    """Insertion radii of the farthest-first traversal.

    dist(single_point, points) must return the distance vector.  radii[0]
    is +inf by convention; radii[k] is the distance of the (k+1)-th chosen
    center to the previous centers.  The first k centers cover the sample
    at radius radii[k] and are pairwise at least radii[k] apart.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        raise ValueError("need a nonempty point set")
    mind = dist(pts[0], pts)
    radii = [np.inf]
    for _ in range(1, n):
        k = int(np.argmax(mind))
        r = float(mind[k])
        if r <= 0.0:
            break
        radii.append(r)
        mind = np.minimum(mind, dist(pts[k], pts))
    return np.array(radii)


def _pack_count(radii: np.ndarray, eps: float) -> int:
    """Size of the greedy maximal eps-separated set (and eps-cover)."""
    return int(np.sum(radii > eps))


def covering_number(points, dist, eps: float,
                    radii: np.ndarray | None = None):
    """(upper, lower) bracket of the covering number of the sample at eps."""
    if radii is None:
        radii = farthest_first_radii(points, dist)
    upper = _pack_count(radii, eps)
    lower = max(_pack_count(radii, 2.0 * eps), 1)
    return upper, lower


def entropy_profile(points, dist, epsilons, metric: str = "") -> EntropyProfile:
    """Profile of covering/packing counts over a decreasing epsilon list."""
    eps = np.sort(np.asarray(epsilons, dtype=float))[::-1]
    if np.any(eps <= 0):
        raise ValueError("epsilons must be positive")
    radii = farthest_first_radii(points, dist)
    cover = np.array([_pack_count(radii, e) for e in eps])
    pack2 = np.array([max(_pack_count(radii, 2 * e), 1) for e in eps])
    packing = cover.copy()
    finite = radii[np.isfinite(radii)]
    resolution = float(finite.min()) if len(finite) else 0.0
    return EntropyProfile(eps, cover, pack2, packing, resolution, metric)


def dudley_integral(profile: EntropyProfile, boundary_band: float = 0.05):
    """Trapezoid Dudley integral with a power-law tail verdict.

    Fits log H against log(1/eps) over the small-eps half of the profile;
    the integrand sqrt(H) ~ eps**(-beta/2) is integrable iff beta/2 < 1.
    Returns (value, verdict) with verdict in {"converges", "diverges",
    "indeterminate"}; the value includes the extrapolated tail when it
    converges, else only the resolved part.
    """
    eps = profile.epsilons
    if len(eps) < 4:
        raise ValueError("need at least four epsilon levels")
    H = np.log(np.maximum(profile.cover_upper.astype(float), 1.0))
    g = np.sqrt(H)
    val = float(np.trapezoid(g[::-1], eps[::-1]))
    k = len(eps) // 2
    tail_eps, tail_H = eps[k:], np.maximum(H[k:], 1e-12)
    A = np.vstack([np.log(1.0 / tail_eps), np.ones(len(tail_eps))]).T
    coef, *_ = np.linalg.lstsq(A, np.log(tail_H), rcond=None)
    beta = float(coef[0])
    exponent = beta / 2.0
    if exponent < 1.0 - boundary_band:
        c = float(np.exp(coef[1]))
        e0 = float(eps.min())
        tail = np.sqrt(c) * e0 ** (1.0 - exponent) / (1.0 - exponent) \
            if exponent > 0 else np.sqrt(c) * e0
        return val + tail, "converges"
    if exponent > 1.0 + boundary_band:
        return val, "diverges"
    return val, "indeterminate"


@dataclass(frozen=True)
class ProductEntropyReport:
    ok: bool
    violations: list


def product_entropy_check(n1: EntropyProfile, n2: EntropyProfile,
                          n12: EntropyProfile) -> ProductEntropyReport:
    """Check the product bounds lower(N12) <= up(N1)*up(N2) and
    upper(N12) >= max of the factor lower bounds, levelwise."""
    if not (np.array_equal(n1.epsilons, n2.epsilons)
            and np.array_equal(n1.epsilons, n12.epsilons)):
        raise ValueError("profiles must share the epsilon grid")
    violations = []
    for k, e in enumerate(n12.epsilons):
        ub = n1.cover_upper[k] * n2.cover_upper[k]
        if n12.pack_lower[k] > ub:
            violations.append((float(e), "product-upper",
                               int(n12.pack_lower[k]), int(ub)))
        lb = max(n1.pack_lower[k], n2.pack_lower[k])
        if n12.cover_upper[k] < lb:
            violations.append((float(e), "max-lower",
                               int(n12.cover_upper[k]), int(lb)))
    return ProductEntropyReport(not violations, violations)


@dataclass(frozen=True)
class SmallBallRow:
    eps: float
    p_hat: float
    wilson_low: float
    wilson_high: float
    hits: int
    estimable: bool


@dataclass(frozen=True)
class SmallBallReport:
    rows: list
    n_paths: int
    slope: float | None        # of log(-log p) on log(1/eps), estimable rows
    k_upper: float | None      # fitted k in -log p ~ k * N(eps), if N given

    def estimable_rows(self):
        return [r for r in self.rows if r.estimable]


def _wilson(hits: int, n: int, z: float = 1.96):
    p = hits / n
    den = 1.0 + z ** 2 / n
    center = (p + z ** 2 / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2)) / den
    return max(center - half, 0.0), min(center + half, 1.0)


def small_ball_mc(sup_sampler, eps_list, n_paths: int, stream: SeededStream,
                  entropy_counts=None) -> SmallBallReport:
    """Monte Carlo of P(sup-norm draw <= eps) over an epsilon list.

    ``sup_sampler(n, stream)`` must return n independent draws of the
    supremum statistic.  A level is estimable when its hit count is at
    least 10 and at most n - 10; the slope is fitted on estimable levels
    only.  ``entropy_counts`` (same length as eps_list) activates the
    companion fit of -log p against the covering numbers.
    """
    draws = np.asarray(sup_sampler(int(n_paths), stream), dtype=float)
    n = len(draws)
    rows = []
    for e in np.asarray(eps_list, dtype=float):
        hits = int(np.sum(draws <= e))
        lo, hi = _wilson(hits, n)
        rows.append(SmallBallRow(float(e), hits / n, lo, hi, hits,
                                 10 <= hits <= n - 10))
    est = [r for r in rows if r.estimable]
    if not est:
        raise AllZeroHits("no epsilon level has a usable hit count")
    slope = None
    if len(est) >= 2:
        x = np.log([1.0 / r.eps for r in est])
        y = np.log([-np.log(r.p_hat) for r in est])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[0])
    k_upper = None
    if entropy_counts is not None:
        counts = dict(zip([float(e) for e in eps_list],
                          np.asarray(entropy_counts, dtype=float)))
        num = [-np.log(r.p_hat) / counts[r.eps] for r in est if counts[r.eps] > 0]
        if num:
            k_upper = float(np.median(num))
    return SmallBallReport(rows, n, slope, k_upper)
