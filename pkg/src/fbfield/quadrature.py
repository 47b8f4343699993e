"""Quadrature engines for integrands with integrable endpoint singularities.

Two engines are provided:

* a tanh-sinh (double-exponential) rule on (0, 1), which converges at
  double-exponential rate for integrands with algebraic singularities of
  exponent > -1 at either endpoint, and
* fixed-order Gauss-Legendre panels combined with the power substitution
  v -> v**(1/p), which removes a (u - a)**(p-1) singularity at the left
  endpoint.

The tanh-sinh nodes are produced in a split representation (xm, xp) with
xm + xp = 1, where xm is the exact distance of the node to 0 and xp the
exact distance to 1.  Forming nodes as 0.5*(1 + tanh(u)) instead would
round to 0/1 long before the weights become negligible and lose the very
region that dominates a singular integral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import QuadratureError

# Node range is capped so that x**(a) stays inside double range for
# singularity exponents a >= -0.95; beyond t ~ 5.86 the node distance to the
# endpoint drops under 1e-237.
_TMAX = 5.86


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for the singular-integral quadratures.

    nodes_per_panel: Gauss-Legendre order used by the panel engine.
    tol: target relative tolerance; convergence checks compare two
        tanh-sinh refinement levels against it.
    step: tanh-sinh step; the refinement check halves it once.
    """

    nodes_per_panel: int = 64
    tol: float = 1e-8
    step: float = 0.15

    def __post_init__(self):
        if self.nodes_per_panel < 2:
            raise ValueError("nodes_per_panel must be >= 2")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if not (0 < self.step < 1):
            raise ValueError("step must be in (0,1)")


DEFAULT_QUAD = QuadratureSpec()


def tanh_sinh_nodes(step: float = 0.15, tmax: float = _TMAX):
    """Tanh-sinh nodes/weights for integrals over (0, 1).

    Returns (xm, xp, w) with xm + xp = 1; sum(w) integrates 1 exactly up
    to rule error.  xm and xp are kept separately so callers can build
    both `r` and `1 - r` (or `t - r`) without cancellation.
    """
    k = np.arange(-int(np.floor(tmax / step)), int(np.floor(tmax / step)) + 1)
    u = 0.5 * np.pi * np.sinh(k * step)
    xm = 1.0 / (1.0 + np.exp(-2.0 * u))
    xp = 1.0 / (1.0 + np.exp(2.0 * u))
    au = np.abs(u)
    w = step * (np.pi / 2.0) * np.cosh(k * step) * (
        2.0 * np.exp(-2.0 * au) / (1.0 + np.exp(-2.0 * au)) ** 2
    )
    keep = (xm > 0) & (xp > 0) & (w > 0)
    return xm[keep], xp[keep], w[keep]


class TanhSinhRule:
    """Cached pair of tanh-sinh levels used for integrate-and-check."""

    def __init__(self, spec: QuadratureSpec = DEFAULT_QUAD):
        self.spec = spec
        self.xm, self.xp, self.w = tanh_sinh_nodes(spec.step)
        self.xm2, self.xp2, self.w2 = tanh_sinh_nodes(spec.step / 2.0)

    def integrate_01(self, f, check: bool = False):
        """Integrate f over (0,1); f(xm, xp) -> values at nodes x = xm."""
        val = float(np.sum(self.w * f(self.xm, self.xp)))
        if check:
            ref = float(np.sum(self.w2 * f(self.xm2, self.xp2)))
            scale = max(abs(ref), 1e-300)
            if abs(val - ref) > self.spec.tol * max(scale, 1.0):
                raise QuadratureError(
                    f"tanh-sinh levels disagree: {val!r} vs {ref!r}"
                )
            return ref
        return val


_RULE_CACHE: dict[QuadratureSpec, TanhSinhRule] = {}


def get_rule(spec: QuadratureSpec = DEFAULT_QUAD) -> TanhSinhRule:
    rule = _RULE_CACHE.get(spec)
    if rule is None:
        rule = _RULE_CACHE[spec] = TanhSinhRule(spec)
    return rule


def gauss_legendre_01(n: int):
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def power_substitution_panels(a: float, b: float, p: float, n_nodes: int,
                              n_panels: int = 4):
    """Nodes/weights for ∫_a^b g(u) du where g ~ (u-a)**(p-1) near u=a.

    Substituting u = a + (b-a) v**(1/p) turns the singular factor into a
    constant; the transformed integrand is then handled by Gauss-Legendre
    panels on [0, 1].
    """
    if not (b > a):
        raise ValueError("need b > a")
    if not (p > 0):
        raise ValueError("substitution order must be positive")
    x, w = gauss_legendre_01(n_nodes)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    vs = (edges[:-1, None] + np.diff(edges)[:, None] * x[None, :]).ravel()
    ws = (np.diff(edges)[:, None] * w[None, :]).ravel()
    u = a + (b - a) * vs ** (1.0 / p)
    du = (b - a) / p * vs ** (1.0 / p - 1.0)
    return u, ws * du
