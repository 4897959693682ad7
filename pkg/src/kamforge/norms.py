"""Certified bounds for the momentum-weighted majorant norm.

The true norm is a sup over an infinite-dimensional domain; the engine
works with a sandwich: an upper bound summing per-monomial suprema in
closed form, and a lower bound sampling boundary points of the domain and
evaluating the majorant there.  Every inequality the engine asserts pairs
the bounds in the sound direction (lower on the left, upper on the right).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import fields as fd


@dataclass(frozen=True)
class NormParams:
    s: float          # angle analyticity radius
    r: float          # action/normal radius
    a_space: float = 0.5   # exponential space weight, fixed per run
    p: float = 1.0         # polynomial space weight, > 1/2
    a_mom: float = 0.0     # momentum penalty weight

    def __post_init__(self):
        if not (self.s > 0 and 0 < self.r < 1):
            raise ValueError("need s > 0 and 0 < r < 1")
        if not (self.a_space > 0 and self.p > 0.5 and self.a_mom >= 0):
            raise ValueError("need a_space > 0, p > 1/2, a_mom >= 0")

    def shrink(self, s=None, r=None, a_mom=None):
        return NormParams(self.s if s is None else s,
                          self.r if r is None else r,
                          self.a_space, self.p,
                          self.a_mom if a_mom is None else a_mom)


@dataclass(frozen=True)
class NormBounds:
    upper: float
    lower: float
    samples_used: int
    seed: int


def site_weight(params, j):
    aj = abs(j)
    return math.exp(params.a_space * aj) * max(1, aj) ** params.p


def monomial_sup(i, alpha, beta, params):
    """Closed-form sup of |y^i z^alpha zbar^beta| over the norm domain.

    The y block ranges over the l1 ball of radius r^2 and each z block over
    the weighted l2 ball of radius r; the optimum splits the l2 budget
    proportionally to the exponents.
    """
    val = params.r ** (2 * sum(i))
    for gamma in (alpha, beta):
        tot = fd.weight_sum(gamma)
        if tot:
            val *= params.r ** tot
            for j, e in gamma:
                val *= (e / tot) ** (e / 2) * site_weight(params, j) ** (-e)
    return val


def _comp_weight(params, comp):
    kind, site = comp
    if kind == fd.X_KIND:
        return 1.0 / params.s
    if kind == fd.Y_KIND:
        return 1.0 / params.r ** 2
    return site_weight(params, site) / params.r


def term_weight(sites, key, params):
    """Norm contribution of a monomial with unit coefficient."""
    comp, k, i, a, b = key
    pi = fd.momentum(sites, comp, k, a, b)
    return (_comp_weight(params, comp)
            * math.exp(params.a_mom * abs(pi))
            * math.exp(params.s * fd.fourier_size(k))
            * monomial_sup(i, a, b, params))


def upper_norm(X, params):
    return sum(abs(c) * term_weight(X.sites, key, params)
               for key, c in X.terms.items())


RADIAL_FRACTIONS = (0.9, 0.99, 1.0 - 1e-9)


def lower_norm(X, params, samples=16, seed=0):
    """Sampled lower bound: majorant evaluated at domain boundary points.

    Only the moduli of y, z, zbar enter the majorant, so the samples are
    nonnegative vectors on the boundary spheres (l1 of radius f*r^2 for y,
    weighted l2 of radius f*r for each z block), with the angle and
    momentum weights applied in closed form.
    """
    if not X.terms:
        return 0.0
    sites = X.sites
    normal = [s for s in range(-X.j_max, X.j_max + 1)
              if not sites.is_tangential(s)]
    wz = np.array([site_weight(params, s) for s in normal])
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        gy = np.abs(rng.standard_normal(max(sites.n, 1)))
        gz = np.abs(rng.standard_normal(len(normal)))
        gzb = np.abs(rng.standard_normal(len(normal)))
        for f in RADIAL_FRACTIONS:
            yv = {}
            if sites.n:
                ys = gy[:sites.n] * (f * params.r ** 2 / max(gy.sum(), 1e-300))
                yv = {s: ys[t] for t, s in enumerate(sites.sites)}
            zs = gz * (f * params.r / max(np.sqrt(((wz * gz) ** 2).sum()),
                                          1e-300))
            zbs = gzb * (f * params.r / max(np.sqrt(((wz * gzb) ** 2).sum()),
                                            1e-300))
            zv = {s: zs[t] for t, s in enumerate(normal)}
            zbv = {s: zbs[t] for t, s in enumerate(normal)}
            vals = {}
            for (comp, k, i, a, b), c in X.terms.items():
                v = abs(c) * math.exp(params.s * fd.fourier_size(k))
                pi = fd.momentum(sites, comp, k, a, b)
                if pi and params.a_mom:
                    v *= math.exp(params.a_mom * abs(pi))
                for t, it in enumerate(i):
                    if it:
                        v *= yv[sites.sites[t]] ** it
                for s_, e in a:
                    v *= zv[s_] ** e
                for s_, e in b:
                    v *= zbv[s_] ** e
                vals[comp] = vals.get(comp, 0.0) + v
            xblock = yblock = z2 = zb2 = 0.0
            for (kind, site), v in vals.items():
                if kind == fd.X_KIND:
                    xblock = max(xblock, v)
                elif kind == fd.Y_KIND:
                    yblock += v
                elif kind == fd.ZP_KIND:
                    z2 += (site_weight(params, site) * v) ** 2
                else:
                    zb2 += (site_weight(params, site) * v) ** 2
            vnorm = max(xblock / params.s, yblock / params.r ** 2,
                        math.sqrt(z2) / params.r,
                        math.sqrt(zb2) / params.r)
            best = max(best, vnorm)
    return best


def norm_bounds(X, params, samples=16, seed=0):
    up = upper_norm(X, params)
    lo = lower_norm(X, params, samples=samples, seed=seed)
    assert lo <= up * (1 + 1e-12), (lo, up)
    return NormBounds(upper=up, lower=lo, samples_used=samples, seed=seed)


def bracket_bound_constant(n):
    """Sound constant for the bracket bound at shrunk parameters."""
    return 2.0 ** (2 * n + 3)


def fourier_smoothing_factor(K, s_from, s_to):
    return (s_from / s_to) * math.exp(-K * (s_from - s_to))


def momentum_smoothing_factor(K, a_from, a_to):
    return math.exp(-K * (a_from - a_to))
