"""Excluded-parameter measure estimation for the resonance conditions.

The surviving amplitudes are those whose first-order frequencies keep every
small divisor above its threshold: first and second order conditions at
weight 2*gamma, integer-shifted and low-frequency angle conditions at
weight 2*gamma^(2/3).  This module samples an amplitude box, attributes
each excluded sample to the condition families that reject it, and fits
the growth of the excluded fraction against gamma.

The first-order frequency map is affine in the amplitudes, so every
family is prescreened by an exact interval bound over the box before the
per-sample check; the screen never discards a violating pair.
"""

import itertools
import math

import numpy as np

from .errors import DegenerateFitError

# condition family keys, matching the homological solver's reports where
# the families coincide
FAM_FIRST = "first"
FAM_SECOND_PLUS = "second_plus"
FAM_SECOND_MINUS = "second_minus"
FAM_STRONG = "strong"
FAM_ZEROTH = "zeroth"
FAMILIES = (FAM_FIRST, FAM_SECOND_PLUS, FAM_SECOND_MINUS, FAM_STRONG,
            FAM_ZEROTH)


class ParameterBox:
    """Amplitude box rho/2 <= xi_j <= rho over the positive tangential
    sites."""

    def __init__(self, sites, rho):
        if not (rho > 0 and math.isfinite(rho)):
            raise ValueError("rho must be positive and finite")
        if sites.half == 0:
            raise ValueError("the box needs at least one tangential site")
        self.sites = sites
        self.rho = float(rho)

    def volume(self):
        return (self.rho / 2.0) ** self.sites.half

    def grid_points(self, per_dim):
        """Cell-centered product grid; centering keeps the points off the
        exact resonance surfaces for generic frequencies."""
        if per_dim < 8:
            raise ValueError("need at least 8 grid points per dimension")
        step = (self.rho / 2.0) / per_dim
        axis = self.rho / 2.0 + step * (np.arange(per_dim) + 0.5)
        grids = np.meshgrid(*([axis] * self.sites.half), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def sample(self, count, seed):
        if count < 8:
            raise ValueError("need at least 8 samples")
        rng = np.random.default_rng(seed)
        return self.rho / 2.0 + (self.rho / 2.0) * rng.random(
            (count, self.sites.half))


def frequency_tables(fm, sites, xi_points, j_bound):
    """Vectorized first-order frequencies over amplitude rows.

    Returns (omega, js, Omega): omega has one column per positive
    tangential site, js lists the nonnegative normal sites up to j_bound,
    and Omega has one column per entry of js.
    """
    xi_points = np.asarray(xi_points, dtype=float)
    iplus = np.array(sites.iplus, dtype=float)
    lam_t = np.sqrt(iplus ** 2 + fm.m)
    svec = iplus ** 2 / lam_t ** 2
    S = xi_points @ svec
    omega = (lam_t[None, :] + 0.25 * (iplus ** 2 / lam_t ** 3)[None, :]
             * xi_points - S[:, None] / lam_t[None, :])
    js = np.array([j for j in range(j_bound + 1)
                   if not sites.is_tangential(j)], dtype=int)
    lam_n = np.sqrt(js.astype(float) ** 2 + fm.m)
    Omega = lam_n[None, :] - S[:, None] / lam_n[None, :]
    return omega, js, Omega


def default_cutoffs(fm, sites, H=20, j_bound=200):
    """H, Jmax, and the integer shift bound 2*sup|omega|*H rounded up."""
    sup = max(math.sqrt(i * i + fm.m) for i in sites.iplus)
    return {"H": H, "Jmax": j_bound, "Pmax": int(math.ceil(2.0 * sup * H))}


def _half_vectors(half, H):
    out = []
    for h in itertools.product(range(-H, H + 1), repeat=half):
        if 0 < sum(abs(t) for t in h) <= H:
            out.append(h)
    return out


def excluded_measure(fm, sites, pb, mp, cutoffs=None, grid=64, mode="grid",
                     seed=0):
    """Excluded fraction of the amplitude box and its per-family split.

    grid mode uses a cell-centered product grid with `grid` points per
    dimension; montecarlo mode draws `grid` uniform samples.  The record
    carries the sampled points and the exclusion mask so callers can test
    the surviving set directly.
    """
    if pb.sites != sites:
        raise ValueError("parameter box and site set disagree")
    cut = dict(default_cutoffs(fm, sites))
    if cutoffs:
        cut.update(cutoffs)
    H, j_bound, p_max = int(cut["H"]), int(cut["Jmax"]), int(cut["Pmax"])
    if H < 1 or j_bound < 1 or p_max < 0:
        raise ValueError("cutoffs must be positive")
    if mode == "grid":
        points = pb.grid_points(grid)
    elif mode == "montecarlo":
        points = pb.sample(grid, seed)
    else:
        raise ValueError("mode must be 'grid' or 'montecarlo'")
    gamma, tau = mp.gamma, mp.tau
    half = sites.half

    omega, js, Omega = frequency_tables(fm, sites, points, j_bound)
    lam_n = np.sqrt(js.astype(float) ** 2 + fm.m)
    m_count = points.shape[0]
    viol = {fam: np.zeros(m_count, dtype=bool) for fam in FAMILIES}

    # everything is affine in xi, so each divisor ranges over an exactly
    # computable interval; a family is evaluated pointwise only where the
    # interval reaches its threshold
    om_lo, om_hi = omega.min(axis=0), omega.max(axis=0)
    om_c = 0.5 * (om_lo + om_hi)
    om_dev = 0.5 * (om_hi - om_lo)
    Om_c = 0.5 * (Omega.min(axis=0) + Omega.max(axis=0))
    Om_dev = 0.5 * (Omega.max(axis=0) - Omega.min(axis=0))

    pair_i, pair_j = np.triu_indices(len(js))
    sum_c = Om_c[pair_i] + Om_c[pair_j]
    sum_dev = Om_dev[pair_i] + Om_dev[pair_j]
    diag = pair_i == pair_j
    diff_c = Om_c[pair_i] - Om_c[pair_j]
    diff_dev = sum_dev

    low_h = math.inf if gamma == 0.0 else gamma ** (-1.0 / (7.0 * 2 * half))
    for h in _half_vectors(half, H):
        hv = np.array(h, dtype=float)
        hsz = int(np.abs(hv).sum())
        thr = 2.0 * gamma * hsz ** (-tau)
        sthr = 2.0 * gamma ** (2.0 / 3.0) * hsz ** (-tau)
        oh = omega @ hv
        oh_c = float(om_c @ hv)
        oh_dev = float(np.abs(hv) @ om_dev)

        sel = np.abs(oh_c + Om_c) <= thr + oh_dev + Om_dev
        if sel.any():
            hit = np.abs(oh[:, None] + Omega[:, sel]) < thr
            viol[FAM_FIRST] |= hit.any(axis=1)

        sel = np.abs(oh_c + sum_c) <= thr + oh_dev + sum_dev
        if sel.any():
            hit = np.abs(oh[:, None] + Omega[:, pair_i[sel]]
                         + Omega[:, pair_j[sel]]) < thr
            viol[FAM_SECOND_PLUS] |= hit.any(axis=1)

        sel = (np.abs(oh_c + diff_c) <= thr + oh_dev + diff_dev) & ~diag
        if sel.any():
            hit = np.abs(oh[:, None] + Omega[:, pair_i[sel]]
                         - Omega[:, pair_j[sel]]) < thr
            viol[FAM_SECOND_MINUS] |= hit.any(axis=1)
        # equal normal indices collapse to the bare angle divisor
        if abs(oh_c) <= thr + oh_dev:
            viol[FAM_SECOND_MINUS] |= np.abs(oh) < thr

        p_lo = max(-p_max, int(math.floor(-oh_c - oh_dev - sthr)))
        p_hi = min(p_max, int(math.ceil(-oh_c + oh_dev + sthr)))
        for p in range(p_lo, p_hi + 1):
            viol[FAM_STRONG] |= np.abs(oh + p) < sthr

        if hsz < low_h:
            zthr = 2.0 * gamma ** (2.0 / 3.0) * hsz ** (-float(half))
            if abs(oh_c) <= zthr + oh_dev:
                viol[FAM_ZEROTH] |= np.abs(oh) < zthr

    excluded = np.zeros(m_count, dtype=bool)
    for fam in FAMILIES:
        excluded |= viol[fam]
    return {"fraction": float(excluded.mean()),
            "per_condition": {fam: float(viol[fam].mean())
                              for fam in FAMILIES},
            "samples": m_count,
            "gamma": gamma,
            "rho": pb.rho,
            "cutoffs": {"H": H, "Jmax": j_bound, "Pmax": p_max},
            "points": points,
            "excluded": excluded}


def gamma_scaling_fit(gammas, fractions):
    """Least-squares slope of log(fraction) against log(gamma)."""
    gammas = [float(g) for g in gammas]
    fractions = [float(f) for f in fractions]
    if len(gammas) != len(fractions):
        raise ValueError("gamma and fraction lists must align")
    if len(gammas) < 4:
        raise ValueError("need at least four gamma values")
    if any(g <= 0 for g in gammas):
        raise ValueError("gamma values must be positive")
    if any(f <= 0 for f in fractions):
        raise DegenerateFitError(
            "an excluded fraction is zero; raise the cutoffs or the grid")
    x = np.log(gammas)
    y = np.log(fractions)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = y - y.mean()
    r2 = 1.0 - float(resid @ resid) / float(total @ total)
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}
