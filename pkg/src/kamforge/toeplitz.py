"""High-mode Toeplitz structure: class projections, approximant, defect.

A linear-class monomial has a z-type component at a high site m and exactly
one high z-leg at site n, everything else (angles, actions, remaining
z-legs) being low.  Along each diagonal, keyed by the component/leg signs,
the sign of m, the offset between the signed sites, and the low factor, a
Toeplitz field carries a constant coefficient.  The engine approximates any
field by the per-diagonal min-max midpoint and measures the scaled defect.
"""

import math
from dataclasses import dataclass

from . import fields as fd
from . import norms as nm


@dataclass(frozen=True)
class ToeplitzParams:
    N0: int
    theta: float
    mu: float
    b: float
    L: float
    kappa: int

    def __post_init__(self):
        if not (1 < self.theta < 6 and 1 < self.mu < 6):
            raise ValueError("theta and mu must lie in (1, 6)")
        if not (0 < self.b < self.L < 1):
            raise ValueError("need 0 < b < L < 1")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        lhs = (12.0 * self.N0 ** (self.L - 1)
               + 2.0 * self.kappa * self.N0 ** (self.b - 1))
        if not lhs < 1.0:
            raise ValueError(
                "N0 too small for (b, L, kappa): constraint value %.3f >= 1"
                % lhs)


@dataclass
class ToeplitzDecomposition:
    N: int
    projected: "fd.Field"
    approx: "fd.Field"
    defect: "fd.Field"
    diagonals: int


def _legs(alpha, beta):
    for s, e in alpha:
        yield s, e, 1
    for s, e in beta:
        yield s, e, -1


def is_low(sites, key, N, params):
    comp, k, i, a, b = key
    cutb = N ** params.b
    if fd.fourier_size(k) >= cutb:
        return False
    if abs(fd.momentum(sites, comp, k, a, b)) >= cutb:
        return False
    wt = sum(abs(s) * e for s, e, _ in _legs(a, b))
    return wt < params.mu * N ** params.L


def linear_split(sites, key, N, params):
    """Group key and (m, n) when the monomial is (N, theta, mu)-linear.

    Returns None otherwise.  The distinguished leg is the unique one above
    theta*N; ties or extra weight disqualify the monomial via the remaining
    low-weight condition.
    """
    comp, k, i, a, b = key
    kind, m = comp
    if kind == fd.ZP_KIND:
        sigma = 1
    elif kind == fd.ZM_KIND:
        sigma = -1
    else:
        return None
    thetaN = params.theta * N
    if abs(m) <= thetaN:
        return None
    cutb = N ** params.b
    if fd.fourier_size(k) >= cutb:
        return None
    if abs(fd.momentum(sites, comp, k, a, b)) >= cutb:
        return None
    legs = list(_legs(a, b))
    if not legs:
        return None
    n, _, sigmap = max(legs, key=lambda le: (abs(le[0]), le[0], le[2]))
    if abs(n) <= thetaN:
        return None
    rest_wt = sum(abs(s) * e for s, e, _ in legs) - abs(n)
    if rest_wt >= params.mu * N ** params.L:
        return None
    if sigmap == 1:
        a_rest, b_rest = fd._decrement_support(a, n), b
    else:
        a_rest, b_rest = a, fd._decrement_support(b, n)
    h = sigma * m - sigmap * n
    sgn_m = 1 if m > 0 else -1
    return (sigma, sigmap, sgn_m, h, k, i, a_rest, b_rest), m, n


def project_class(X, N, params, which):
    """(N, mu)-low or (N, theta, mu)-linear projection."""
    out = fd.zero_like(X)
    for key, c in X.terms.items():
        if which == "low":
            keep = is_low(X.sites, key, N, params)
        elif which == "linear":
            keep = linear_split(X.sites, key, N, params) is not None
        else:
            raise ValueError("class must be 'low' or 'linear'")
        if keep:
            out.terms[key] = c
    return out


def diagonal_groups(X, N, params):
    groups = {}
    for key, c in X.terms.items():
        ls = linear_split(X.sites, key, N, params)
        if ls is None:
            continue
        gkey, m, n = ls
        groups.setdefault(gkey, []).append((m, n, c))
    return groups


def diagonal_spread(X, N, params):
    """Largest coefficient variation along any diagonal; 0 iff Toeplitz."""
    worst = 0.0
    for entries in diagonal_groups(X, N, params).values():
        re = [c.real for _, _, c in entries]
        im = [c.imag for _, _, c in entries]
        worst = max(worst, max(re) - min(re), max(im) - min(im))
    return worst


def _midpoint(entries):
    re = [c.real for _, _, c in entries]
    im = [c.imag for _, _, c in entries]
    return complex((min(re) + max(re)) / 2.0, (min(im) + max(im)) / 2.0)


def toeplitz_decompose(X, N, params):
    """Linear projection, midpoint Toeplitz approximant, scaled defect.

    The approximant repeats each diagonal's midpoint over every admissible
    slot (component sign and leg sign fixed, both sites above theta*N and
    within the field's mode cutoff); the defect is N times the difference.
    """
    sites = X.sites
    proj = fd.zero_like(X)
    groups = {}
    for key, c in X.terms.items():
        ls = linear_split(sites, key, N, params)
        if ls is None:
            continue
        proj.terms[key] = c
        gkey, m, n = ls
        groups.setdefault(gkey, []).append((m, n, c))
    approx = fd.zero_like(X)
    thetaN = params.theta * N
    m_lo = int(math.floor(thetaN)) + 1
    for gkey, entries in groups.items():
        sigma, sigmap, sgn_m, h, k, i, a_rest, b_rest = gkey
        t = _midpoint(entries)
        kind = fd.ZP_KIND if sigma == 1 else fd.ZM_KIND
        for am in range(m_lo, X.j_max + 1):
            m = sgn_m * am
            if sites.is_tangential(m):
                continue
            n = sigmap * (sigma * m - h)
            if abs(n) <= thetaN or abs(n) > X.j_max:
                continue
            if sites.is_tangential(n):
                continue
            if (sigma * m > 0) != (sigmap * n > 0):
                continue
            if sigmap == 1:
                a_new = fd._merge_support(a_rest, ((n, 1),))
                b_new = b_rest
            else:
                a_new = a_rest
                b_new = fd._merge_support(b_rest, ((n, 1),))
            approx.add_term((kind, m), k, i, a_new, b_new, t)
    defect = fd.scale(fd.add(proj, approx, -1.0), float(N))
    return ToeplitzDecomposition(N=N, projected=proj, approx=approx,
                                 defect=defect, diagonals=len(groups))


def qt_norm_estimate(X, nparams, tparams, N_list):
    """Upper estimate of the quasi-Toeplitz norm over the given N values."""
    if not N_list:
        raise ValueError("N_list must be nonempty")
    base = nm.upper_norm(X, nparams)
    best = 0.0
    for N in N_list:
        if N < tparams.N0:
            raise ValueError("every N must be >= N0")
        dec = toeplitz_decompose(X, N, tparams)
        best = max(best, base, nm.upper_norm(dec.approx, nparams),
                   nm.upper_norm(dec.defect, nparams))
    return best


def closure_margins(params, N, theta1, mu1):
    """Margins of the bracket-closure parameter conditions (positive = ok)."""
    m1 = (params.mu - mu1) - (params.kappa + 1) * N ** (params.b - params.L)
    m2 = (theta1 - params.theta) - (mu1 * N ** (params.L - 1)
                                    + (params.kappa + 1)
                                    * N ** (params.b - 1))
    return m1, m2


def splitting_rhs(X, Y, N, params, theta1, mu1):
    """Five-term bracket splitting at scale N, projected to (theta1, mu1).

    Equals the (theta1, mu1)-linear projection of [X, Y] exactly when the
    closure margins are positive.
    """
    params1 = ToeplitzParams(params.N0, theta1, mu1, params.b, params.L,
                             params.kappa)
    cutb = N ** params.b

    def klow(F):
        return fd.project(fd.project(F, "fourier_below", cutb),
                          "momentum_below", cutb)

    def khigh(F):
        out = fd.zero_like(F)
        for key, c in F.terms.items():
            comp, k, i, a, b = key
            if (fd.fourier_size(k) >= cutb
                    or abs(fd.momentum(F.sites, comp, k, a, b)) >= cutb):
                out.terms[key] = c
        return out

    lin_x = project_class(X, N, params, "linear")
    lin_y = project_class(Y, N, params, "linear")
    low_x = project_class(X, N, params, "low")
    low_y = project_class(Y, N, params, "low")
    total = fd.commutator(lin_x, lin_y)
    total = fd.add(total, fd.commutator(lin_x, low_y))
    total = fd.add(total, fd.commutator(low_x, lin_y))
    total = fd.add(total, fd.commutator(khigh(X), Y))
    total = fd.add(total, fd.commutator(klow(X), khigh(Y)))
    return project_class(total, N, params1, "linear")
