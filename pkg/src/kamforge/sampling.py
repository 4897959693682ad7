"""Seeded random fields and structure projectors.

Used by the property-test suites and the CLI experiment drivers; all
randomness flows through a caller-supplied numpy Generator so runs are
reproducible bit for bit.
"""

from . import fields as fd
from .fields import Field


def _normal_sites(sites, j_max):
    return [s for s in range(-j_max, j_max + 1) if not sites.is_tangential(s)]


def random_field(rng, sites, j_max=6, k_max=6, deg_max=4, n_terms=12,
                 k_span=2, max_y=1, max_legs=2, kinds=None,
                 zero_momentum=False):
    """Random sparse field within the given cutoffs."""
    if kinds is None:
        kinds = ("x", "y", "z+", "z-") if sites.n else ("z+", "z-")
    normal = _normal_sites(sites, j_max)
    X = Field(sites, k_max, deg_max, j_max)
    attempts = 0
    while len(X) < n_terms and attempts < 200 * n_terms:
        attempts += 1
        kind = kinds[int(rng.integers(len(kinds)))]
        if sites.n:
            k = tuple(int(v) for v in rng.integers(-k_span, k_span + 1,
                                                   size=sites.n))
            i = tuple(int(v) for v in rng.integers(0, max_y + 1,
                                                   size=sites.n))
        else:
            k = ()
            i = ()
        alpha = {}
        beta = {}
        for _ in range(int(rng.integers(0, max_legs + 1))):
            s = int(normal[int(rng.integers(len(normal)))])
            tgt = alpha if int(rng.integers(2)) == 0 else beta
            tgt[s] = tgt.get(s, 0) + 1
        alpha = tuple(sorted(alpha.items()))
        beta = tuple(sorted(beta.items()))
        if kind in ("x", "y"):
            site = int(sites.sites[int(rng.integers(sites.n))])
        else:
            base = sum(j * kj for j, kj in zip(sites.sites, k))
            base += sum(s * e for s, e in alpha)
            base -= sum(s * e for s, e in beta)
            if zero_momentum:
                site = base if kind == "z+" else -base
                if abs(site) > j_max or sites.is_tangential(site):
                    continue
            else:
                site = int(normal[int(rng.integers(len(normal)))])
        comp = (kind, site)
        if zero_momentum and fd.momentum(sites, comp, k, alpha, beta) != 0:
            continue
        c = complex(rng.standard_normal(), rng.standard_normal())
        before = len(X)
        X.add_term(comp, k, i, alpha, beta, c)
        if len(X) == before:
            continue
    return X


# ---------------------------------------------------------------------------
# structure projectors (exact linear averaging over the involution orbits)


def project_reversible(X, anti=False):
    flip = -1.0 if anti else 1.0
    keys = set(X.terms)
    for key in list(keys):
        keys.add(fd._rev_partner(X.sites, key)[0])
    out = fd.zero_like(X)
    for key in keys:
        partner, sign = fd._rev_partner(X.sites, key)
        c = 0.5 * (X.terms.get(key, 0j)
                   + flip * sign * X.terms.get(partner, 0j))
        out.add_term(*key, c)
    return out


def project_even(X):
    keys = set(X.terms)
    for key in list(keys):
        keys.add(fd._even_partner(X.sites, key))
    out = fd.zero_like(X)
    for key in keys:
        partner = fd._even_partner(X.sites, key)
        c = 0.5 * (X.terms.get(key, 0j) + X.terms.get(partner, 0j))
        out.add_term(*key, c)
    return out


def project_real_on_real(X):
    keys = set(X.terms)
    for key in list(keys):
        keys.add(fd._bar_partner(key))
    out = fd.zero_like(X)
    for key in keys:
        partner = fd._bar_partner(key)
        c = 0.5 * (X.terms.get(key, 0j)
                   + X.terms.get(partner, 0j).conjugate())
        out.add_term(*key, c)
    return out


def project_real_coeffs(X, anti=False):
    out = fd.zero_like(X)
    for key, c in X.terms.items():
        is_x = key[0][0] == "x"
        if is_x != anti:
            cc = complex(c.real, 0.0)
        else:
            cc = complex(0.0, c.imag)
        out.add_term(*key, cc)
    return out


_PROJECTORS = {
    "reversible": lambda X: project_reversible(X),
    "anti_reversible": lambda X: project_reversible(X, anti=True),
    "real_coefficients": lambda X: project_real_coeffs(X),
    "anti_real_coefficients": lambda X: project_real_coeffs(X, anti=True),
    "real_on_real": project_real_on_real,
    "even": project_even,
}

_DEFECTS = {
    "reversible": lambda X: fd.reversibility_defect(X),
    "anti_reversible": lambda X: fd.reversibility_defect(X, anti=True),
    "real_coefficients": lambda X: fd.real_coeff_defect(X),
    "anti_real_coefficients": lambda X: fd.real_coeff_defect(X, anti=True),
    "real_on_real": fd.real_on_real_defect,
    "even": fd.evenness_defect,
}


def random_linear_diagonals(rng, sites, j_max, N, tparams, n_groups=4,
                            entries=5, spread=0.3):
    """Random high-mode linear-class content organized in diagonals.

    Each group fixes component/leg kinds, the sign of the component site and
    a small site offset, then populates several slots with coefficients
    jittered around a base value.  Offsets are kept within the momentum
    window of the class.
    """
    X = Field(sites, 2, 2, j_max)
    thetaN = tparams.theta * N
    m_lo = int(thetaN) + 1
    if m_lo + entries > j_max:
        raise ValueError("j_max too small for the requested diagonals")
    h_cut = int(N ** tparams.b)
    for _ in range(n_groups):
        sigma = 1 if rng.integers(2) == 0 else -1
        sigmap = 1 if rng.integers(2) == 0 else -1
        sgn_m = 1 if rng.integers(2) == 0 else -1
        h = int(rng.integers(-h_cut, h_cut + 1))
        base = complex(rng.standard_normal(), rng.standard_normal())
        kind = "z+" if sigma == 1 else "z-"
        for _ in range(entries):
            am = int(rng.integers(m_lo, j_max))
            m = sgn_m * am
            n = sigmap * (sigma * m - h)
            if not (thetaN < abs(n) <= j_max):
                continue
            if sites.is_tangential(m) or sites.is_tangential(n):
                continue
            if (sigma * m > 0) != (sigmap * n > 0):
                continue
            alpha = ((n, 1),) if sigmap == 1 else ()
            beta = ((n, 1),) if sigmap == -1 else ()
            c = base + spread * complex(rng.standard_normal(),
                                        rng.standard_normal())
            X.add_term((kind, m), sites.zero_k, sites.zero_i, alpha, beta, c)
    return X


def make_structured(rng, sites, props, **kwargs):
    """Random field satisfying the named structural properties exactly.

    'symmetric' (fixedness under symmetrize) may be combined with the
    coefficient symmetries; it is applied last.
    """
    props = list(props)
    symmetric = "symmetric" in props
    coeff_props = [p for p in props if p != "symmetric"]
    for _ in range(40):
        X = random_field(rng, sites, **kwargs)
        for p in coeff_props:
            X = _PROJECTORS[p](X)
        if symmetric:
            X = fd.symmetrize(X)
        if not X.terms:
            continue
        if all(_DEFECTS[p](X) == 0.0 for p in coeff_props):
            return X
    raise RuntimeError("could not build structured field for %r" % (props,))
