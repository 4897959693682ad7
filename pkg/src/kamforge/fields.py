"""Sparse algebra of truncated formal vector fields.

Variables split into tangential angle/action pairs (x_j, y_j) indexed by a
symmetric integer site set and normal complex pairs (z_j, zbar_j) on the
remaining integer sites.  A field is a finite complex combination of
monomials

    e^{i k.x} y^i z^alpha zbar^beta  d/d v

stored sparsely by the key (component, k, i, alpha, beta).  k and i are
dense tuples over the ordered tangential sites (positive sites first, then
their negatives in the same order); alpha and beta are sorted tuples of
(site, exponent) pairs.  Components are (kind, site) with kind one of
'x', 'y', 'z+', 'z-'.

All operations are pure functions returning new fields; fields are treated
as immutable values.
"""

import cmath
import json

from .errors import CutoffOverflowError

X_KIND = "x"
Y_KIND = "y"
ZP_KIND = "z+"
ZM_KIND = "z-"
Z_KINDS = (ZP_KIND, ZM_KIND)

# Hard safety bounds for bracket results; callers normally re-truncate far
# below these.
HARD_LIMITS = {"k_max": 512, "deg_max": 64}


class TangentialSites:
    """The symmetric tangential site set and its index bookkeeping."""

    def __init__(self, iplus, _allow_empty=False):
        iplus = tuple(int(j) for j in iplus)
        if not _allow_empty and not iplus:
            raise ValueError("tangential site list must be nonempty")
        if any(j <= 0 for j in iplus):
            raise ValueError("tangential sites must be strictly positive")
        if list(iplus) != sorted(set(iplus)):
            raise ValueError("tangential sites must be strictly increasing")
        self.iplus = iplus
        self.sites = iplus + tuple(-j for j in iplus)
        self.n = len(self.sites)
        self.half = len(iplus)
        self.kappa = max(self.sites, default=0)
        self._pos = {j: t for t, j in enumerate(self.sites)}
        # permutation sending the slot of site j to the slot of site -j
        self.mirror = tuple(self._pos[-j] for j in self.sites)
        self.zero_k = (0,) * self.n
        self.zero_i = (0,) * self.n

    @classmethod
    def none(cls):
        """Frame with no tangential sites: every variable is normal.

        Used for the first-order complex form of the wave equation, where
        all modes are z-type and the tangential set enters only as data.
        """
        return cls((), _allow_empty=True)

    def index(self, site):
        return self._pos[site]

    def is_tangential(self, site):
        return site in self._pos

    def __eq__(self, other):
        return isinstance(other, TangentialSites) and self.iplus == other.iplus

    def __hash__(self):
        return hash(self.iplus)

    def __repr__(self):
        return "TangentialSites(%r)" % (self.iplus,)


def weight_sum(support):
    return sum(e for _, e in support)


def degree(comp, i, alpha, beta):
    """Monomial degree: total polynomial weight minus d(v), d(x)=0 else 1."""
    d = 0 if comp[0] == X_KIND else 1
    return sum(i) + weight_sum(alpha) + weight_sum(beta) - d


def momentum(sites, comp, k, alpha, beta):
    """Linear-momentum eigenvalue of the monomial under site translation."""
    p = sum(j * kj for j, kj in zip(sites.sites, k))
    p += sum(s * e for s, e in alpha)
    p -= sum(s * e for s, e in beta)
    kind, site = comp
    if kind == ZP_KIND:
        p -= site
    elif kind == ZM_KIND:
        p += site
    return p


def fourier_size(k):
    return sum(abs(v) for v in k)


def _merge_support(a, b):
    if not a:
        return b
    if not b:
        return a
    acc = dict(a)
    for s, e in b:
        acc[s] = acc.get(s, 0) + e
    return tuple(sorted(acc.items()))


def _decrement_support(support, site):
    out = []
    for s, e in support:
        if s == site:
            if e > 1:
                out.append((s, e - 1))
        else:
            out.append((s, e))
    return tuple(out)


def _max_site(comp, alpha, beta):
    m = 0
    kind, site = comp
    if kind in Z_KINDS:
        m = abs(site)
    for s, _ in alpha:
        m = max(m, abs(s))
    for s, _ in beta:
        m = max(m, abs(s))
    return m


class Field:
    """A truncated formal vector field in canonical sparse form."""

    __slots__ = ("sites", "k_max", "deg_max", "j_max", "terms")

    def __init__(self, sites, k_max, deg_max, j_max, terms=None):
        self.sites = sites
        self.k_max = int(k_max)
        self.deg_max = int(deg_max)
        self.j_max = int(j_max)
        self.terms = {} if terms is None else terms

    def copy(self):
        return Field(self.sites, self.k_max, self.deg_max, self.j_max,
                     dict(self.terms))

    def admits(self, comp, k, i, alpha, beta):
        if fourier_size(k) > self.k_max:
            return False
        if degree(comp, i, alpha, beta) > self.deg_max:
            return False
        if _max_site(comp, alpha, beta) > self.j_max:
            return False
        return True

    def add_term(self, comp, k, i, alpha, beta, coeff, drop=0.0):
        """Accumulate one monomial; silently drops terms outside cutoffs."""
        if coeff == 0 or not self.admits(comp, k, i, alpha, beta):
            return
        key = (comp, k, i, alpha, beta)
        c = self.terms.get(key, 0j) + coeff
        if c == 0 or abs(c) <= drop:
            self.terms.pop(key, None)
        else:
            self.terms[key] = c

    def by_component(self):
        idx = {}
        for key, c in self.terms.items():
            idx.setdefault(key[0], []).append((key, c))
        return idx

    def components(self):
        return {key[0] for key in self.terms}

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return "Field(%d terms, k<=%d, deg<=%d, |j|<=%d)" % (
            len(self.terms), self.k_max, self.deg_max, self.j_max)


def zero_like(X):
    return Field(X.sites, X.k_max, X.deg_max, X.j_max)


def add(X, Y, scale_y=1.0):
    """X + scale_y * Y under X's cutoffs."""
    out = X.copy()
    for (comp, k, i, a, b), c in Y.terms.items():
        out.add_term(comp, k, i, a, b, scale_y * c)
    return out


def scale(X, c):
    out = zero_like(X)
    if c != 0:
        for key, v in X.terms.items():
            out.terms[key] = c * v
    return out


def max_coeff_diff(X, Y):
    """sup over monomials of |coefficient difference|; exact-zero friendly."""
    keys = set(X.terms) | set(Y.terms)
    return max((abs(X.terms.get(key, 0j) - Y.terms.get(key, 0j))
                for key in keys), default=0.0)


def sup_coeff(X):
    return max((abs(c) for c in X.terms.values()), default=0.0)


def truncate(X, k_max=None, deg_max=None, j_max=None):
    k_max = X.k_max if k_max is None else k_max
    deg_max = X.deg_max if deg_max is None else deg_max
    j_max = X.j_max if j_max is None else j_max
    out = Field(X.sites, k_max, deg_max, j_max)
    for (comp, k, i, a, b), c in X.terms.items():
        out.add_term(comp, k, i, a, b, c)
    return out


# ---------------------------------------------------------------------------
# bracket


def _dependencies(sites, key):
    """Variables a monomial actually depends on, with derivative data.

    Yields (component label, factor, derived monomial key parts).
    """
    comp, k, i, a, b = key
    for t, kt in enumerate(k):
        if kt != 0:
            yield (X_KIND, sites.sites[t]), 1j * kt, (k, i, a, b)
    for t, it in enumerate(i):
        if it != 0:
            i2 = i[:t] + (it - 1,) + i[t + 1:]
            yield (Y_KIND, sites.sites[t]), it, (k, i2, a, b)
    for s, e in a:
        yield (ZP_KIND, s), e, (k, i, _decrement_support(a, s), b)
    for s, e in b:
        yield (ZM_KIND, s), e, (k, i, a, _decrement_support(b, s))


def _accumulate_directional(out, X, Y, sign, target_k, target_deg, drop):
    """Adds sign * sum_v' (d_v' X) Y^(v') into out."""
    ycomp = Y.by_component()
    for key, cx in X.terms.items():
        comp = key[0]
        degx = degree(comp, key[2], key[3], key[4])
        for dep, factor, (k, i, a, b) in _dependencies(X.sites, key):
            rows = ycomp.get(dep)
            if not rows:
                continue
            base = sign * cx * factor
            for (ycomp_key, ky, iy, ay, by), cy in rows:
                degy = degree(ycomp_key, iy, ay, by)
                if degx + degy > target_deg:
                    continue
                knew = tuple(p + q for p, q in zip(k, ky))
                if fourier_size(knew) > target_k:
                    continue
                inew = tuple(p + q for p, q in zip(i, iy))
                anew = _merge_support(a, ay)
                bnew = _merge_support(b, by)
                out.add_term(comp, knew, inew, anew, bnew, base * cy,
                             drop=drop)


def commutator(X, Y, k_max=None, deg_max=None, j_max=None, hard=None,
               drop=0.0):
    """Lie bracket [X, Y], component-wise (d X) Y - (d Y) X.

    Result cutoffs default to the componentwise sums of the input cutoffs
    (degree and Fourier size add exactly under the bracket); pass targets to
    truncate in-flight, which skips the same terms a post-truncation would.
    """
    if X.sites != Y.sites:
        raise ValueError("bracket operands live on different site sets")
    limits = HARD_LIMITS if hard is None else hard
    k_max = X.k_max + Y.k_max if k_max is None else k_max
    deg_max = X.deg_max + Y.deg_max if deg_max is None else deg_max
    j_max = max(X.j_max, Y.j_max) if j_max is None else j_max
    if k_max > limits["k_max"] or deg_max > limits["deg_max"]:
        raise CutoffOverflowError(
            "bracket cutoffs (k<=%d, deg<=%d) exceed hard limits %r"
            % (k_max, deg_max, limits))
    out = Field(X.sites, k_max, deg_max, j_max)
    _accumulate_directional(out, X, Y, 1.0, k_max, deg_max, drop)
    _accumulate_directional(out, Y, X, -1.0, k_max, deg_max, drop)
    return out


def lie_series(X, Y, order, k_max=None, deg_max=None, j_max=None, drop=0.0):
    """sum_{k<=order} ad_Y^k X / k! with ad_Y X = [X, Y].

    Each bracket is re-truncated to X's cutoffs (or the given targets).
    """
    k_max = X.k_max if k_max is None else k_max
    deg_max = X.deg_max if deg_max is None else deg_max
    j_max = X.j_max if j_max is None else j_max
    acc = Field(X.sites, k_max, deg_max, j_max)
    term = truncate(X, k_max, deg_max, j_max)
    for key, c in term.terms.items():
        acc.terms[key] = c
    fact = 1.0
    for k in range(1, order + 1):
        term = commutator(term, Y, k_max=k_max, deg_max=deg_max, j_max=j_max,
                          drop=drop)
        if not term.terms:
            break
        fact *= k
        inv = 1.0 / fact
        for (comp, kk, ii, aa, bb), c in term.terms.items():
            acc.add_term(comp, kk, ii, aa, bb, inv * c, drop=drop)
    return acc


def momentum_field(sites, j_max):
    """Generator of site translations: sum_j j d/dx_j + i j z_j d/dz_j - ..."""
    X = Field(sites, 0, 1, j_max)
    for t, j in enumerate(sites.sites):
        X.add_term((X_KIND, j), sites.zero_k, sites.zero_i, (), (), float(j))
    for s in range(-j_max, j_max + 1):
        if sites.is_tangential(s):
            continue
        X.add_term((ZP_KIND, s), sites.zero_k, sites.zero_i, ((s, 1),), (),
                   1j * s)
        X.add_term((ZM_KIND, s), sites.zero_k, sites.zero_i, (), ((s, 1),),
                   -1j * s)
    return X


# ---------------------------------------------------------------------------
# projections


def _is_diag(sites, key):
    comp, k, i, a, b = key
    if any(k) or any(i):
        return False
    kind, site = comp
    if kind == ZP_KIND:
        return a == ((site, 1),) and b == ()
    if kind == ZM_KIND:
        return b == ((site, 1),) and a == ()
    return False


def project(X, selector, value=None):
    """Keep exactly the monomials matching the selector.

    Selectors: 'fourier_below', 'fourier_atleast', 'momentum_below',
    'momentum_atleast' (all with a threshold), 'degree_equals' (with the
    degree), 'degree_le0', 'diag'.
    """
    out = zero_like(X)
    for key, c in X.terms.items():
        comp, k, i, a, b = key
        if selector == "fourier_below":
            keep = fourier_size(k) < value
        elif selector == "fourier_atleast":
            keep = fourier_size(k) >= value
        elif selector == "momentum_below":
            keep = abs(momentum(X.sites, comp, k, a, b)) < value
        elif selector == "momentum_atleast":
            keep = abs(momentum(X.sites, comp, k, a, b)) >= value
        elif selector == "degree_equals":
            keep = degree(comp, i, a, b) == value
        elif selector == "degree_le0":
            keep = degree(comp, i, a, b) <= 0
        elif selector == "diag":
            keep = _is_diag(X.sites, key)
        else:
            raise ValueError("unknown selector %r" % (selector,))
        if keep:
            out.terms[key] = c
    return out


# ---------------------------------------------------------------------------
# symmetrization


def k_is_odd_lattice(sites, k):
    """k lies in the odd sublattice: the entry at -j is minus the entry at j."""
    h = sites.half
    return all(k[t + h] == -k[t] for t in range(h))


def symmetrize(X, drop=0.0):
    """Collapse odd-lattice resonant monomials to x-independent form.

    Pure angle monomials on x/y components (at most linear y factor) and
    single-leg same-kind z/zbar diagonals with odd-lattice k collapse to
    their constant-coefficient counterparts; everything else is untouched.
    The result agrees with X on the symmetric subspace where mirrored
    variables are identified.
    """
    sites = X.sites
    out = zero_like(X)
    for (comp, k, i, a, b), c in X.terms.items():
        kind, site = comp
        if k_is_odd_lattice(sites, k):
            if kind == X_KIND and not any(i) and not a and not b:
                out.add_term(comp, sites.zero_k, i, a, b, c, drop=drop)
                continue
            if kind == Y_KIND and sum(i) <= 1 and not a and not b:
                out.add_term(comp, sites.zero_k, i, a, b, c, drop=drop)
                continue
            if kind == ZP_KIND and not any(i) and not b \
                    and a in (((site, 1),), ((-site, 1),)):
                out.add_term(comp, sites.zero_k, i, ((site, 1),), (), c,
                             drop=drop)
                continue
            if kind == ZM_KIND and not any(i) and not a \
                    and b in (((site, 1),), ((-site, 1),)):
                out.add_term(comp, sites.zero_k, i, (), ((site, 1),), c,
                             drop=drop)
                continue
        out.add_term(comp, k, i, a, b, c, drop=drop)
    return out


# ---------------------------------------------------------------------------
# structure predicates


def _mirror_vec(sites, v):
    return tuple(v[t] for t in sites.mirror)


def _mirror_support(support):
    return tuple(sorted((-s, e) for s, e in support))


def _rev_partner(sites, key):
    """Key and sign such that reversibility demands c[partner] = sign*c."""
    (kind, site), k, i, a, b = key
    if kind == X_KIND:
        comp2, sign = (X_KIND, -site), 1.0
    elif kind == Y_KIND:
        comp2, sign = (Y_KIND, -site), -1.0
    elif kind == ZP_KIND:
        comp2, sign = (ZM_KIND, -site), -1.0
    else:
        comp2, sign = (ZP_KIND, -site), -1.0
    k2 = tuple(-v for v in _mirror_vec(sites, k))
    i2 = _mirror_vec(sites, i)
    return (comp2, k2, i2, _mirror_support(b), _mirror_support(a)), sign


def _even_partner(sites, key):
    (kind, site), k, i, a, b = key
    return ((kind, -site), _mirror_vec(sites, k), _mirror_vec(sites, i),
            _mirror_support(a), _mirror_support(b))


def _bar_partner(key):
    (kind, site), k, i, a, b = key
    if kind == ZP_KIND:
        comp2 = (ZM_KIND, site)
    elif kind == ZM_KIND:
        comp2 = (ZP_KIND, site)
    else:
        comp2 = (kind, site)
    return (comp2, tuple(-v for v in k), i, b, a)


def reversibility_defect(X, anti=False):
    flip = -1.0 if anti else 1.0
    worst = 0.0
    for key, c in X.terms.items():
        partner, sign = _rev_partner(X.sites, key)
        worst = max(worst,
                    abs(X.terms.get(partner, 0j) - flip * sign * c))
    return worst


def real_coeff_defect(X, anti=False):
    worst = 0.0
    for (comp, _, _, _, _), c in X.terms.items():
        is_x = comp[0] == X_KIND
        if is_x != anti:
            worst = max(worst, abs(c.imag))
        else:
            worst = max(worst, abs(c.real))
    return worst


def real_on_real_defect(X):
    worst = 0.0
    for key, c in X.terms.items():
        partner = _bar_partner(key)
        worst = max(worst, abs(X.terms.get(partner, 0j) - c.conjugate()))
    return worst


def evenness_defect(X):
    worst = 0.0
    for key, c in X.terms.items():
        partner = _even_partner(X.sites, key)
        worst = max(worst, abs(X.terms.get(partner, 0j) - c))
    return worst


def structure_report(X, tol=0.0):
    """Booleans for the five coefficient symmetries, at the given tolerance."""
    return {
        "reversible": reversibility_defect(X) <= tol,
        "anti_reversible": reversibility_defect(X, anti=True) <= tol,
        "real_coefficients": real_coeff_defect(X) <= tol,
        "real_on_real": real_on_real_defect(X) <= tol,
        "even": evenness_defect(X) <= tol,
    }


# ---------------------------------------------------------------------------
# evaluation


def evaluate(X, point):
    """Field value at a point, one complex number per stored component.

    point maps 'x', 'y' to {site: value} over tangential sites and
    'z', 'zbar' to {site: value} over normal sites.  Complex angles are
    allowed.
    """
    xv = point.get("x", {})
    yv = point.get("y", {})
    zv = point.get("z", {})
    zbv = point.get("zbar", {})
    sites = X.sites
    out = {}
    for (comp, k, i, a, b), c in X.terms.items():
        val = c
        phase = sum(kt * xv[sites.sites[t]] for t, kt in enumerate(k) if kt)
        if phase:
            val *= cmath.exp(1j * phase)
        for t, it in enumerate(i):
            if it:
                val *= yv[sites.sites[t]] ** it
        for s, e in a:
            val *= zv[s] ** e
        for s, e in b:
            val *= zbv[s] ** e
        out[comp] = out.get(comp, 0j) + val
    return out


def symmetric_point(sites, j_max, rng, scale_=0.5):
    """Random point of the symmetric subspace (mirrored slots identified)."""
    x = {}
    y = {}
    z = {}
    zb = {}
    for j in sites.iplus:
        x[j] = rng.uniform(0, 2 * 3.141592653589793)
        x[-j] = x[j]
        y[j] = complex(rng.uniform(-scale_, scale_), rng.uniform(-scale_, scale_))
        y[-j] = y[j]
    for s in range(0, j_max + 1):
        if sites.is_tangential(s):
            continue
        z[s] = complex(rng.uniform(-scale_, scale_), rng.uniform(-scale_, scale_))
        z[-s] = z[s]
        zb[s] = complex(rng.uniform(-scale_, scale_), rng.uniform(-scale_, scale_))
        zb[-s] = zb[s]
    return {"x": x, "y": y, "z": z, "zbar": zb}


# ---------------------------------------------------------------------------
# serialization


def _comp_to_str(comp):
    return "%s:%d" % comp


def _comp_from_str(s):
    kind, _, site = s.rpartition(":")
    return (kind, int(site))


def write_jsonl(X, path):
    with open(path, "w") as fh:
        header = {
            "format": "kamforge-field",
            "version": 1,
            "iplus": list(X.sites.iplus),
            "cutoffs": {"k_max": X.k_max, "deg_max": X.deg_max,
                        "j_max": X.j_max},
        }
        fh.write(json.dumps(header) + "\n")
        for (comp, k, i, a, b), c in sorted(X.terms.items(),
                                            key=lambda kv: repr(kv[0])):
            row = {"c": _comp_to_str(comp), "k": list(k), "i": list(i),
                   "a": [list(p) for p in a], "b": [list(p) for p in b],
                   "re": c.real, "im": c.imag}
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "kamforge-field":
            raise ValueError("not a field file: %s" % path)
        sites = (TangentialSites(header["iplus"]) if header["iplus"]
                 else TangentialSites.none())
        cut = header["cutoffs"]
        X = Field(sites, cut["k_max"], cut["deg_max"], cut["j_max"])
        for line in fh:
            row = json.loads(line)
            X.add_term(_comp_from_str(row["c"]), tuple(row["k"]),
                       tuple(row["i"]),
                       tuple((int(s), int(e)) for s, e in row["a"]),
                       tuple((int(s), int(e)) for s, e in row["b"]),
                       complex(row["re"], row["im"]))
    return X
