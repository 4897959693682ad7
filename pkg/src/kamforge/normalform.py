"""Diagonal-frame frequency data, small-divisor checks, and the
homological-equation solver.

The frame carries angle frequencies over the tangential sites and elliptic
frequencies over the normal sites.  A field of degree at most zero is split
into its resonant average plus a coboundary; the solver inverts the adjoint
of the frame field monomial by monomial, refusing divisors that fall under
the configured small-divisor threshold.
"""

import itertools
import math

from . import fields as fd
from .errors import DivisorTooSmallError, StructureViolationError
from .fields import Field, X_KIND, Y_KIND, ZP_KIND, ZM_KIND

# condition ids shared between the checker and the solver's error reports
COND_ZEROTH = "zeroth"
COND_FIRST = "first"
COND_SECOND_PLUS = "second_plus"
COND_SECOND_MINUS = "second_minus"
COND_STRONG = "strong"


class NormalForm:
    """Angle frequencies over the tangential sites, elliptic frequencies
    over the normal sites up to a mode cutoff, a constant tail offset, and
    the index threshold past which the tail asymptotics are enforced."""

    def __init__(self, sites, omega, Omega, a_offset=0.0, j_star=1):
        self.sites = sites
        self.omega = {int(j): float(v) for j, v in omega.items()}
        self.Omega = {int(j): float(v) for j, v in Omega.items()}
        self.a_offset = float(a_offset)
        self.j_star = int(j_star)
        if set(self.omega) != set(sites.sites):
            raise ValueError("omega must cover exactly the tangential sites")
        for j in sites.iplus:
            if self.omega[j] != self.omega[-j]:
                raise ValueError("omega must be mirror-symmetric")
        if not self.Omega:
            raise ValueError("Omega must be nonempty")
        for j in self.Omega:
            if sites.is_tangential(j):
                raise ValueError("Omega is indexed by normal sites only")
            if -j not in self.Omega or self.Omega[j] != self.Omega[-j]:
                raise ValueError("Omega must be mirror-symmetric")
        if self.j_star < 1:
            raise ValueError("j_star must be positive")
        self.j_max = max(abs(j) for j in self.Omega)

    @classmethod
    def from_half(cls, sites, omega_half, Omega_half, a_offset=0.0, j_star=1):
        """Build from one value per positive tangential site and one value
        per nonnegative normal site."""
        omega = {}
        for j, v in zip(sites.iplus, omega_half):
            omega[j] = omega[-j] = float(v)
        Omega = {}
        for j, v in Omega_half.items():
            Omega[j] = Omega[-j] = float(v)
        return cls(sites, omega, Omega, a_offset, j_star)

    def omega_vec(self):
        return tuple(self.omega[j] for j in self.sites.iplus)

    def sup_omega(self):
        return max(abs(v) for v in self.omega.values())

    def omega_dot_k(self, k):
        return sum(self.omega[j] * k[t] for t, j in enumerate(self.sites.sites))

    def normal_sites(self, index_bound=None):
        bound = self.j_max if index_bound is None else index_bound
        return sorted(j for j in self.Omega if 0 <= j <= bound)


class MelnikovParams:
    """Small-divisor threshold gamma, decay exponent tau, Fourier cutoff K.

    gamma = 0 is allowed as the degenerate no-threshold setting; tau must
    additionally exceed both n + 3 and the reciprocal of the Fourier
    exponent of any Toeplitz scale in play, which is context the caller
    checks via admissible_tau.
    """

    def __init__(self, gamma, tau, K):
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not (tau > 0 and math.isfinite(tau)):
            raise ValueError("tau must be positive and finite")
        if K < 1:
            raise ValueError("K must be at least 1")
        self.gamma = float(gamma)
        self.tau = float(tau)
        self.K = int(K)

    @staticmethod
    def admissible_tau(n, b):
        return max(n + 3.0, 1.0 / b)

    def threshold(self, h):
        return self.gamma * max(_l1(h), 1) ** (-self.tau)

    def strong_threshold(self, h):
        return self.gamma ** (2.0 / 3.0) * max(_l1(h), 1) ** (-self.tau)


class MelnikovReport:

    def __init__(self, passed, worst_condition, worst_indices, margin):
        self.passed = passed
        self.worst_condition = worst_condition
        self.worst_indices = worst_indices
        self.margin = margin

    def to_json(self):
        return {"pass": self.passed,
                "worst_condition": self.worst_condition,
                "worst_indices": list(self.worst_indices),
                "margin": self.margin}

    def __repr__(self):
        return ("MelnikovReport(passed=%r, worst_condition=%r, "
                "worst_indices=%r, margin=%r)"
                % (self.passed, self.worst_condition, self.worst_indices,
                   self.margin))


def _l1(h):
    return sum(abs(t) for t in h)


def reduce_k(sites, k):
    """Fold a full angle-exponent vector onto the positive half; the fold
    annihilates exactly the odd sublattice."""
    half = sites.half
    return tuple(k[t] + k[t + half] for t in range(half))


def melnikov_check(nf, mp, index_bound, strong=False):
    """Scan every divisor the homological solver may need and report the
    worst margin |divisor| - threshold."""
    if mp.K < 1 or index_bound < 1:
        raise ValueError("K and index_bound must be positive")
    if index_bound > nf.j_max:
        raise ValueError("index_bound exceeds the configured mode cutoff")
    half = nf.sites.half
    omega = [nf.omega[j] for j in nf.sites.iplus]
    js = nf.normal_sites(index_bound)
    worst = (None, (), math.inf)

    def consider(cond, indices, value, thr):
        nonlocal worst
        margin = abs(value) - thr
        if margin < worst[2]:
            worst = (cond, indices, margin)

    for h in itertools.product(range(-mp.K + 1, mp.K), repeat=half):
        if _l1(h) >= mp.K:
            continue
        oh = sum(w * t for w, t in zip(omega, h))
        thr = mp.threshold(h)
        if any(h):
            consider(COND_ZEROTH, (h,), oh, thr)
        for j in js:
            consider(COND_FIRST, (h, j), oh + nf.Omega[j], thr)
        for a, i in enumerate(js):
            for j in js[a:]:
                consider(COND_SECOND_PLUS, (h, i, j),
                         oh + nf.Omega[i] + nf.Omega[j], thr)
            for j in js[a + 1:]:
                consider(COND_SECOND_MINUS, (h, i, j),
                         oh - nf.Omega[i] + nf.Omega[j], thr)
            if any(h):
                consider(COND_SECOND_MINUS, (h, i, i), oh, thr)
        if strong:
            p_max = int(2 * nf.sup_omega() * mp.K)
            sthr = mp.strong_threshold(h)
            for p in range(-p_max, p_max + 1):
                if p == 0 and not any(h):
                    continue
                consider(COND_STRONG, (h, p), oh + p, sthr)
    return MelnikovReport(worst[2] >= 0.0, worst[0], worst[1], worst[2])


def resonant_average(R):
    """Angle-average projection: the constant angle components plus the
    x-independent same-site z and zbar diagonals."""
    out = fd.zero_like(R)
    for key, c in R.terms.items():
        (kind, site), k, i, a, b = key
        if any(k) or any(i):
            continue
        if kind == X_KIND and not a and not b:
            out.terms[key] = c
        elif kind == ZP_KIND and a == ((site, 1),) and not b:
            out.terms[key] = c
        elif kind == ZM_KIND and b == ((site, 1),) and not a:
            out.terms[key] = c
    return out


def normal_form_field(nf, k_max=0, deg_max=0, j_max=None):
    """The frame as a vector field: constant angle speeds and rotation of
    each normal mode pair at its elliptic frequency."""
    sites = nf.sites
    jm = nf.j_max if j_max is None else j_max
    X = Field(sites, k_max, deg_max, jm)
    for j in sites.sites:
        X.add_term((X_KIND, j), sites.zero_k, sites.zero_i, (), (),
                   nf.omega[j])
    for j in sorted(nf.Omega):
        if abs(j) > jm:
            continue
        X.add_term((ZP_KIND, j), sites.zero_k, sites.zero_i, ((j, 1),), (),
                   1j * nf.Omega[j])
        X.add_term((ZM_KIND, j), sites.zero_k, sites.zero_i, (), ((j, 1),),
                   -1j * nf.Omega[j])
    return X


def _signed_omegas(nf, key):
    """The elliptic-frequency contributions of a monomial's divisor, as
    (sign, site) pairs: +Omega per z leg, -Omega per zbar leg, and the
    component's own frequency with the opposite orientation."""
    (kind, site), k, i, a, b = key
    out = []
    for l, e in a:
        out.extend([(1, l)] * e)
    for l, e in b:
        out.extend([(-1, l)] * e)
    if kind == ZP_KIND:
        out.append((-1, site))
    elif kind == ZM_KIND:
        out.append((1, site))
    return out


def divisor(nf, key):
    """Divisor value, condition id, and report indices for one monomial."""
    comp, k, i, a, b = key
    h = reduce_k(nf.sites, k)
    val = nf.omega_dot_k(k)
    omegas = _signed_omegas(nf, key)
    for s, l in omegas:
        val += s * nf.Omega[l]
    if not omegas:
        return val, COND_ZEROTH, (h,)
    if len(omegas) == 1:
        return val, COND_FIRST, (h, abs(omegas[0][1]))
    if len(omegas) != 2:
        raise ValueError("divisor is defined for degree <= 0 monomials")
    (s1, l1), (s2, l2) = omegas
    idx = tuple(sorted((abs(l1), abs(l2))))
    cond = COND_SECOND_PLUS if s1 == s2 else COND_SECOND_MINUS
    return val, cond, (h,) + idx


def _resonance_class(sites, key):
    """Monomial classes whose divisor vanishes identically on symmetric
    reversible data; their coefficients must already be (numerically) zero
    once the resonant average is removed."""
    (kind, site), k, i, a, b = key
    if not fd.k_is_odd_lattice(sites, k):
        return None
    if kind == X_KIND:
        return "angle_resonant"
    if kind == Y_KIND and not a and not b:
        return "action_resonant"
    if kind == ZP_KIND and not any(i) and not b \
            and a in (((site, 1),), ((-site, 1),)):
        return "z_diagonal_resonant"
    if kind == ZM_KIND and not any(i) and not a \
            and b in (((site, 1),), ((-site, 1),)):
        return "z_diagonal_resonant"
    return None


def _check_admissible(R, K, tol):
    scale = fd.sup_coeff(R)
    bar = tol * max(scale, 1.0)
    sym = fd.max_coeff_diff(fd.symmetrize(R), R)
    if sym > bar:
        raise StructureViolationError(
            "field is not fixed by symmetrization (defect %.3e)" % sym)
    rev = fd.reversibility_defect(R)
    if rev > bar:
        raise StructureViolationError(
            "field is not reversible (defect %.3e)" % rev)
    for key in R.terms:
        comp, k, i, a, b = key
        if fd.degree(comp, i, a, b) > 0:
            raise StructureViolationError(
                "field has degree > 0 monomials")
        if fd.fourier_size(k) >= K:
            raise StructureViolationError(
                "field is not Fourier-truncated below K=%d" % K)
        if abs(fd.momentum(R.sites, comp, k, a, b)) >= K:
            raise StructureViolationError(
                "field is not momentum-truncated below K=%d" % K)
    return scale


def solve_homological(nf, R, mp, tol=1e-9):
    """Invert the adjoint of the frame field on the nonresonant part of R.

    Preconditions (checked): R is fixed by symmetrization, reversible,
    degree at most zero, and truncated below the Fourier/momentum cutoff K.
    Resonance classes with identically vanishing divisor must carry
    coefficients that are zero up to tol times the coefficient scale; any
    divisor smaller than the configured threshold aborts.
    """
    if R.sites != nf.sites:
        raise ValueError("field and normal form disagree on tangential sites")
    scale = _check_admissible(R, mp.K, tol)
    target = fd.add(R, resonant_average(R), -1.0)
    F = fd.zero_like(R)
    for key, c in target.terms.items():
        cls = _resonance_class(R.sites, key)
        if cls is not None:
            if abs(c) > tol * max(scale, 1.0):
                raise StructureViolationError(
                    "%s monomial with nonzero coefficient %r" % (cls, key))
            continue
        val, cond, indices = divisor(nf, key)
        thr = mp.threshold(indices[0])
        if abs(val) < thr:
            raise DivisorTooSmallError(
                "divisor %.6e below threshold %.6e" % (val, thr),
                condition=cond, indices=indices, value=val, threshold=thr)
        F.terms[key] = c / (1j * val)
    return F


def solve_norm_factor(mp):
    """Worst-case coefficient amplification of the solver."""
    return mp.K ** mp.tau / mp.gamma


def qt_solve_factor(mp, c_hat=10.0):
    """Sound amplification factor for the quasi-Toeplitz norm estimate."""
    return 4.0 * c_hat * mp.K ** (2.0 * mp.tau) / mp.gamma


def qt_min_scale(nf, mp, tparams, c_hat=10.0):
    """Smallest Toeplitz scale at which the solver's quasi-Toeplitz
    estimate is claimed; below it the defect part is not controlled."""
    return max(tparams.N0, nf.j_star,
               c_hat * mp.gamma ** (-1.0 / 3.0) * mp.K ** (mp.tau + 1.0))
