"""Wave-equation instance: the cubic field in complex modes and its
first normalization step.

The scalar model is y_tt - y_xx + m y = y (y_x)^2 on the circle.  In the
complex modes u_j = (D y -+ i y_t)/sqrt2, D = sqrt(-dxx + m), the equation
becomes a diagonal rotation with frequencies lambda_j = sqrt(j^2 + m) plus
a cubic vector field with zero momentum.  This module builds that cubic
field, removes its nonresonant part by one coordinate change (exactly, with
a machine-checked residual), scans the quadruple divisors for a uniform
lower bound, pushes fields to action-angle variables around a torus of
prescribed amplitudes, and extracts the first-order frequency and twist
data used by the iteration and the measure estimates.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import fields as fd
from . import norms
from .errors import ZeroDivisorError
from .fields import Field, TangentialSites, X_KIND, Y_KIND, ZP_KIND, ZM_KIND
from .normalform import NormalForm


class FrequencyModel:
    """Dispersion relation of the linearized equation with mass m > 0."""

    def __init__(self, m):
        m = float(m)
        if not (m > 0 and math.isfinite(m)):
            raise ValueError("mass must be positive and finite")
        self.m = m

    def lam(self, j):
        return math.sqrt(j * j + self.m)

    def __repr__(self):
        return "FrequencyModel(m=%r)" % (self.m,)


def oscillator_field(fm, j_max):
    """Linear rotation sum_j i lambda_j u_j d/du_j - conj, complex frame."""
    frame = TangentialSites.none()
    X = Field(frame, 0, 0, j_max)
    for j in range(-j_max, j_max + 1):
        lj = fm.lam(j)
        X.add_term((ZP_KIND, j), (), (), ((j, 1),), (), 1j * lj)
        X.add_term((ZM_KIND, j), (), (), (), ((j, 1),), -1j * lj)
    return X


def cubic_coefficient(fm, sigma, j):
    """Weight of one ordered mode triple in the cubic nonlinearity.

    The second and third slots carry the two space derivatives; the first
    slot is the plain factor.
    """
    s1, s2, s3 = sigma
    j1, j2, j3 = j
    return 0.25 * s2 * s3 * j2 * j3 / (fm.lam(j1) * fm.lam(j2) * fm.lam(j3))


def cubic_field(fm, sites, j_max, min_tangential=0):
    """Cubic part of the equation in the complex frame, modes up to j_max.

    Ordered triples accumulate into sparse monomials; every stored term has
    zero momentum by construction.  min_tangential keeps only monomials with
    at least that many legs on the tangential sites, which is exactly the
    part that can contribute to degree <= 0 after the action-angle change
    when min_tangential = 2.
    """
    if j_max < sites.kappa + 2:
        raise ValueError("mode cutoff %d too small for tangential sites %r"
                         % (j_max, sites.iplus))
    frame = TangentialSites.none()
    X = Field(frame, 0, 2, j_max)
    lam = {j: fm.lam(j) for j in range(-j_max, j_max + 1)}
    modes = [(s, j) for s in (1, -1) for j in range(-j_max, j_max + 1)]
    if min_tangential:
        tang = [sj for sj in modes if sites.is_tangential(sj[1])]
        rest = [sj for sj in modes if not sites.is_tangential(sj[1])]
        pools = [tuple(tang if t else rest for t in pat)
                 for pat in itertools.product((True, False), repeat=3)
                 if sum(pat) >= min_tangential]
    else:
        pools = [(modes, modes, modes)]
    for p1, p2, p3 in pools:
        for s1, j1 in p1:
            l1 = lam[j1]
            for s2, j2 in p2:
                if j2 == 0:
                    continue
                m12 = s1 * j1 + s2 * j2
                w12 = 0.25 * s2 * j2 / (l1 * lam[j2])
                for s3, j3 in p3:
                    if j3 == 0:
                        continue
                    tot = m12 + s3 * j3
                    if abs(tot) > j_max:
                        continue
                    base = w12 * s3 * j3 / lam[j3]
                    pa, pb = {}, {}
                    for s, j in ((s1, j1), (s2, j2), (s3, j3)):
                        d = pa if s > 0 else pb
                        d[j] = d.get(j, 0) + 1
                    alpha = tuple(sorted(pa.items()))
                    beta = tuple(sorted(pb.items()))
                    for s in (1, -1):
                        comp = (ZP_KIND if s > 0 else ZM_KIND, s * tot)
                        X.add_term(comp, (), (), alpha, beta, 1j * s * base)
    return X


def _signed_counts(key):
    """Per-site signed leg exponents including the reversed component."""
    (kind, jc), _, _, a, b = key
    counts = {}
    for s, e in a:
        counts[s] = counts.get(s, 0) + e
    for s, e in b:
        counts[s] = counts.get(s, 0) - e
    counts[jc] = counts.get(jc, 0) - (1 if kind == ZP_KIND else -1)
    return counts


def _divisor_of(fm, key):
    (kind, jc), _, _, a, b = key
    d = sum(e * fm.lam(s) for s, e in a) - sum(e * fm.lam(s) for s, e in b)
    return d - (1 if kind == ZP_KIND else -1) * fm.lam(jc)


def birkhoff_step(fm, sites, j_max, zero_divisor_tol=1e-9, norm_params=None):
    """One exact normalization step of the cubic field.

    Splits the cubic field G into the resonant part G1 touching the
    tangential sites, the part G2 supported entirely off them, and a
    removable remainder killed by the flow of F, where F solves
    [oscillator, F] = -(G - G1 - G2) monomial by monomial.  Monomials are
    resonant exactly when their signed leg exponents cancel site by site;
    a nonresonant divisor below zero_divisor_tol means the mass is bad and
    raises instead of producing a huge coefficient.
    """
    G = cubic_field(fm, sites, j_max)
    F = fd.zero_like(G)
    G1 = fd.zero_like(G)
    G2 = fd.zero_like(G)
    for key, c in G.terms.items():
        (kind, jc), _, _, a, b = key
        outside = not sites.is_tangential(jc) and all(
            not sites.is_tangential(s) for s, _ in itertools.chain(a, b))
        if outside:
            G2.terms[key] = c
            continue
        if all(v == 0 for v in _signed_counts(key).values()):
            G1.terms[key] = c
            continue
        d = _divisor_of(fm, key)
        if abs(d) < zero_divisor_tol:
            raise ZeroDivisorError(
                "nonresonant divisor %.3e below %g at %r; mass %g is "
                "resonant at this cutoff" % (d, zero_divisor_tol, key, fm.m))
        F.terms[key] = c / (1j * d)
    resid = fd.commutator(oscillator_field(fm, j_max), F)
    resid = fd.add(resid, G)
    resid = fd.add(resid, G1, -1.0)
    resid = fd.add(resid, G2, -1.0)
    if norm_params is None:
        norm_params = norms.NormParams(1.0, 0.5)
    return {"F": F, "G1": G1, "G2": G2,
            "residual_norm": norms.upper_norm(resid, norm_params)}


def divisor_bound_check(fm, J_range):
    """Scaled lower bound on nonresonant quadruple divisors up to J_range.

    Scans all signed quadruples with zero momentum, drops the ones made of
    two conjugate pairs (whose divisor vanishes identically), and returns
    the minimum of |sum sigma_i lambda_{j_i}| * (n0^2 + m)^{3/2} / m where
    n0 is the smallest of the four mode sizes clamped below by 1, together
    with the quadruple attaining it.
    """
    m = fm.m
    js = np.arange(-J_range, J_range + 1)
    j1, j2, j3 = np.meshgrid(js, js, js, indexing="ij")
    f1, f2, f3 = (j.astype(float) for j in (j1, j2, j3))
    l1 = np.sqrt(f1 * f1 + m)
    l2 = np.sqrt(f2 * f2 + m)
    l3 = np.sqrt(f3 * f3 + m)
    n123 = np.minimum(np.minimum(np.maximum(np.abs(j1), 1),
                                 np.maximum(np.abs(j2), 1)),
                      np.maximum(np.abs(j3), 1))
    best = None
    for s1, s2, s3, s4 in itertools.product((1, -1), repeat=4):
        j4 = -s4 * (s1 * j1 + s2 * j2 + s3 * j3)
        a4 = np.abs(j4)
        mask = a4 <= J_range
        if s2 == -s1 and s4 == -s3:
            mask &= ~((j1 == j2) & (j3 == j4))
        if s3 == -s1 and s4 == -s2:
            mask &= ~((j1 == j3) & (j2 == j4))
        if s4 == -s1 and s3 == -s2:
            mask &= ~((j1 == j4) & (j2 == j3))
        if not mask.any():
            continue
        f4 = a4.astype(float)
        div = np.abs(s1 * l1 + s2 * l2 + s3 * l3
                     + s4 * np.sqrt(f4 * f4 + m))
        n0 = np.minimum(n123, np.maximum(a4, 1)).astype(float)
        scaled = div * (n0 * n0 + m) ** 1.5 / m
        scaled[~mask] = np.inf
        idx = int(np.argmin(scaled))
        val = float(scaled.flat[idx])
        if best is None or val < best[0]:
            t = np.unravel_index(idx, scaled.shape)
            best = (val, ((s1, int(j1[t])), (s2, int(j2[t])),
                          (s3, int(j3[t])), (s4, int(j4[t]))))
    return {"min_scaled": best[0], "witness": best[1]}


# ---------------------------------------------------------------------------
# action-angle frame


def _gen_binom(nu, t):
    out = 1.0
    for r in range(t):
        out *= nu - r
    return out / math.factorial(t)


def _push_term(out, amp, comp_out, coeff, tp, tq, adjust_site, sc, shift,
               an, bn, y_order):
    """Insert one complex-mode monomial rewritten in action-angle form.

    tp/tq hold the tangential leg exponents; adjust_site divides out
    (shift < 0) or multiplies in (shift > 0) one mode factor of sign sc at
    that site, which is how the angle and action components of a tangential
    target arise.  The radial factors (xi + y)^nu expand through y^y_order
    with generalized binomials; integer nu terminates exactly.
    """
    sites = out.sites
    active = sorted(set(tp) | set(tq)
                    | ({adjust_site} if adjust_site is not None else set()))
    k = list(sites.zero_k)
    rows = []
    for l in active:
        p = tp.get(l, 0)
        q = tq.get(l, 0)
        if l == adjust_site:
            if shift < 0:
                if sc > 0:
                    p -= 1
                else:
                    q -= 1
            elif sc > 0:
                q += 1
            else:
                p += 1
        k[sites.index(l)] = p - q
        nu = 0.5 * (p + q)
        row = []
        for t in range(y_order + 1):
            cb = _gen_binom(nu, t)
            if cb != 0.0:
                row.append((l, t, cb * amp[l] ** (nu - t)))
            if nu == t:
                break
        rows.append(row)
    k = tuple(k)
    for pick in itertools.product(*rows):
        i = list(sites.zero_i)
        f = coeff
        for l, t, w in pick:
            if t:
                i[sites.index(l)] = t
            f *= w
        out.add_term(comp_out, k, tuple(i), an, bn, f)


def action_angle_pushforward(X, xi, y_order=2, k_max=None, deg_max=None):
    """Rewrite a complex-mode field around the torus |u_j|^2 = xi_j.

    xi maps positive sites to torus amplitudes; modes on those sites and
    their mirrors become angle/action pairs via u_j = sqrt(xi + y_j)
    e^{+-i x_j}, every other mode stays a normal variable.  Output terms
    falling outside the requested cutoffs are dropped at insertion, so the
    cutoffs double as the truncation order of the radial expansions.
    """
    if X.sites.n != 0:
        raise ValueError("expected a field in the complex-mode frame")
    if not xi:
        raise ValueError("need at least one tangential amplitude")
    sites = TangentialSites(tuple(sorted(xi)))
    amp = {}
    for j in sites.iplus:
        v = float(xi[j])
        if v <= 0:
            raise ValueError("torus amplitudes must be positive")
        amp[j] = amp[-j] = v
    if y_order < 1:
        raise ValueError("y_order must be at least 1")
    if k_max is None:
        k_max = X.deg_max + 2
    if deg_max is None:
        deg_max = y_order * (X.deg_max + 1)
    out = Field(sites, k_max, deg_max, X.j_max)
    for (comp, _, _, a, b), c in X.terms.items():
        kind, jc = comp
        sc = 1 if kind == ZP_KIND else -1
        tp, tq = {}, {}
        an, bn = [], []
        for s, e in a:
            if sites.is_tangential(s):
                tp[s] = e
            else:
                an.append((s, e))
        for s, e in b:
            if sites.is_tangential(s):
                tq[s] = e
            else:
                bn.append((s, e))
        an = tuple(an)
        bn = tuple(bn)
        if sites.is_tangential(jc):
            _push_term(out, amp, (X_KIND, jc), -0.5j * sc * c, tp, tq,
                       jc, sc, -1, an, bn, y_order)
            _push_term(out, amp, (Y_KIND, jc), c, tp, tq,
                       jc, sc, +1, an, bn, y_order)
        else:
            _push_term(out, amp, comp, c, tp, tq,
                       None, 0, 0, an, bn, y_order)
    return out


# ---------------------------------------------------------------------------
# first-order frequency data


def frequency_map(fm, sites, xi, j_max=64, convention="full", j_star=1):
    """First-order frequencies of the torus with amplitudes xi.

    The resonant cubic part shifts the angle frequency at a tangential site
    j by (j^2/4 lambda_j^3) xi_j minus a correction sum_{i>0 tangential}
    (i^2/lambda_i^2 lambda_j) xi_i, and every elliptic frequency by the
    same correction; this is the x- and z-diagonal average of its
    action-angle pushforward.  convention='positive_half' halves the
    correction instead, the reading in which the twist matrix of
    twist_data is the exact Jacobian d omega / d xi.
    """
    if set(xi) != set(sites.iplus):
        raise ValueError("xi must be indexed by the positive tangential sites")
    amp = {j: float(xi[j]) for j in sites.iplus}
    if any(v < 0 for v in amp.values()):
        raise ValueError("amplitudes must be nonnegative")
    if convention == "full":
        w = 1.0
    elif convention == "positive_half":
        w = 0.5
    else:
        raise ValueError("unknown convention %r" % (convention,))
    if j_max <= sites.kappa:
        raise ValueError("frequency table depth %d below top tangential site"
                         % (j_max,))
    shift = w * sum(j * j * amp[j] / fm.lam(j) ** 2 for j in sites.iplus)
    omega_half = [fm.lam(j) + 0.25 * j * j * amp[j] / fm.lam(j) ** 3
                  - shift / fm.lam(j) for j in sites.iplus]
    Omega_half = {j: fm.lam(j) - shift / fm.lam(j)
                  for j in range(0, j_max + 1) if not sites.is_tangential(j)}
    return NormalForm.from_half(sites, omega_half, Omega_half,
                                a_offset=0.0, j_star=j_star)


@dataclass(frozen=True)
class TwistData:
    iplus: tuple
    A: np.ndarray
    a_vec: np.ndarray
    A_inv: np.ndarray
    check_vec: np.ndarray


def twist_data(fm, sites):
    """Amplitude-to-frequency twist matrix, its inverse, and the vector
    steering the elliptic shifts.

    A[j, i] = (delta_ij - 2) i^2 / (4 lambda_i^2 lambda_j) over positive
    tangential sites; a_vec_i = -i^2 / (2 lambda_i^2) so the elliptic
    shift is lambda_j^{-1} a_vec . xi.  The closed-form inverse uses the
    rank-one structure and is checked against numerical inversion;
    check_vec = (A^T)^{-1} a_vec comes out proportional to the linear
    frequencies, which is what the nondegeneracy scan leans on.
    """
    iplus = sites.iplus
    h = len(iplus)
    lamv = np.array([fm.lam(j) for j in iplus])
    col = np.array([float(j * j) for j in iplus]) / lamv ** 2
    A = 0.25 * (np.eye(h) - 2.0) * col[None, :] / lamv[:, None]
    a_vec = -0.5 * col
    n = sites.n
    A_inv = (4.0 * (np.eye(h) - (2.0 / (n - 1)) * np.ones((h, h)))
             * lamv[None, :] / col[:, None])
    num = np.linalg.inv(A)
    scale = max(1.0, float(np.abs(A_inv).max()))
    err = float(np.abs(A_inv - num).max())
    assert err <= 1e-10 * scale, \
        "closed-form inverse disagrees with numerical inverse: %.3e" % err
    check_vec = np.linalg.solve(A.T, a_vec)
    return TwistData(iplus, A, a_vec, A_inv, check_vec)


def nondegeneracy_report(fm, sites, bound=30):
    """Distance of the scaled twist vectors from nonzero integer vectors.

    For normal mode sizes i, j up to the bound, the vectors
    (1/lambda_j) check_vec and (1/lambda_i +- 1/lambda_j) check_vec must
    avoid the nonzero integer lattice; this reports the smallest max-norm
    distance seen and where, without asserting anything.
    """
    v = twist_data(fm, sites).check_vec
    normals = [j for j in range(0, bound + 1) if not sites.is_tangential(j)]
    best = None

    def consider(family, i, j, mu):
        nonlocal best
        w = mu * v
        rounded = np.round(w)
        if not rounded.any():
            return
        dist = float(np.abs(w - rounded).max())
        if best is None or dist < best[0]:
            best = (dist, family, i, j)

    for j in normals:
        consider("single", None, j, 1.0 / fm.lam(j))
    for ti, i in enumerate(normals):
        for j in normals[ti:]:
            consider("sum", i, j, 1.0 / fm.lam(i) + 1.0 / fm.lam(j))
            if j > i:
                consider("difference", i, j, 1.0 / fm.lam(i) - 1.0 / fm.lam(j))
    return {"min_distance": best[0],
            "witness": {"family": best[1], "i": best[2], "j": best[3]},
            "bound": bound}
