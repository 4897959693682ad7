"""One step and one run of the reversible KAM iteration.

The state couples a diagonal frame (angle speeds over the tangential sites,
elliptic frequencies over the normal ones) with a symmetrized reversible
remainder.  A step checks the small-divisor margins below a Fourier cutoff,
conjugates by the time-one flow of the solved field so the low remainder
block is pushed to second order, absorbs the resonant averages into
corrected frequencies, and reads the constant part of the normal-frequency
correction off the high-mode Toeplitz diagonal.  The iteration threads
shrinking analyticity widths and growing cutoffs through a geometric
schedule and records one trace row per step.
"""

import csv
import math

import numpy as np

from . import fields as fd
from . import norms as nm
from . import toeplitz as tz
from .birkhoff import cubic_field, action_angle_pushforward
from .errors import (CutoffOverflowError, DegenerateFitError,
                     DivisorTooSmallError, MelnikovFailError,
                     StructureViolationError)
from .fields import TangentialSites
from .normalform import (MelnikovParams, NormalForm, melnikov_check,
                         normal_form_field, resonant_average,
                         solve_homological)

# construction-time structure tolerance and the exactness bar for the
# homological residual, both relative to the coefficient scale
STATE_CHECK_TOL = 1e-9
RESIDUAL_TOL = 1e-12


class KamState:
    """Frame plus remainder, with the norm, Toeplitz, and divisor
    parameters the iteration threads along.

    The remainder must be fixed by symmetrization and reversible up to
    check_tol times its coefficient scale; both are verified here so every
    step starts from structured data.
    """

    def __init__(self, nf, R, nparams, tparams, mp, xi,
                 check_tol=STATE_CHECK_TOL):
        if R.sites != nf.sites:
            raise ValueError("remainder and frame disagree on tangential "
                             "sites")
        if set(xi) != set(nf.sites.iplus):
            raise ValueError("xi must assign an amplitude to each positive "
                             "tangential site")
        if any(not v > 0 for v in xi.values()):
            raise ValueError("amplitudes must be positive")
        scale = max(1.0, fd.sup_coeff(R))
        sym = fd.max_coeff_diff(fd.symmetrize(R), R)
        if sym > check_tol * scale:
            raise StructureViolationError(
                "remainder is not fixed by symmetrization (defect %.3e)"
                % sym)
        rev = fd.reversibility_defect(R)
        if rev > check_tol * scale:
            raise StructureViolationError(
                "remainder is not reversible (defect %.3e)" % rev)
        self.nf = nf
        self.R = R
        self.nparams = nparams
        self.tparams = tparams
        self.mp = mp
        self.xi = {int(j): float(v) for j, v in xi.items()}


class FrequencyCorrection:
    """Real mirror-symmetric corrections produced by one step: angle
    speeds, normal frequencies, and the Toeplitz constant of the latter."""

    def __init__(self, omega_hat, Omega_hat, a_hat):
        self.omega_hat = {int(j): float(v) for j, v in omega_hat.items()}
        self.Omega_hat = {int(j): float(v) for j, v in Omega_hat.items()}
        self.a_hat = float(a_hat)
        for d in (self.omega_hat, self.Omega_hat):
            for j, v in d.items():
                if d.get(-j) != v:
                    raise ValueError("corrections must be mirror-symmetric")


def prepare_wave_state(fm, xi, j_max, nparams, tparams, mp, *,
                       min_tangential=0, y_order=2, k_max=4, deg_max=2,
                       j_star=None, tol=STATE_CHECK_TOL):
    """Initial state for the wave model at amplitude xi.

    The remainder is the symmetrized action-angle pushforward of the cubic
    part of the model field; the frame starts at the unperturbed dispersion
    frequencies, so the first step's resonant averages reproduce the
    amplitude-frequency map.
    """
    sites = TangentialSites(tuple(sorted(xi)))
    G = cubic_field(fm, sites, j_max, min_tangential=min_tangential)
    R = fd.symmetrize(action_angle_pushforward(G, xi, y_order=y_order,
                                               k_max=k_max, deg_max=deg_max))
    omega_half = [fm.lam(i) for i in sites.iplus]
    Omega_half = {j: fm.lam(j) for j in range(j_max + 1)
                  if not sites.is_tangential(j)}
    star = sites.kappa + 1 if j_star is None else j_star
    nf = NormalForm.from_half(sites, omega_half, Omega_half, 0.0, star)
    return KamState(nf, R, nparams, tparams, mp, dict(xi), check_tol=tol)


def _diag_value(avg, bar):
    """Mirror- and conjugation-consistent normal diagonal averages of the
    angle-average field, as {|site|: Omega correction}."""
    raw = {}
    for key, c in avg.terms.items():
        kind, site = key[0]
        if kind == fd.X_KIND:
            continue
        # the pair rotates as (i Omega, -i Omega) on (z, zbar), so the
        # conjugate slot carries the opposite sign
        w = c / 1j if kind == fd.ZP_KIND else -(c / 1j)
        if abs(w.imag) > bar:
            raise StructureViolationError(
                "normal diagonal average at site %d is not i times a real "
                "number (%.3e)" % (site, abs(w.imag)))
        raw.setdefault(abs(site), {})[(kind, site)] = w.real
    out = {}
    for aj, vals in raw.items():
        lo, hi = min(vals.values()), max(vals.values())
        if hi - lo > bar:
            raise StructureViolationError(
                "normal diagonal averages at |site|=%d disagree across "
                "mirror/conjugate slots (%.3e)" % (aj, hi - lo))
        for probe in ((fd.ZP_KIND, aj), (fd.ZM_KIND, aj),
                      (fd.ZP_KIND, -aj), (fd.ZM_KIND, -aj)):
            if probe in vals:
                out[aj] = vals[probe]
                break
    return out


def _toeplitz_constant(R, tparams, bar):
    """Midpoint of the plain degree-zero diagonal above the largest
    admissible Toeplitz scale.

    Returns (constant, window size, spread); the window is empty when the
    mode cutoff leaves no scale >= N0, in which case the constant is zero.
    """
    N = int(math.floor((R.j_max - 1) / tparams.theta))
    if N < tparams.N0:
        return 0.0, 0, 0.0
    D = fd.project(fd.project(R, "degree_equals", 0), "diag")
    groups = tz.diagonal_groups(D, N, tparams)
    gkey = (1, 1, 1, 0, R.sites.zero_k, R.sites.zero_i, (), ())
    entries = groups.get(gkey)
    if not entries:
        return 0.0, 0, 0.0
    vals = []
    for _, _, c in entries:
        w = c / 1j
        if abs(w.imag) > bar:
            raise StructureViolationError(
                "Toeplitz diagonal entry is not i times a real number "
                "(%.3e)" % abs(w.imag))
        vals.append(w.real)
    lo, hi = min(vals), max(vals)
    return (lo + hi) / 2.0, len(vals), hi - lo


def kam_step(state, K, next_nparams=None, next_tparams=None,
             tol=STATE_CHECK_TOL, lie_order=None, block="deg_le0"):
    """One conjugation step at Fourier/momentum cutoff K.

    Verifies the divisor margins, solves the homological equation on the
    degree <= 0 block truncated below K, flows the frame plus remainder
    along the solved field, and splits the result into a corrected frame
    and the next remainder.  Returns a record with the advanced state, the
    frequency correction, and the conjugating field.

    block="y_deg_m1" restricts the removed block to the degree -1 action
    components; this is the preliminary averaging sub-step and produces no
    frequency correction.
    """
    nf, R = state.nf, state.R
    sites = nf.sites
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > fd.HARD_LIMITS["k_max"]:
        raise CutoffOverflowError(
            "step cutoff K=%d exceeds the hard Fourier limit %d"
            % (K, fd.HARD_LIMITS["k_max"]))
    mpk = MelnikovParams(state.mp.gamma, state.mp.tau, K)
    rep = melnikov_check(nf, mpk, index_bound=nf.j_max)
    if not rep.passed:
        raise MelnikovFailError(
            "divisor margins fail at K=%d (%s %r margin %.3e)"
            % (K, rep.worst_condition, rep.worst_indices, rep.margin),
            report=rep)

    scale = max(1.0, fd.sup_coeff(R))
    bar = tol * scale
    rk = fd.project(fd.project(fd.project(R, "degree_le0"),
                               "fourier_below", K), "momentum_below", K)
    if block == "y_deg_m1":
        keep = fd.project(rk, "degree_equals", -1)
        rk = fd.zero_like(rk)
        for key, c in keep.terms.items():
            if key[0][0] == fd.Y_KIND:
                rk.terms[key] = c
    elif block != "deg_le0":
        raise ValueError("block must be 'deg_le0' or 'y_deg_m1'")
    avg = resonant_average(rk)

    omega_hat = {}
    for j in sites.iplus:
        cp = avg.terms.get(((fd.X_KIND, j), sites.zero_k, sites.zero_i,
                            (), ()), 0j)
        cm = avg.terms.get(((fd.X_KIND, -j), sites.zero_k, sites.zero_i,
                            (), ()), 0j)
        if max(abs(cp.imag), abs(cm.imag)) > bar:
            raise StructureViolationError(
                "angle-speed average at site %d is not real" % j)
        if abs(cp - cm) > bar:
            raise StructureViolationError(
                "angle-speed averages at sites %d, %d are not mirror-equal"
                % (j, -j))
        omega_hat[j] = omega_hat[-j] = cp.real
    half_Omega = _diag_value(avg, bar)
    Omega_hat = {}
    for aj, v in half_Omega.items():
        Omega_hat[aj] = Omega_hat[-aj] = v

    F = solve_homological(nf, rk, mpk, tol)
    nfield = normal_form_field(nf, 0, 0, j_max=R.j_max)
    resid = fd.add(fd.commutator(F, nfield), fd.add(rk, avg, -1.0), -1.0)
    if fd.sup_coeff(resid) > RESIDUAL_TOL * scale:
        raise StructureViolationError(
            "homological residual %.3e exceeds %.3e"
            % (fd.sup_coeff(resid), RESIDUAL_TOL * scale))

    order = (max(2, int(round(math.log(state.tparams.N0))))
             if lie_order is None else int(lie_order))
    xplus = fd.symmetrize(fd.lie_series(fd.add(R, nfield), F, order))

    # the preliminary action block carries no diagonal, so no constant
    a_hat, window, spread = ((0.0, 0, 0.0) if block == "y_deg_m1"
                             else _toeplitz_constant(R, state.tparams, bar))
    omega_new = {j: nf.omega[j] + omega_hat[j] for j in sites.sites}
    Omega_new = {j: v + Omega_hat.get(j, 0.0) for j, v in nf.Omega.items()}
    nf_next = NormalForm(sites, omega_new, Omega_new,
                         nf.a_offset + a_hat, nf.j_star)
    rplus = fd.add(xplus, normal_form_field(nf_next, 0, 0, j_max=R.j_max),
                   -1.0)
    state_next = KamState(nf_next, rplus,
                          state.nparams if next_nparams is None
                          else next_nparams,
                          state.tparams if next_tparams is None
                          else next_tparams,
                          state.mp, state.xi,
                          check_tol=max(tol, STATE_CHECK_TOL))
    corr = FrequencyCorrection(omega_hat, Omega_hat, a_hat)
    return {"state_next": state_next, "corr": corr, "F": F,
            "melnikov": rep, "lie_order": order,
            "a_hat_window": window, "a_hat_spread": spread}


def preliminary_average_step(state, tol=STATE_CHECK_TOL, lie_order=None):
    """Averaging prestep on the degree -1 action block.

    The cutoff gamma**(-1/(7n)) keeps the unresolved angle tail below the
    threshold scale; the frame is unchanged because the block carries no
    resonant average on reversible data.
    """
    n = state.nf.sites.n
    g = state.mp.gamma
    K = 1 if g == 0 else max(1, int(round(g ** (-1.0 / (7.0 * n)))))
    return kam_step(state, K, tol=tol, lie_order=lie_order, block="y_deg_m1")


class KamSchedule:
    """Geometric run of the per-step parameters.

    Analyticity widths and the momentum weight shrink toward half their
    starting values (losing a quarter of the remaining headroom per step),
    the Toeplitz angle grows toward 3/2 of its start, the linear-class
    weight decreases toward the midpoint of one and its start, the Toeplitz
    scale multiplies by 2**rho per step, and the Fourier cutoff grows
    fourfold per step.  rho defaults to the convergence-forced exponent
    max(2(tau+1), 1/(L-b), 1/(1-L)).  The Lie-series order is the usual
    log of the Toeplitz scale but capped, since past a handful of brackets
    the contributions sit below roundoff while the cost keeps growing.
    """

    def __init__(self, nparams, tparams, tau, K0=1.0, rho=None, lie_cap=6):
        if tparams.theta * 1.5 >= 6.0:
            raise ValueError("theta would leave (1, 6) along the schedule")
        self.nparams0 = nparams
        self.tparams0 = tparams
        self.tau = float(tau)
        self.K0 = float(K0)
        if rho is None:
            rho = max(2.0 * (tau + 1.0), 1.0 / (tparams.L - tparams.b),
                      1.0 / (1.0 - tparams.L))
        self.rho = float(rho)
        self.lie_cap = int(lie_cap)

    @classmethod
    def from_state(cls, state, K0=1.0, rho=None, lie_cap=6):
        return cls(state.nparams, state.tparams, state.mp.tau, K0, rho,
                   lie_cap)

    @staticmethod
    def _f(nu):
        return 0.5 * (1.0 + 2.0 ** (-float(nu)))

    def K_at(self, nu):
        return max(1, int(round(self.K0 * 4.0 ** nu)))

    def N0_at(self, nu):
        return int(math.ceil(self.tparams0.N0 * 2.0 ** (nu * self.rho)))

    def nparams_at(self, nu):
        f = self._f(nu)
        b = self.nparams0
        return nm.NormParams(b.s * f, b.r * f, b.a_space, b.p, b.a_mom * f)

    def tparams_at(self, nu):
        f = self._f(nu)
        b = self.tparams0
        return tz.ToeplitzParams(self.N0_at(nu), b.theta * (2.0 - f),
                                 1.0 + (b.mu - 1.0) * f, b.b, b.L, b.kappa)

    def lie_order_at(self, nu):
        return min(self.lie_cap,
                   max(2, int(round(math.log(self.N0_at(nu))))))


class KamTrace:
    """Per-step schedule values, block norms, and corrections."""

    COLUMNS = ("nu", "K", "s", "r", "a_mom", "N0", "theta", "mu",
               "eps_m1", "eps_0", "Theta", "omega_hat", "Omega_hat_sample",
               "a_hat")

    def __init__(self, rows, stop_reason=None, final_state=None):
        self.rows = list(rows)
        self.stop_reason = stop_reason
        self.final_state = final_state

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                out = []
                for col in self.COLUMNS:
                    v = row.get(col)
                    if col == "omega_hat" and v is not None:
                        v = ";".join("%.17g" % x for x in v)
                    out.append("" if v is None else v)
                writer.writerow(out)

    def fit_superexponential(self, chi=1.25):
        """Slope of log eps_0 against chi**nu; decisively negative slopes
        mean faster-than-exponential decay of the low block."""
        pts = [(chi ** row["nu"], math.log(row["eps_0"]))
               for row in self.rows if row.get("eps_0", 0.0) > 0.0]
        if len(pts) < 2:
            raise DegenerateFitError(
                "need at least two steps with positive block norm")
        xs, ys = zip(*pts)
        slope, intercept = np.polyfit(xs, ys, 1)
        return {"chi": float(chi), "slope": float(slope),
                "intercept": float(intercept)}


def kam_iterate(state0, steps, schedule=None, tol=STATE_CHECK_TOL):
    """Run up to the given number of steps along the schedule.

    Each row records the schedule values and block norms entering the step
    plus the corrections it produced.  Divisor failures and cutoff
    overflows stop the run early with a structured reason instead of
    raising.
    """
    sched = KamSchedule.from_state(state0) if schedule is None else schedule
    state = state0
    rows = []
    stop = None
    for nu in range(steps):
        g = state.mp.gamma or 1.0
        r0 = fd.project(state.R, "degree_equals", 0)
        row = {"nu": nu, "K": sched.K_at(nu),
               "s": state.nparams.s, "r": state.nparams.r,
               "a_mom": state.nparams.a_mom, "N0": state.tparams.N0,
               "theta": state.tparams.theta, "mu": state.tparams.mu,
               "eps_m1": nm.upper_norm(
                   fd.project(state.R, "degree_equals", -1),
                   state.nparams) / g,
               "eps_0": nm.upper_norm(r0, state.nparams) / g,
               "Theta": tz.qt_norm_estimate(r0, state.nparams,
                                            state.tparams,
                                            [state.tparams.N0]) / g}
        try:
            rec = kam_step(state, sched.K_at(nu),
                           next_nparams=sched.nparams_at(nu + 1),
                           next_tparams=sched.tparams_at(nu + 1),
                           tol=tol, lie_order=sched.lie_order_at(nu))
        except MelnikovFailError as exc:
            stop = {"reason": "melnikov-fail", "nu": nu, "detail": str(exc)}
            rows.append(row)
            break
        except DivisorTooSmallError as exc:
            stop = {"reason": "divisor-too-small", "nu": nu,
                    "detail": str(exc)}
            rows.append(row)
            break
        except CutoffOverflowError as exc:
            stop = {"reason": "cutoff-overflow", "nu": nu,
                    "detail": str(exc)}
            rows.append(row)
            break
        corr = rec["corr"]
        row["omega_hat"] = tuple(corr.omega_hat[j]
                                 for j in state.nf.sites.iplus)
        nonneg = sorted(j for j in corr.Omega_hat if j >= 0)
        row["Omega_hat_sample"] = (corr.Omega_hat[nonneg[0]] if nonneg
                                   else 0.0)
        row["a_hat"] = corr.a_hat
        rows.append(row)
        state = rec["state_next"]
    return KamTrace(rows, stop, state)


def quadraticity_probe(state, K, scales, tol=STATE_CHECK_TOL,
                       lie_order=None):
    """Scaling exponent of one step's leftover low block against the input
    size; an exponent of two means the step acts as a Newton step there."""
    scales = tuple(float(t) for t in scales)
    if len(scales) < 2 or any(t <= 0.0 for t in scales) \
            or any(u >= t for t, u in zip(scales, scales[1:])):
        raise ValueError("scales must be positive and strictly decreasing")
    g = state.mp.gamma or 1.0
    residuals = []
    for t in scales:
        st = KamState(state.nf, fd.scale(state.R, t), state.nparams,
                      state.tparams, state.mp, state.xi)
        rec = kam_step(st, K, tol=tol, lie_order=lie_order)
        blk = fd.project(fd.project(fd.project(rec["state_next"].R,
                                               "degree_le0"),
                                    "fourier_below", K),
                         "momentum_below", K)
        residuals.append(nm.upper_norm(blk, state.nparams) / g)
    if any(r <= 0.0 for r in residuals):
        raise DegenerateFitError("a scale left an exactly zero low block")
    slope = float(np.polyfit(np.log(scales), np.log(residuals), 1)[0])
    return {"exponent": slope, "residuals": residuals,
            "scales": list(scales)}
