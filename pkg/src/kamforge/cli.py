"""Experiment drivers: subcommands, config resolution, artifacts.

Usage: kamforge <experiment> [--config FILE] [--seed N] [--jobs N]
[--out DIR] plus per-experiment flags.  Flags override config-file
values which override built-in defaults; the fully resolved config is
always written next to the results.  Every run writes results.csv,
results.json, summary.json, and a figure, all byte-identical for
identical (config, seed).  Exit codes: 0 all checks passed, 1 a check
failed, 2 the config was invalid.
"""

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import acceptance
from . import fields as fd
from . import measure as ms
from . import normalform as nfm
from . import norms as nm
from . import report
from . import sampling
from . import sim
from .birkhoff import FrequencyModel, birkhoff_step, divisor_bound_check, \
    twist_data
from .errors import DegenerateFitError, KamforgeError, NanDetectedError
from .fields import TangentialSites
from .kam import KamSchedule, kam_iterate, kam_step, prepare_wave_state, \
    quadraticity_probe
from .norms import NormParams
from .toeplitz import ToeplitzParams, project_class, splitting_rhs

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


def _ints(text):
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("expected comma-separated integers, got %r"
                          % (text,))


def _floats(text):
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("expected comma-separated numbers, got %r"
                          % (text,))


_KINDS = {
    "int": int,
    "float": float,
    "str": str,
    "ints": _ints,
    "floats": _floats,
}


def _coerce(name, kind, value):
    if kind in ("ints", "floats") and isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    try:
        return _KINDS[kind](value)
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError("field %r: cannot read %r as %s"
                          % (name, value, kind))


# shared parameter vocabulary: name -> (kind, default, help)
_NORM_TOEPLITZ = (
    ("norm_s", "float", 0.5, "Fourier analyticity width"),
    ("norm_r", "float", 0.25, "domain radius"),
    ("tp_n0", "int", 20, "Toeplitz window start"),
    ("tp_theta", "float", 1.05, "Toeplitz angle"),
    ("tp_mu", "float", 2.0, "linear-class weight"),
    ("tp_b", "float", 0.03, "window exponent b"),
    ("tp_l", "float", 0.06, "window exponent L"),
    ("tp_dplus", "int", 1, "off-diagonal reach"),
)

EXPERIMENTS = {
    "algebra-props": (
        ("trials", "int", 12, "rounds of random structured fields"),
        ("sites", "ints", (1,), "positive tangential sites"),
    ),
    "norm-props": (
        ("trials", "int", 100, "random bracket pairs"),
        ("sites", "ints", (1,), "positive tangential sites"),
    ),
    "toeplitz-props": (
        ("trials", "int", 8, "random dressed pairs"),
        ("sites", "ints", (1,), "positive tangential sites"),
    ),
    "birkhoff": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1, 2), "positive tangential sites"),
        ("jmax", "int", 8, "mode cutoff for the cubic normalization"),
        ("divisor_range", "int", 30, "largest index in the divisor scan"),
    ),
    "kam-step": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1, 2), "positive tangential sites"),
        ("xi", "floats", (0.1, 0.08), "amplitude per site"),
        ("jmax", "int", 64, "normal-mode cutoff"),
        ("gamma", "float", 0.05, "divisor threshold scale"),
        ("tau", "float", 5.5, "divisor threshold exponent"),
        ("cutoff", "int", 1, "Fourier cutoff for the step"),
        ("fit_lo", "int", 10, "first mode of the decay fit window"),
        ("fit_hi", "int", 60, "last mode of the decay fit window"),
        ("linear", "int", 1, "1: angle-independent preparation"),
    ) + _NORM_TOEPLITZ,
    "kam-iterate": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1, 2), "positive tangential sites"),
        ("xi", "floats", (0.01, 0.008), "amplitude per site"),
        ("jmax", "int", 10, "normal-mode cutoff"),
        ("steps", "int", 3, "iteration steps"),
        ("gamma", "float", 0.05, "divisor threshold scale"),
        ("tau", "float", 5.5, "divisor threshold exponent"),
        ("lie_cap", "int", 2, "cap on the Lie-series order"),
        ("linear", "int", 1, "1: angle-independent preparation"),
    ) + _NORM_TOEPLITZ,
    "quadraticity": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1,), "positive tangential sites"),
        ("xi", "floats", (1e-3,), "amplitude per site"),
        ("jmax", "int", 5, "normal-mode cutoff"),
        ("gamma", "float", 0.05, "divisor threshold scale"),
        ("tau", "float", 5.5, "divisor threshold exponent"),
        ("cutoff", "int", 4, "Fourier cutoff for the step"),
        ("scales", "floats", (1e-2, 1e-3, 1e-4), "remainder scalings"),
        ("lie_order", "int", 2, "Lie-series order"),
    ) + _NORM_TOEPLITZ,
    "measure": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1,), "positive tangential sites"),
        ("rho", "float", 0.1, "amplitude box size"),
        ("gamma_list", "floats", (1e-2, 1e-3, 1e-4, 1e-5),
         "divisor threshold scales"),
        ("tau", "float", 1.5, "divisor threshold exponent"),
        ("grid", "int", 256, "grid points per amplitude direction"),
        ("mode", "str", "grid", "grid or montecarlo"),
    ),
    "simulate": (
        ("nonlinearity", "str", "y_yx2", "right-hand-side tag"),
        ("power", "int", 3, "power for the *_pow tags"),
        ("mass", "float", 1.0, "dispersion mass"),
        ("modes", "int", 16, "spectral truncation"),
        ("amplitude", "float", 0.05, "initial profile scale"),
        ("t_final", "float", 50.0, "integration time"),
        ("dt", "float", 0.01, "time step"),
        ("stride", "int", 10, "states kept every this many steps"),
        ("functional", "str", "", "monotone functional to monitor"),
    ),
    "frequency-shift": (
        ("mass", "float", 1.0, "dispersion mass"),
        ("sites", "ints", (1,), "positive tangential sites"),
        ("xi_list", "floats", (0.02, 0.01), "driven amplitudes"),
        ("modes", "int", 16, "spectral truncation"),
    ),
    "all-acceptance": (
        ("only", "ints", (), "criterion ids to run (empty: all)"),
    ),
}


def _py(value):
    """Plain-python copy for json/csv writers."""
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_py(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _py(v) for k, v in value.items()}
    return value


def _norm_params(p):
    return NormParams(p["norm_s"], p["norm_r"])


def _toeplitz_params(p):
    return ToeplitzParams(p["tp_n0"], p["tp_theta"], p["tp_mu"], p["tp_b"],
                          p["tp_l"], p["tp_dplus"])


def _sites(p):
    try:
        return TangentialSites(tuple(p["sites"]))
    except (ValueError, TypeError) as err:
        raise ConfigError("field 'sites': %s" % err)


def _xi_map(sites, values):
    if len(values) != sites.half:
        raise ConfigError("field 'xi': need %d amplitudes for sites %s"
                          % (sites.half, list(sites.iplus)))
    if any(v <= 0 for v in values):
        raise ConfigError("field 'xi': amplitudes must be positive")
    return dict(zip(sites.iplus, values))


def run_algebra_props(p, seed, jobs, outdir):
    rng = np.random.default_rng(seed)
    sites = _sites(p)
    trials = p["trials"]
    if trials < 1:
        raise ConfigError("field 'trials': must be >= 1")
    kw = dict(j_max=4, k_max=4, deg_max=3, n_terms=10)
    worst = {"closure_reversible": 0.0, "closure_real_coeff": 0.0,
             "closure_real_on_real": 0.0, "closure_even": 0.0,
             "grading_additivity": 0.0, "symmetrize_idempotent": 0.0,
             "symmetrize_agreement": 0.0}
    for _ in range(trials):
        R = sampling.make_structured(rng, sites, ["reversible"], **kw)
        A = sampling.make_structured(rng, sites, ["anti_reversible"], **kw)
        worst["closure_reversible"] = max(
            worst["closure_reversible"],
            fd.reversibility_defect(fd.commutator(R, A)))
        P = sampling.make_structured(rng, sites, ["real_coefficients"], **kw)
        Q = sampling.make_structured(rng, sites, ["anti_real_coefficients"],
                                     **kw)
        worst["closure_real_coeff"] = max(
            worst["closure_real_coeff"],
            fd.real_coeff_defect(fd.commutator(P, Q)))
        U = sampling.make_structured(rng, sites, ["real_on_real"], **kw)
        V = sampling.make_structured(rng, sites, ["real_on_real"], **kw)
        worst["closure_real_on_real"] = max(
            worst["closure_real_on_real"],
            fd.real_on_real_defect(fd.commutator(U, V)))
        E1 = sampling.make_structured(rng, sites, ["even"], **kw)
        E2 = sampling.make_structured(rng, sites, ["even"], **kw)
        worst["closure_even"] = max(
            worst["closure_even"], fd.evenness_defect(fd.commutator(E1, E2)))

        X = sampling.random_field(rng, sites, n_terms=1, deg_max=3)
        Y = sampling.random_field(rng, sites, n_terms=1, deg_max=3)
        (cx, kx, ix, ax, bx), _ = next(iter(X.terms.items()))
        (cy, ky, iy, ay, by), _ = next(iter(Y.terms.items()))
        dsum = fd.degree(cx, ix, ax, bx) + fd.degree(cy, iy, ay, by)
        psum = (fd.momentum(sites, cx, kx, ax, bx)
                + fd.momentum(sites, cy, ky, ay, by))
        for (comp, k, i, a, b) in fd.commutator(X, Y).terms:
            if fd.degree(comp, i, a, b) != dsum \
                    or fd.momentum(sites, comp, k, a, b) != psum:
                worst["grading_additivity"] = 1.0

        Z = sampling.random_field(rng, sites, j_max=5, n_terms=20)
        SZ = fd.symmetrize(Z)
        worst["symmetrize_idempotent"] = max(
            worst["symmetrize_idempotent"],
            fd.max_coeff_diff(fd.symmetrize(SZ), SZ))
        for _ in range(5):
            pt = fd.symmetric_point(sites, 5, rng)
            vz = fd.evaluate(Z, pt)
            vs = fd.evaluate(SZ, pt)
            for comp in set(vz) | set(vs):
                worst["symmetrize_agreement"] = max(
                    worst["symmetrize_agreement"],
                    abs(vz.get(comp, 0j) - vs.get(comp, 0j)))

    tol = 1e-12
    rows = [{"check": name, "trials": trials, "worst": w, "tol": tol,
             "passed": w <= tol} for name, w in sorted(worst.items())]
    fig = report.defect_bars([r["check"] for r in rows],
                             [r["worst"] for r in rows], tol,
                             os.path.join(outdir, "algebra-props.png"),
                             "structured-field identities")
    return {"passed": all(r["passed"] for r in rows),
            "header": ["check", "trials", "worst", "tol", "passed"],
            "rows": rows,
            "summary": {"worst_defect": max(worst.values()), "tol": tol},
            "figure": fig}


def run_norm_props(p, seed, jobs, outdir):
    rng = np.random.default_rng(seed)
    sites = _sites(p)
    trials = p["trials"]
    if trials < 1:
        raise ConfigError("field 'trials': must be >= 1")
    pa = NormParams(1.0, 0.3, a_mom=0.5)
    pb = pa.shrink(s=0.7, r=0.21)
    delta = min(1 - pb.s / pa.s, 1 - pb.r / pa.r)
    C = nm.bracket_bound_constant(sites.n)
    ratios = []
    for _ in range(trials):
        X = sampling.random_field(rng, sites, j_max=12, k_max=6, deg_max=4,
                                  n_terms=12)
        Y = sampling.random_field(rng, sites, j_max=12, k_max=6, deg_max=4,
                                  n_terms=12)
        lo = nm.lower_norm(fd.commutator(X, Y), pb, samples=4,
                           seed=int(rng.integers(1 << 30)))
        bound = (C / delta) * nm.upper_norm(X, pa) * nm.upper_norm(Y, pa)
        ratios.append(lo / bound)
    K = 6
    Xk = fd.Field(sites, 6, 2, 12)
    Xk.add_term(("x", 1), (K,) + (0,) * (sites.n - 1),
                sites.zero_i, (), (), 1.0)
    ps = pa.shrink(s=0.6)
    four = abs(nm.upper_norm(Xk, ps)
               - nm.fourier_smoothing_factor(K, pa.s, ps.s)
               * nm.upper_norm(Xk, pa)) / nm.upper_norm(Xk, pa)
    Xm = fd.Field(sites, 2, 2, 12)
    Xm.add_term(("z+", K + 1), (1,) + (0,) * (sites.n - 1),
                sites.zero_i, (), (), 1.0)
    pm = pa.shrink(a_mom=0.2)
    mom = abs(nm.upper_norm(Xm, pm)
              - nm.momentum_smoothing_factor(K, pa.a_mom, pm.a_mom)
              * nm.upper_norm(Xm, pa)) / nm.upper_norm(Xm, pa)
    rows = [
        {"check": "bracket_bound", "trials": trials,
         "worst": max(ratios), "tol": 1.0 + 1e-12,
         "passed": max(ratios) <= 1.0 + 1e-12},
        {"check": "fourier_smoothing", "trials": 1, "worst": four,
         "tol": 1e-12, "passed": four <= 1e-12},
        {"check": "momentum_smoothing", "trials": 1, "worst": mom,
         "tol": 1e-12, "passed": mom <= 1e-12},
    ]
    fig = report.ratio_hist(ratios, os.path.join(outdir, "norm-props.png"),
                            "bracket norm vs sound bound",
                            "measured / bound")
    return {"passed": all(r["passed"] for r in rows),
            "header": ["check", "trials", "worst", "tol", "passed"],
            "rows": rows,
            "summary": {"max_ratio": max(ratios), "constant": C,
                        "delta": delta},
            "figure": fig}


def run_toeplitz_props(p, seed, jobs, outdir):
    rng = np.random.default_rng(seed)
    sites = _sites(p)
    trials = p["trials"]
    if trials < 1:
        raise ConfigError("field 'trials': must be >= 1")
    tp5 = ToeplitzParams(20, 1.05, 5.0, 0.03, 0.06, 1)
    theta1, mu1 = 2.0, 2.0
    tp1 = ToeplitzParams(20, theta1, mu1, 0.03, 0.06, 1)
    N = 20
    rows = []
    for t in range(trials):
        X = sampling.random_field(rng, sites, j_max=45, k_max=2, deg_max=3,
                                  n_terms=25)
        Y = sampling.random_field(rng, sites, j_max=45, k_max=2, deg_max=3,
                                  n_terms=25)
        X = fd.add(X, sampling.random_linear_diagonals(rng, sites, 45, N,
                                                       tp5))
        Y = fd.add(Y, sampling.random_linear_diagonals(rng, sites, 45, N,
                                                       tp5))
        lhs = project_class(fd.commutator(X, Y), N, tp1, "linear")
        rhs = splitting_rhs(X, Y, N, tp5, theta1, mu1)
        split = fd.max_coeff_diff(lhs, rhs)
        idem = fd.max_coeff_diff(project_class(lhs, N, tp1, "linear"), lhs)
        rows.append({"trial": t, "split_defect": split,
                     "idempotence_defect": idem, "nonzero": len(lhs) > 0})
    worst = max(max(r["split_defect"], r["idempotence_defect"])
                for r in rows)
    nonzero = sum(r["nonzero"] for r in rows)
    fig = report.defect_bars(
        ["trial %d" % r["trial"] for r in rows],
        [max(r["split_defect"], r["idempotence_defect"]) for r in rows],
        1e-12, os.path.join(outdir, "toeplitz-props.png"),
        "bracket splitting of the linear class")
    return {"passed": worst <= 1e-12 and nonzero >= 1,
            "header": ["trial", "split_defect", "idempotence_defect",
                       "nonzero"],
            "rows": rows,
            "summary": {"worst_defect": worst, "nonzero_splits": nonzero,
                        "tol": 1e-12},
            "figure": fig}


def run_birkhoff(p, seed, jobs, outdir):
    fm = FrequencyModel(p["mass"])
    sites = _sites(p)
    if p["jmax"] < max(sites.iplus):
        raise ConfigError("field 'jmax': must cover the tangential sites")
    out = birkhoff_step(fm, sites, p["jmax"])
    resid = out["residual_norm"]
    td = twist_data(fm, sites)
    lamv = np.array([fm.lam(j) for j in sites.iplus])
    twist = float(np.abs(td.check_vec
                         - (2.0 / (sites.n - 1)) * lamv).max())
    top = p["divisor_range"]
    js = list(range(10, top + 1, 5)) if top >= 10 else [top]
    rows = []
    for J in js:
        chk = divisor_bound_check(fm, J)
        rows.append({"J": J, "min_scaled": chk["min_scaled"],
                     "witness": str(chk["witness"])})
    fig = report.curve([r["J"] for r in rows],
                       [r["min_scaled"] for r in rows],
                       os.path.join(outdir, "birkhoff.png"),
                       "scaled minimum divisor over quadruples",
                       "index range J", "min |sum sigma lambda| (n0^2+m)^1.5/m")
    passed = resid <= 1e-12 and twist <= 1e-12 \
        and all(r["min_scaled"] > 0 for r in rows)
    return {"passed": passed,
            "header": ["J", "min_scaled", "witness"],
            "rows": rows,
            "summary": {"residual_norm": resid, "twist_residual": twist,
                        "divisor_min": rows[-1]["min_scaled"]},
            "figure": fig}


def _prepared_state(p, linear):
    fm = FrequencyModel(p["mass"])
    sites = _sites(p)
    xi = _xi_map(sites, p["xi"])
    mp = nfm.MelnikovParams(p["gamma"], p["tau"], p.get("cutoff", 1))
    extra = {}
    if linear:
        extra = dict(min_tangential=sites.half, deg_max=0)
    try:
        return prepare_wave_state(fm, xi, p["jmax"], _norm_params(p),
                                  _toeplitz_params(p), mp, **extra)
    except ValueError as err:
        raise ConfigError(str(err))


def run_kam_step(p, seed, jobs, outdir):
    if not 0 < p["fit_lo"] < p["fit_hi"] <= p["jmax"]:
        raise ConfigError("fit window must satisfy 0 < lo < hi <= jmax")
    state = _prepared_state(p, bool(p["linear"]))
    out = kam_step(state, p["cutoff"])
    corr = out["corr"]
    rows = []
    for j in range(p["fit_lo"], p["fit_hi"] + 1):
        gap = abs(corr.Omega_hat.get(j, 0.0) - corr.a_hat)
        rows.append({"j": j, "gap": gap})
    fit_rows = [r for r in rows if r["gap"] > 0]
    slope, intercept = np.polyfit(np.log([r["j"] for r in fit_rows]),
                                  np.log([r["gap"] for r in fit_rows]), 1)
    fig = report.decay_loglog([r["j"] for r in fit_rows],
                              [r["gap"] for r in fit_rows],
                              float(slope), float(intercept),
                              os.path.join(outdir, "kam-step.png"),
                              "normal correction gap after one step")
    return {"passed": bool(slope <= -0.8),
            "header": ["j", "gap"],
            "rows": rows,
            "summary": {"slope": float(slope), "a_hat": corr.a_hat,
                        "melnikov_margin": out["melnikov"].margin,
                        "a_hat_spread": out["a_hat_spread"]},
            "figure": fig}


def run_kam_iterate(p, seed, jobs, outdir):
    if p["steps"] < 2:
        raise ConfigError("field 'steps': need at least 2")
    state = _prepared_state(p, bool(p["linear"]))
    try:
        sched = KamSchedule.from_state(state, lie_cap=p["lie_cap"])
    except ValueError as err:
        raise ConfigError(str(err))
    trace = kam_iterate(state, p["steps"], schedule=sched)
    trace.to_csv(os.path.join(outdir, "trace.csv"))
    rows = [{"nu": r["nu"], "K": r["K"], "s": r["s"], "r": r["r"],
             "N0": r["N0"], "eps_m1": r.get("eps_m1"),
             "eps_0": r.get("eps_0"), "Theta": r.get("Theta"),
             "a_hat": r.get("a_hat")} for r in trace.rows]
    eps = [r["eps_0"] for r in trace.rows if r.get("eps_0")]
    try:
        fit = trace.fit_superexponential()
    except DegenerateFitError:
        fit = None
    decreasing = all(b < a for a, b in zip(eps, eps[1:]))
    passed = trace.stop_reason is None and decreasing \
        and (fit is None or fit["slope"] < 0)
    fig = report.semilogy_steps(
        [r["nu"] for r in trace.rows if r.get("eps_0")], eps,
        os.path.join(outdir, "kam-iterate.png"),
        "low-block remainder along the iteration", "block norm")
    return {"passed": passed,
            "header": ["nu", "K", "s", "r", "N0", "eps_m1", "eps_0",
                       "Theta", "a_hat"],
            "rows": rows,
            "summary": {"stop_reason": trace.stop_reason, "fit": fit,
                        "final_eps": eps[-1] if eps else None},
            "figure": fig}


def run_quadraticity(p, seed, jobs, outdir):
    scales = p["scales"]
    if len(scales) < 2:
        raise ConfigError("field 'scales': need at least 2 values")
    state = _prepared_state(p, False)
    try:
        probe = quadraticity_probe(state, p["cutoff"], tuple(scales),
                                   lie_order=p["lie_order"])
    except ValueError as err:
        raise ConfigError(str(err))
    rows = [{"scale": s, "residual": r}
            for s, r in zip(probe["scales"], probe["residuals"])]
    expo = probe["exponent"]
    lx = np.log([r["scale"] for r in rows])
    ly = np.log([r["residual"] for r in rows])
    intercept = float(np.polyfit(lx, ly, 1)[1])
    fig = report.loglog_fit([r["scale"] for r in rows],
                            [r["residual"] for r in rows], expo, intercept,
                            os.path.join(outdir, "quadraticity.png"),
                            "post-step remainder vs perturbation scale",
                            "scale", "remainder norm")
    return {"passed": abs(expo - 2.0) <= 0.15,
            "header": ["scale", "residual"],
            "rows": rows,
            "summary": {"exponent": expo},
            "figure": fig}


def run_measure(p, seed, jobs, outdir):
    fm = FrequencyModel(p["mass"])
    sites = _sites(p)
    gammas = sorted(p["gamma_list"], reverse=True)
    if not gammas or any(g <= 0 for g in gammas):
        raise ConfigError("field 'gamma_list': need positive values")
    if p["mode"] not in ("grid", "montecarlo"):
        raise ConfigError("field 'mode': grid or montecarlo")
    try:
        box = ms.ParameterBox(sites, p["rho"])
    except ValueError as err:
        raise ConfigError(str(err))

    def one(g):
        return ms.excluded_measure(fm, sites, box,
                                   nfm.MelnikovParams(g, p["tau"], 1),
                                   grid=p["grid"], mode=p["mode"],
                                   seed=seed)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(one, gammas))
    else:
        outs = [one(g) for g in gammas]
    rows = []
    for g, out in zip(gammas, outs):
        row = {"gamma": g, "rho": p["rho"], "grid": p["grid"],
               "fraction": out["fraction"], "samples": out["samples"]}
        for fam, frac in sorted(out["per_condition"].items()):
            row["frac_" + fam] = frac
        rows.append(row)
    fractions = [r["fraction"] for r in rows]
    fit = None
    if len(gammas) >= 4 and all(f > 0 for f in fractions):
        try:
            fit = ms.gamma_scaling_fit(gammas, fractions)
        except DegenerateFitError:
            fit = None
    monotone = all(a >= b for a, b in zip(fractions, fractions[1:]))
    passed = monotone and (fit is None
                           or abs(fit["slope"] - 2.0 / 3.0) <= 0.1)
    fig = report.loglog_fit(gammas, fractions,
                            fit["slope"] if fit else None,
                            fit["intercept"] if fit else None,
                            os.path.join(outdir, "measure.png"),
                            "excluded amplitude fraction vs gamma",
                            "gamma", "excluded fraction")
    with open(os.path.join(outdir, "fit.json"), "w") as fh:
        json.dump(_py({"fit": fit, "gammas": gammas,
                       "fractions": fractions}), fh, sort_keys=True,
                  indent=2)
        fh.write("\n")
    return {"passed": passed,
            "header": sorted(rows[0].keys()) if rows else [],
            "rows": rows,
            "summary": {"fit": fit, "monotone": monotone,
                        "cutoffs": outs[0]["cutoffs"]},
            "figure": fig}


_FUNCTIONAL_TAGS = {"M_yxv": ("yx_pow", "none"),
                    "H_energy": ("yt_pow", "none")}


def run_simulate(p, seed, jobs, outdir):
    tag = p["nonlinearity"]
    try:
        power = p["power"] if tag.endswith("_pow") else None
        spec = sim.NonlinearitySpec(tag, p=power)
    except ValueError as err:
        raise ConfigError("field 'nonlinearity': %s" % err)
    functional = p["functional"]
    if functional:
        if functional not in _FUNCTIONAL_TAGS:
            raise ConfigError("field 'functional': unknown %r" % functional)
        if tag not in _FUNCTIONAL_TAGS[functional]:
            raise ConfigError("field 'functional': %r needs nonlinearity %s"
                              % (functional, _FUNCTIONAL_TAGS[functional]))
        if power is not None and power % 2 == 0:
            raise ConfigError("field 'power': monotone functionals need "
                              "odd powers")
    if p["t_final"] <= 0 or p["dt"] <= 0 or p["stride"] < 1:
        raise ConfigError("t_final, dt positive and stride >= 1 required")
    amp = p["amplitude"]
    st = sim.state_from_profiles(
        p["modes"], p["mass"],
        lambda x: amp * np.cos(x) + 0.5 * amp * np.sin(2 * x),
        lambda x: 0.5 * amp * np.cos(2 * x))
    summary = {}
    passed = True
    try:
        traj = sim.integrate(spec, p["mass"], st, p["t_final"], p["dt"],
                             stride=p["stride"])
    except NanDetectedError as err:
        traj = err.partial
        passed = False
        summary["stopped"] = "nan-detected"
        summary["stopped_at"] = err.t
    except (ValueError, KamforgeError) as err:
        raise ConfigError(str(err))
    times = traj.times()
    mode1 = np.abs(traj.mode_series(1, "y"))
    energies = [s.energy() for s in traj.states]
    rows = [{"t": t, "energy": e, "momentum": s.momentum_cross(),
             "mode1_abs": a}
            for t, e, s, a in zip(times, energies, traj.states, mode1)]
    named = {"energy": energies}
    if functional and passed:
        out = sim.lyapunov_series(traj, functional)
        verdict = out["verdict"]
        summary["functional"] = functional
        summary["monotone"] = verdict["monotone_nondecreasing"]
        summary["max_violation"] = verdict["max_violation"]
        passed = passed and verdict["monotone_nondecreasing"] \
            and verdict["max_violation"] <= 1e-8
        named[functional] = out["values"]
        for row, val in zip(rows, out["values"]):
            row["functional_value"] = val
    if tag == "none":
        drift = max(abs(e - energies[0]) for e in energies)
        summary["energy_drift"] = drift
        passed = passed and drift <= 1e-6 * max(1.0, energies[0])
    fig = report.series(times, named,
                        os.path.join(outdir, "simulate.png"),
                        "conserved and monitored quantities", "value")
    header = ["t", "energy", "momentum", "mode1_abs"]
    if functional and passed is not None and "functional_value" in rows[0]:
        header.append("functional_value")
    return {"passed": passed, "header": header, "rows": rows,
            "summary": summary, "figure": fig}


def run_frequency_shift(p, seed, jobs, outdir):
    fm = FrequencyModel(p["mass"])
    sites = _sites(p)
    xis = p["xi_list"]
    if not xis or any(x <= 0 for x in xis):
        raise ConfigError("field 'xi_list': need positive amplitudes")
    try:
        rows = sim.frequency_shift(fm, sites, list(xis), M=p["modes"])
    except (ValueError, KamforgeError) as err:
        raise ConfigError(str(err))
    passed = all(r["residual"] <= max(r["xi"] ** 2, 1e-4) for r in rows)
    by_xi = {}
    for r in rows:
        by_xi.setdefault(r["xi"], []).append(r["residual"])
    xs = sorted(by_xi)
    ys = [max(by_xi[x]) for x in xs]
    slope = intercept = None
    if len(xs) >= 2 and all(y > 0 for y in ys):
        slope, intercept = (float(v) for v in
                            np.polyfit(np.log(xs), np.log(ys), 1))
    fig = report.loglog_fit(xs, ys, slope, intercept,
                            os.path.join(outdir, "frequency-shift.png"),
                            "first-order shift prediction residual",
                            "amplitude", "frequency residual")
    return {"passed": passed,
            "header": ["xi", "site", "omega_measured", "omega_predicted",
                       "residual"],
            "rows": rows,
            "summary": {"max_residual": max(r["residual"] for r in rows),
                        "residual_slope": slope},
            "figure": fig}


def run_all_acceptance(p, seed, jobs, outdir):
    only = set(p["only"])
    crits = [c for c in acceptance.ALL_CRITERIA
             if not only or int(c.__name__.split("_")[1]) in only]
    if not crits:
        raise ConfigError("field 'only': no matching criterion ids")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            recs = list(pool.map(lambda c: c(), crits))
    else:
        recs = [c() for c in crits]
    for rec in recs:
        print("[%2d] %-20s %s  value=%r  budget %.0fs used %.1fs"
              % (rec["id"], rec["name"],
                 "PASS" if rec["passed"] else "FAIL", rec["value"],
                 rec["budget"], rec["seconds"]))
    rows = [{"id": r["id"], "name": r["name"], "passed": r["passed"],
             "value": r["value"], "threshold": str(r["threshold"]),
             "detail": r["detail"]} for r in recs]
    fig = report.pass_strip(rows, os.path.join(outdir,
                                               "all-acceptance.png"),
                            "acceptance criteria")
    return {"passed": all(r["passed"] for r in rows),
            "header": ["id", "name", "passed", "value", "threshold",
                       "detail"],
            "rows": rows,
            "summary": {"n_passed": sum(r["passed"] for r in rows),
                        "n_total": len(rows)},
            "figure": fig}


RUNNERS = {
    "algebra-props": run_algebra_props,
    "norm-props": run_norm_props,
    "toeplitz-props": run_toeplitz_props,
    "birkhoff": run_birkhoff,
    "kam-step": run_kam_step,
    "kam-iterate": run_kam_iterate,
    "quadraticity": run_quadraticity,
    "measure": run_measure,
    "simulate": run_simulate,
    "frequency-shift": run_frequency_shift,
    "all-acceptance": run_all_acceptance,
}


def _add_flags(sp, experiment):
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--seed", type=int, help="random seed (default 0)")
    sp.add_argument("--jobs", type=int, help="worker threads (default 1)")
    sp.add_argument("--out", help="output directory")
    for name, kind, default, help_ in EXPERIMENTS[experiment]:
        flag = "--" + name.replace("_", "-")
        sp.add_argument(flag, dest=name, default=argparse.SUPPRESS,
                        help="%s (default %s)" % (help_, default))


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kamforge",
        description="normal-form / small-divisor experiment drivers")
    sub = parser.add_subparsers(dest="experiment", required=True,
                                metavar="experiment")
    for name in EXPERIMENTS:
        _add_flags(sub.add_parser(name, help="run the %s experiment"
                                  % name), name)
    runp = sub.add_parser("run", help="dispatch by --experiment id")
    runp.add_argument("--experiment", required=True, dest="run_experiment")
    runp.add_argument("--config", help="JSON config file")
    runp.add_argument("--seed", type=int)
    runp.add_argument("--jobs", type=int)
    runp.add_argument("--out", help="output directory")
    seen = set()
    for params in EXPERIMENTS.values():
        for name, kind, default, help_ in params:
            if name in seen:
                continue
            seen.add(name)
            runp.add_argument("--" + name.replace("_", "-"), dest=name,
                              default=argparse.SUPPRESS, help=help_)
    return parser


def _resolve_config(experiment, args):
    spec = {name: (kind, default)
            for name, kind, default, _ in EXPERIMENTS[experiment]}
    cfg = {"experiment": experiment, "schema_version": SCHEMA_VERSION,
           "seed": 0, "jobs": 1, "out": None}
    params = {name: default for name, (kind, default) in spec.items()}

    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as err:
            raise ConfigError("cannot read config: %s" % err)
        except json.JSONDecodeError as err:
            raise ConfigError("config is not valid JSON: %s" % err)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError("unsupported schema_version %r"
                              % data.get("schema_version"))
        if "experiment" in data and data["experiment"] != experiment:
            raise ConfigError("config is for experiment %r, not %r"
                              % (data["experiment"], experiment))
        unknown = [k for k in data
                   if k not in spec and k not in cfg]
        if unknown:
            raise ConfigError("unknown config fields: %s"
                              % ", ".join(sorted(unknown)))
        for key in ("seed", "jobs"):
            if key in data:
                cfg[key] = _coerce(key, "int", data[key])
        if "out" in data:
            cfg["out"] = str(data["out"])
        for name in spec:
            if name in data:
                params[name] = _coerce(name, spec[name][0], data[name])

    for key in ("seed", "jobs", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for name in spec:
        if hasattr(args, name):
            params[name] = _coerce(name, spec[name][0],
                                   getattr(args, name))
    for name, (kind, _) in spec.items():
        params[name] = _coerce(name, kind, params[name])
    if cfg["seed"] < 0:
        raise ConfigError("field 'seed': must be >= 0")
    if cfg["jobs"] < 1:
        raise ConfigError("field 'jobs': must be >= 1")
    if cfg["out"] is None:
        cfg["out"] = os.path.join("kamforge-out", experiment)
    cfg["params"] = params
    return cfg


def _write_artifacts(outdir, cfg, result):
    emitted = {k: v for k, v in cfg.items() if k != "out"}
    with open(os.path.join(outdir, "resolved_config.json"), "w") as fh:
        json.dump(_py(emitted), fh, sort_keys=True, indent=2)
        fh.write("\n")
    header = result["header"]
    rows = [_py(r) for r in result["rows"]]
    with open(os.path.join(outdir, "results.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row.get(col, "") for col in header])
    with open(os.path.join(outdir, "results.json"), "w") as fh:
        json.dump({"experiment": cfg["experiment"], "rows": rows},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    summary = {"experiment": cfg["experiment"],
               "passed": bool(result["passed"]),
               "figure": os.path.basename(result["figure"])}
    summary.update(_py(result["summary"]))
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    experiment = args.experiment
    if experiment == "run":
        experiment = args.run_experiment
        if experiment not in EXPERIMENTS:
            print("config error: unknown experiment %r (known: %s)"
                  % (experiment, ", ".join(sorted(EXPERIMENTS))),
                  file=sys.stderr)
            return 2
    try:
        cfg = _resolve_config(experiment, args)
        outdir = cfg["out"]
        os.makedirs(outdir, exist_ok=True)
        result = RUNNERS[experiment](cfg["params"], cfg["seed"],
                                     cfg["jobs"], outdir)
    except ConfigError as err:
        print("config error: %s" % err, file=sys.stderr)
        return 2
    _write_artifacts(outdir, cfg, result)
    print("%s: %s (artifacts in %s)"
          % (experiment, "pass" if result["passed"] else "FAIL", outdir))
    return 0 if result["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
