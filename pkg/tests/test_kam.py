"""Tests for the KAM step, schedule, trace, and quadraticity probe."""

import csv
import math
from functools import lru_cache

import numpy as np
import pytest

from kamforge import fields as fd
from kamforge import norms as nm
from kamforge import toeplitz as tz
from kamforge.birkhoff import FrequencyModel
from kamforge.errors import (CutoffOverflowError, DegenerateFitError,
                             MelnikovFailError, StructureViolationError)
from kamforge.fields import TangentialSites
from kamforge.kam import (FrequencyCorrection, KamSchedule, KamState,
                          KamTrace, kam_iterate, kam_step,
                          prepare_wave_state, preliminary_average_step,
                          quadraticity_probe)
from kamforge.normalform import MelnikovParams, NormalForm, normal_form_field
from kamforge.toeplitz import ToeplitzParams

FM = FrequencyModel(1.0)
NPAR = nm.NormParams(0.5, 0.25)
TPAR = ToeplitzParams(20, 1.05, 2.0, 0.03, 0.06, 1)


def melnikov(gamma=0.05, tau=5.5, K=1):
    return MelnikovParams(gamma, tau, K)


@lru_cache(maxsize=None)
def small_state():
    return prepare_wave_state(FM, {1: 1e-3}, 4, NPAR, TPAR, melnikov())


@lru_cache(maxsize=None)
def small_step():
    return kam_step(small_state(), 4, lie_order=1)


@lru_cache(maxsize=None)
def linear_state(j_max, xi1=0.01, xi2=0.008):
    return prepare_wave_state(FM, {1: xi1, 2: xi2}, j_max, NPAR, TPAR,
                              melnikov(), min_tangential=2, deg_max=0)


@lru_cache(maxsize=None)
def iterate_trace():
    st = linear_state(10)
    sched = KamSchedule.from_state(st, lie_cap=2)
    return kam_iterate(st, 3, schedule=sched), sched


def shift_sum(xi):
    return sum(i * i * v / FM.lam(i) ** 2 for i, v in xi.items())


def test_state_validation_rejects_unstructured_remainders():
    st = small_state()
    bad = st.R.copy()
    bad.add_term((fd.Y_KIND, 1), st.nf.sites.zero_k, st.nf.sites.zero_i,
                 (), (), 1.0)
    with pytest.raises(StructureViolationError):
        KamState(st.nf, bad, NPAR, TPAR, st.mp, st.xi)
    bad = st.R.copy()
    bad.add_term((fd.X_KIND, 1), (1, -1), st.nf.sites.zero_i, (), (), 1.0)
    with pytest.raises(StructureViolationError):
        KamState(st.nf, bad, NPAR, TPAR, st.mp, st.xi)
    with pytest.raises(ValueError):
        KamState(st.nf, st.R, NPAR, TPAR, st.mp, {2: 0.1})
    with pytest.raises(ValueError):
        KamState(st.nf, st.R, NPAR, TPAR, st.mp, {1: 0.0})


def test_correction_container_requires_mirror_symmetry():
    FrequencyCorrection({1: 0.5, -1: 0.5}, {2: 0.1, -2: 0.1}, 0.0)
    with pytest.raises(ValueError):
        FrequencyCorrection({1: 0.5, -1: 0.4}, {}, 0.0)
    with pytest.raises(ValueError):
        FrequencyCorrection({}, {2: 0.1}, 0.0)


def test_fully_resonant_state_closes_exactly():
    # a remainder equal to its own resonant average needs no conjugation:
    # the whole field moves into the frame and nothing is left behind
    sites = TangentialSites((1,))
    nf = NormalForm.from_half(sites, [FM.lam(1)],
                              {j: FM.lam(j) for j in (0, 2, 3, 4)})
    delta = NormalForm.from_half(sites, [0.01],
                                 {j: 0.001 / FM.lam(j) for j in (0, 2, 3, 4)})
    R = normal_form_field(delta, 0, 0, j_max=4)
    st = KamState(nf, R, NPAR, TPAR, melnikov(), {1: 1e-3})
    rec = kam_step(st, 1, lie_order=2)
    assert len(rec["F"]) == 0
    assert len(rec["state_next"].R) == 0
    assert rec["corr"].omega_hat[1] == pytest.approx(0.01, abs=1e-15)
    for j in (0, 2, 3, 4):
        assert rec["corr"].Omega_hat[j] \
            == pytest.approx(0.001 / FM.lam(j), abs=1e-15)
    assert rec["state_next"].nf.omega[1] \
        == pytest.approx(FM.lam(1) + 0.01, abs=1e-15)


def test_step_corrections_match_frequency_map_predictions():
    st, rec = small_state(), small_step()
    corr = rec["corr"]
    S = shift_sum(st.xi)
    want1 = 0.25 * st.xi[1] / FM.lam(1) ** 3 - S / FM.lam(1)
    assert corr.omega_hat[1] == pytest.approx(want1, rel=1e-10)
    assert corr.omega_hat[-1] == corr.omega_hat[1]
    for j in (0, 2, 3, 4):
        assert corr.Omega_hat[j] == pytest.approx(-S / FM.lam(j), rel=1e-10)
        assert corr.Omega_hat[-j] == corr.Omega_hat[j]
    # the mode cutoff leaves no Toeplitz scale here, which is reported
    assert corr.a_hat == 0.0
    assert rec["a_hat_window"] == 0
    assert rec["melnikov"].passed
    assert rec["lie_order"] == 1


def test_step_correction_sup_bounded_by_block_norm():
    st, rec = small_state(), small_step()
    corr = rec["corr"]
    bound = 2.0 * nm.upper_norm(fd.project(st.R, "degree_equals", 0), NPAR)
    assert max(abs(v) for v in corr.omega_hat.values()) <= bound
    assert max(abs(v) for v in corr.Omega_hat.values()) <= bound


def test_step_advances_frame_and_keeps_structure():
    st, rec = small_state(), small_step()
    nxt = rec["state_next"]
    corr = rec["corr"]
    assert nxt.nf.omega[1] == st.nf.omega[1] + corr.omega_hat[1]
    assert nxt.nf.Omega[2] == st.nf.Omega[2] + corr.Omega_hat[2]
    scale = max(1.0, fd.sup_coeff(nxt.R))
    assert fd.reversibility_defect(nxt.R) <= 1e-9 * scale
    assert fd.real_on_real_defect(nxt.R) <= 1e-9 * scale
    assert fd.max_coeff_diff(fd.symmetrize(nxt.R), nxt.R) <= 1e-9 * scale
    for comp, k, i, a, b in nxt.R.terms:
        assert fd.momentum(nxt.R.sites, comp, k, a, b) == 0


def test_step_is_lipschitz_in_amplitude():
    # the corrections are exactly linear in the amplitude here, so the
    # difference quotient must match the closed-form slope
    delta = 1e-4
    base = small_step()["corr"]
    bumped = kam_step(prepare_wave_state(FM, {1: 1e-3 + delta}, 4, NPAR,
                                         TPAR, melnikov()),
                      4, lie_order=1)["corr"]
    q1 = (bumped.omega_hat[1] - base.omega_hat[1]) / delta
    assert q1 == pytest.approx(-0.75 / FM.lam(1) ** 3, abs=1e-9)
    q2 = (bumped.Omega_hat[2] - base.Omega_hat[2]) / delta
    assert q2 == pytest.approx(-1.0 / (FM.lam(1) ** 2 * FM.lam(2)),
                               abs=1e-9)


def test_step_rejects_bad_cutoffs_and_blocks():
    st = small_state()
    with pytest.raises(ValueError):
        kam_step(st, 0)
    with pytest.raises(CutoffOverflowError):
        kam_step(st, 600)
    with pytest.raises(ValueError):
        kam_step(st, 2, block="bogus")


def test_step_raises_structured_melnikov_failure():
    st = prepare_wave_state(FM, {1: 1e-3}, 5, NPAR, TPAR,
                            melnikov(gamma=0.9, tau=0.5))
    with pytest.raises(MelnikovFailError) as err:
        kam_step(st, 2, lie_order=1)
    assert err.value.report is not None
    assert not err.value.report.passed
    assert err.value.report.margin < 0.0


def test_preliminary_average_step_clears_action_block():
    # gamma**(-1/(7n)) rounds to K=4 here, covering the whole angle support
    st = prepare_wave_state(FM, {1: 1e-3}, 4, NPAR, TPAR,
                            melnikov(gamma=1e-9))
    K = 4

    def action_block_sup(X):
        blk = fd.project(fd.project(fd.project(X, "degree_equals", -1),
                                    "fourier_below", K),
                         "momentum_below", K)
        return max((abs(c) for key, c in blk.terms.items()
                    if key[0][0] == fd.Y_KIND), default=0.0)

    before = action_block_sup(st.R)
    assert before > 1e-9
    rec = preliminary_average_step(st, lie_order=1)
    assert action_block_sup(rec["state_next"].R) <= before / 100.0
    assert all(v == 0.0 for v in rec["corr"].omega_hat.values())
    assert rec["corr"].Omega_hat == {}
    assert rec["corr"].a_hat == 0.0


def test_toeplitz_constant_and_correction_decay():
    st = linear_state(64, 0.1, 0.08)
    rec = kam_step(st, 1, lie_order=1)
    corr = rec["corr"]
    # the constant comes off a single top slot here and must equal the
    # diagonal correction at that slot
    assert rec["a_hat_window"] == 1
    assert corr.a_hat == corr.Omega_hat[64]
    S = shift_sum(st.xi)
    assert corr.Omega_hat[10] == pytest.approx(-S / FM.lam(10), rel=1e-10)
    js = np.array([j for j in range(10, 61) if j in corr.Omega_hat])
    gaps = np.array([abs(corr.Omega_hat[j] - corr.a_hat) for j in js])
    assert len(js) == 51
    slope = np.polyfit(np.log(js), np.log(gaps), 1)[0]
    assert slope <= -0.8


def test_tail_gap_bounded_by_toeplitz_norm_over_index():
    st = linear_state(128, 0.1, 0.08)
    rec = kam_step(st, 1, lie_order=1)
    corr = rec["corr"]
    r0 = fd.project(st.R, "degree_equals", 0)
    tnorm = tz.qt_norm_estimate(r0, NPAR, TPAR, [TPAR.N0])
    lo = 6 * (TPAR.N0 + 1)
    checked = 0
    for j in range(lo, 129):
        if j not in corr.Omega_hat:
            continue
        assert abs(corr.Omega_hat[j] - corr.a_hat) <= 40.0 * tnorm / j
        checked += 1
    assert checked >= 3


def test_quadraticity_probe_exponent_and_monotonicity():
    probe = quadraticity_probe(small_state(), 4, (1e-2, 1e-3),
                               lie_order=1)
    assert abs(probe["exponent"] - 2.0) <= 0.15
    assert probe["residuals"][1] < probe["residuals"][0]
    with pytest.raises(ValueError):
        quadraticity_probe(small_state(), 4, (1e-3, 1e-2))
    with pytest.raises(ValueError):
        quadraticity_probe(small_state(), 4, (1e-2,))


def test_iterate_trace_matches_schedule():
    trace, sched = iterate_trace()
    assert trace.stop_reason is None
    assert len(trace) == 3
    for nu, row in enumerate(trace.rows):
        assert row["nu"] == nu
        assert row["K"] == 4 ** nu
        assert row["s"] == pytest.approx(sched.nparams_at(nu).s, abs=0)
        assert row["r"] == pytest.approx(sched.nparams_at(nu).r, abs=0)
        assert row["N0"] == sched.N0_at(nu)
        assert row["theta"] == pytest.approx(sched.tparams_at(nu).theta,
                                             abs=0)
        assert row["mu"] == pytest.approx(sched.tparams_at(nu).mu, abs=0)
        assert row["eps_0"] > 0.0
        assert row["Theta"] >= row["eps_0"]


def test_iterate_block_norm_decreases():
    trace, _ = iterate_trace()
    assert trace.rows[1]["eps_0"] < trace.rows[0]["eps_0"]
    assert trace.rows[2]["eps_0"] < trace.rows[1]["eps_0"]


def test_iterate_superexponential_fit_is_negative():
    trace, _ = iterate_trace()
    fit = trace.fit_superexponential(chi=1.25)
    assert fit["slope"] < 0.0
    with pytest.raises(DegenerateFitError):
        KamTrace(trace.rows[:1]).fit_superexponential()


def test_trace_csv_round_trip(tmp_path):
    trace, _ = iterate_trace()
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(KamTrace.COLUMNS)
    assert len(rows) == 1 + len(trace)
    got = float(rows[1][rows[0].index("eps_0")])
    assert got == pytest.approx(trace.rows[0]["eps_0"], rel=1e-12)
    omega_cell = rows[1][rows[0].index("omega_hat")]
    assert [float(v) for v in omega_cell.split(";")] \
        == pytest.approx(list(trace.rows[0]["omega_hat"]), rel=1e-15)


def test_iterate_stops_on_melnikov_failure():
    st = prepare_wave_state(FM, {1: 1e-3}, 5, NPAR, TPAR,
                            melnikov(gamma=0.9, tau=0.5))
    sched = KamSchedule.from_state(st, lie_cap=2)
    trace = kam_iterate(st, 3, schedule=sched)
    assert trace.stop_reason is not None
    assert trace.stop_reason["reason"] == "melnikov-fail"
    assert trace.stop_reason["nu"] == 1
    assert len(trace) == 2
    assert "omega_hat" not in trace.rows[1]


def test_iterate_stops_on_cutoff_overflow():
    st = linear_state(8)
    sched = KamSchedule.from_state(st, K0=600.0, lie_cap=2)
    trace = kam_iterate(st, 2, schedule=sched)
    assert trace.stop_reason is not None
    assert trace.stop_reason["reason"] == "cutoff-overflow"
    assert trace.stop_reason["nu"] == 0
    assert len(trace) == 1


def test_schedule_parameter_laws():
    st = linear_state(8)
    sched = KamSchedule.from_state(st)
    assert sched.rho == pytest.approx(max(2.0 * (5.5 + 1.0),
                                          1.0 / (TPAR.L - TPAR.b),
                                          1.0 / (1.0 - TPAR.L)))
    # widths lose a quarter of the remaining headroom per step
    assert sched.nparams_at(0).s == NPAR.s
    assert sched.nparams_at(1).s == pytest.approx(NPAR.s * 0.75)
    assert sched.nparams_at(2).s == pytest.approx(NPAR.s * 0.625)
    assert sched.tparams_at(1).theta == pytest.approx(TPAR.theta * 1.25)
    mus = [sched.tparams_at(nu).mu for nu in range(4)]
    assert all(m1 > m2 > 1.0 for m1, m2 in zip(mus, mus[1:]))
    assert sched.K_at(0) == 1 and sched.K_at(2) == 16
    assert sched.N0_at(1) == int(math.ceil(TPAR.N0 * 2.0 ** sched.rho))
    assert sched.lie_order_at(0) == min(6, max(2, round(math.log(TPAR.N0))))
    with pytest.raises(ValueError):
        KamSchedule(NPAR, ToeplitzParams(20, 4.5, 2.0, 0.03, 0.06, 1), 5.5)
