"""Excluded-measure estimator: box sampling, condition families, gamma
scaling."""

import math

import numpy as np
import pytest

from kamforge import measure as ms
from kamforge.birkhoff import FrequencyModel, frequency_map
from kamforge.errors import DegenerateFitError
from kamforge.fields import TangentialSites
from kamforge.normalform import MelnikovParams, melnikov_check

FM = FrequencyModel(1.0)
S1 = TangentialSites((1,))
S2 = TangentialSites((1, 2))
PB1 = ms.ParameterBox(S1, 0.1)


def frac(gamma, tau=1.5, grid=64, sites=S1, pb=PB1, cutoffs=None, **kw):
    rec = ms.excluded_measure(FM, sites, pb, MelnikovParams(gamma, tau, 1),
                              cutoffs=cutoffs, grid=grid, **kw)
    return rec["fraction"]


def test_parameter_box_geometry():
    assert PB1.volume() == pytest.approx(0.05)
    pb2 = ms.ParameterBox(S2, 0.2)
    assert pb2.volume() == pytest.approx(0.01)

    pts = PB1.grid_points(16)
    assert pts.shape == (16, 1)
    assert pts.min() > 0.05 and pts.max() < 0.1
    pts2 = pb2.grid_points(8)
    assert pts2.shape == (64, 2)

    draws = pb2.sample(500, seed=4)
    assert draws.shape == (500, 2)
    assert draws.min() >= 0.1 and draws.max() <= 0.2
    assert np.array_equal(draws, pb2.sample(500, seed=4))

    with pytest.raises(ValueError):
        ms.ParameterBox(S1, 0.0)
    with pytest.raises(ValueError):
        PB1.grid_points(7)
    with pytest.raises(ValueError):
        PB1.sample(5, seed=0)


def test_vectorized_frequencies_match_scalar_map():
    for sites in (S1, S2):
        pb = ms.ParameterBox(sites, 0.1)
        pts = pb.grid_points(8)[::13]
        omega, js, Omega = ms.frequency_tables(FM, sites, pts, 20)
        assert set(js.tolist()) == {j for j in range(21)
                                    if not sites.is_tangential(j)}
        for r in range(pts.shape[0]):
            xi = {i: float(pts[r, c]) for c, i in enumerate(sites.iplus)}
            nf = frequency_map(FM, sites, xi, j_max=20)
            for c, i in enumerate(sites.iplus):
                assert omega[r, c] == pytest.approx(nf.omega[i], abs=1e-14)
            for c, j in enumerate(js):
                assert Omega[r, c] == pytest.approx(nf.Omega[int(j)],
                                                    abs=1e-14)


def test_default_cutoffs_follow_frequency_scale():
    cut = ms.default_cutoffs(FM, S1)
    assert cut == {"H": 20, "Jmax": 200,
                   "Pmax": int(math.ceil(2 * math.sqrt(2.0) * 20))}
    assert ms.default_cutoffs(FM, S2)["Pmax"] == int(
        math.ceil(2 * math.sqrt(5.0) * 20))


def test_gamma_zero_excludes_nothing():
    rec = ms.excluded_measure(FM, S1, PB1, MelnikovParams(0.0, 1.5, 1),
                              grid=8)
    assert rec["fraction"] == 0.0
    assert all(v == 0.0 for v in rec["per_condition"].values())


def test_baseline_fraction_frozen():
    rec = ms.excluded_measure(FM, S1, PB1, MelnikovParams(1e-3, 1.5, 1),
                              grid=64)
    # deterministic cell-centered grid, frozen on first run
    assert rec["fraction"] == 15.0 / 64.0
    assert 0.0 < rec["fraction"] < 1.0
    pc = rec["per_condition"]
    # near-difference resonances carry the budget
    assert pc["second_minus"] == max(pc.values())
    assert rec["cutoffs"] == {"H": 20, "Jmax": 200, "Pmax": 57}
    assert rec["samples"] == 64

    with pytest.raises(ValueError):
        ms.excluded_measure(FM, S1, PB1, MelnikovParams(1e-3, 1.5, 1),
                            mode="exact")
    with pytest.raises(ValueError):
        ms.excluded_measure(FM, S2, PB1, MelnikovParams(1e-3, 1.5, 1))
    with pytest.raises(ValueError):
        ms.excluded_measure(FM, S1, PB1, MelnikovParams(1e-3, 1.5, 1),
                            cutoffs={"H": 0})


def test_monotone_in_gamma_and_cutoffs():
    chain = [frac(g) for g in (0.0, 1e-5, 1e-4, 1e-3, 1e-2)]
    assert chain == sorted(chain)
    assert chain == [0.0, 0.0, 0.078125, 0.234375, 0.796875]

    for key, values in (("H", (5, 10, 20)), ("Jmax", (30, 60, 120, 200)),
                        ("Pmax", (0, 10, 57))):
        cuts = [dict({"H": 20, "Jmax": 120, "Pmax": 57}, **{key: v})
                for v in values]
        chain = [frac(1e-3, cutoffs=c) for c in cuts]
        assert chain == sorted(chain)


def test_tail_convergence_in_jmax():
    lo = frac(1e-3, cutoffs={"Jmax": 200})
    hi = frac(1e-3, cutoffs={"Jmax": 400})
    assert hi >= lo
    assert abs(hi - lo) <= 0.05 * max(lo, 1e-12)


def test_surviving_points_pass_melnikov_check():
    mp = MelnikovParams(1e-3, 1.5, 9)
    rec = ms.excluded_measure(FM, S1, PB1, mp,
                              cutoffs={"H": 8, "Jmax": 40, "Pmax": 57},
                              grid=16)
    inside = rec["points"][~rec["excluded"]]
    assert 0 < len(inside) < rec["samples"]
    for xi1 in inside[:, 0]:
        nf = frequency_map(FM, S1, {1: float(xi1)}, j_max=40)
        assert melnikov_check(nf, mp, index_bound=40).passed


def test_two_site_box_scaling_envelope():
    # absolute excluded measure grows with rho but stays below the
    # volume-proportional envelope; the crossing count scales with the
    # box's frequency extent, so the growth sits between linear and
    # quadratic in rho
    out = []
    for rho in (0.1, 0.2):
        pb = ms.ParameterBox(S2, rho)
        rec = ms.excluded_measure(FM, S2, pb, MelnikovParams(1e-5, 1.5, 1),
                                  grid=16)
        assert 0.0 < rec["fraction"] < 1.0
        out.append(rec["fraction"] * pb.volume())
    assert out[0] == pytest.approx(0.0859375 * 0.0025)
    assert out[1] > out[0]
    assert out[1] / out[0] <= 8.0


def test_montecarlo_mode_agrees_with_grid():
    g = frac(1e-3, grid=256)
    mc = frac(1e-3, grid=20000, mode="montecarlo", seed=7)
    assert abs(g - mc) < 0.05
    assert mc == frac(1e-3, grid=20000, mode="montecarlo", seed=7)


def test_gamma_scaling_fit_slope_and_validation():
    gammas = (1e-2, 1e-3, 1e-4, 1e-5)
    fractions = [frac(g, grid=256) for g in gammas]
    fit = ms.gamma_scaling_fit(gammas, fractions)
    assert fit["slope"] == pytest.approx(2.0 / 3.0, abs=0.1)
    assert fit["r2"] > 0.9
    assert fit["intercept"] == pytest.approx(
        np.log(fractions).mean() - fit["slope"] * np.log(gammas).mean())

    with pytest.raises(ValueError):
        ms.gamma_scaling_fit((1e-2, 1e-3, 1e-4), (0.1, 0.05, 0.02))
    with pytest.raises(ValueError):
        ms.gamma_scaling_fit(gammas, (0.1, 0.05, 0.02))
    with pytest.raises(ValueError):
        ms.gamma_scaling_fit((1e-2, 1e-3, 1e-4, 0.0), (0.1, 0.05, 0.02, 0.01))
    with pytest.raises(DegenerateFitError):
        ms.gamma_scaling_fit(gammas, (0.1, 0.05, 0.02, 0.0))
