import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from pathgibbs import interactions as I
from pathgibbs import paths as P
from pathgibbs import transfer as Tr
from pathgibbs import verify as V

# -- Khas'minskii


def test_constant_potential_gamma_is_exact():
    assert V.occupation_mean(V.RadialPower(0.3, 0.0), 0.0) == pytest.approx(0.3, rel=1e-12)
    rep = V.khasminskii_check(V.RadialPower(0.3, 0.0), draws=200, seed=0)
    assert rep.details["gamma"] == pytest.approx(0.3, rel=1e-12)
    assert rep.lhs == pytest.approx(math.exp(0.3), rel=1e-12)
    assert rep.passed


def test_power_gamma_time_factor():
    # the time integral of s^(-3/4) over [0, 1] is 4
    moment = 2 ** -0.75 * special.gamma(0.75) / special.gamma(1.5)
    assert V.power_gamma(1.0, 1.5) == pytest.approx(4 * moment, rel=1e-14)
    assert V.occupation_mean(V.RadialPower(1.0, 1.5), 0.0) == pytest.approx(V.power_gamma(1.0, 1.5), rel=1e-8)
    with pytest.raises(ValueError):
        V.power_gamma(1.0, 2.5)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.01, 5.0), x=st.floats(0.0, 2.0))
def test_gamma_linear_in_potential(c, x):
    base = V.occupation_mean(V.RadialPower(1.0, 1.5), x)
    assert V.occupation_mean(V.RadialPower(c, 1.5), x) == pytest.approx(c * base, rel=1e-10)


def test_gamma_sup_at_origin():
    prof = [V.occupation_mean(V.RadialPower(1.0, 1.5), x) for x in (0.0, 0.3, 1.0, 2.0)]
    assert np.all(np.diff(prof) < 0)
    assert V.occupation_mean(V.RadialPower(1.0, 0.5), 0.0, d=1) > V.occupation_mean(V.RadialPower(1.0, 0.5), 0.5, d=1)
    with pytest.raises(ValueError):
        V.occupation_mean(V.RadialPower(1.0, 1.5), 0.0, d=2)


def test_khasminskii_power_potential():
    c = 0.5 / V.power_gamma(1.0, 1.5) * 0.999
    rep = V.khasminskii_check(V.RadialPower(c, 1.5), draws=4000, seed=1)
    assert rep.details["gamma"] <= rep.details["gamma_singular"] <= 0.5
    assert rep.details["sup_at_zero"]
    assert rep.passed and rep.margin >= 0


def test_regularized_power_potential():
    v = V.RadialPower(0.2, 1.5)
    r = np.array([0.0, 0.1, 1.0])
    assert np.isinf(v(r)[0])
    w = v.regularized(0.05)
    assert np.all(w(r) <= v(r)) and np.isfinite(w(r)[0])
    assert V.occupation_mean(w, 0.0) < V.occupation_mean(v, 0.0)


def test_khasminskii_hypothesis_failure_reported():
    rep = V.khasminskii_check(V.RadialPower(0.5, 1.5), draws=100)
    assert not rep.passed and "hypothesis" in rep.details


# -- Garsia-Rodemich-Rumsey


def test_grr_constant_field():
    rep = V.grr_bound_check(V.ConstantField(2.0), np.zeros(3), 1.0, 0.5, 0.4, n_points=60)
    assert rep.details["M"] == 0.0
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed


def test_grr_linear_field():
    rep = V.grr_bound_check(V.LinearField(3.0), np.zeros(3), 1.0, 0.5, 0.4, n_points=150, seed=2)
    assert rep.passed
    assert rep.details["max_increment"] <= 3.0 * 0.5 + 1e-12


def test_grr_gamma_constant():
    g = V.grr_gamma(3)
    assert 0 < g < V._unit_ball_volume(3)
    # in one dimension an interval of half-length u at the boundary keeps length u
    assert V.grr_gamma(1) == pytest.approx(1.0, rel=1e-12)


def test_grr_needs_close_pairs():
    with pytest.raises(ValueError):
        V.grr_bound_check(V.LinearField(), np.zeros(3), 1.0, 1e-6, 0.4, n_points=10)


def test_grr_coulomb_small_sweep():
    reps = V.coulomb_grr_sweep(n_paths=2, dt=1 / 256, n_points=60, seed=3)
    assert all(r.passed for r in reps)
    assert all(math.isfinite(r.details["M"]) for r in reps)


# -- delta moments


def test_delta_moment_coincident_points():
    assert V.delta_second_moment(0.3, 0.3, 0.05) == 0.0


def test_delta_moment_swap_is_bit_identical():
    a = V._delta_samples(0.2, 0.6, 0.05, 1, 500, 1 / 512, 4)
    b = V._delta_samples(0.6, 0.2, 0.05, 1, 500, 1 / 512, 4)
    np.testing.assert_array_equal(a, b)


def test_delta_moment_oracle_small():
    rep = V.delta_moment_check(0.25, 0.75, kappa=0.05, n=1, draws=3000, dt=1 / 1024, seed=5,
                               h_grid=[0.1, 0.2, 0.4])
    assert rep.details["z"] <= 3
    assert rep.details["slope"] >= rep.details["slope_floor"]


def test_delta_moment_order_checked():
    with pytest.raises(ValueError):
        V.delta_moment_check(0.25, 0.75, n=3)


# -- simplex identity


def test_simplex_n1_closed_form():
    for a in (0.1, 0.25, 0.4):
        assert V.simplex_value(a, 1) == pytest.approx(1 / (1 - a), rel=1e-14)
        assert V._nested_simplex(a, 1) == pytest.approx(1 / (1 - a), rel=1e-12)


def test_simplex_n2_quadrature():
    rep = V.simplex_identity_check(0.25, 2)
    assert rep.passed and rep.margin <= 1e-8
    assert rep.seed is None


def test_simplex_unweighted_limit():
    assert V.simplex_value(1e-12, 2) == pytest.approx(0.5, rel=1e-10)
    assert V.simplex_value(1e-12, 3) == pytest.approx(1 / 6, rel=1e-10)


def test_beta_inner_integral():
    q, closed = V.beta_inner_integral(0.2)
    assert q == pytest.approx(closed, rel=1e-10)


def test_simplex_domain():
    with pytest.raises(ValueError):
        V.simplex_identity_check(0.6, 1)


# -- sup / inf of the row mass


def test_supinf_beta_zero():
    k = I.preset("compact_coulomb", eta=0.05, beta=0.0)
    ens = Tr.sample_block_measure(k, 1.0, 1 / 8, 120, 0)
    rep = V.supinf_maximizer_check(k, ens)
    assert rep.details["ratio"] == 1.0 and rep.passed


@pytest.mark.parametrize("name, params", [("compact_coulomb", {"eta": 0.05}), ("delta_1d", {})])
def test_supinf_maximizer_at_zero(name, params):
    k = I.preset(name, **params)
    ens = Tr.sample_block_measure(k, 1.0, 1 / 8, 300, 1)
    rep = V.supinf_maximizer_check(k, ens)
    assert rep.passed
    assert rep.details["inf_at_least_one"]


def test_supinf_ratio_stable_under_doubling():
    k = I.preset("compact_coulomb", eta=0.05)
    r = [V.supinf_maximizer_check(k, Tr.sample_block_measure(k, 1.0, 1 / 8, n, 1)).details["ratio"]
         for n in (300, 600)]
    assert r[1] == pytest.approx(r[0], rel=0.1)


# -- Pinsker


def test_pinsker_identical_samples():
    x = np.random.default_rng(0).normal(size=5000)
    r = V.pinsker_tv(x, x.copy())
    assert r.tv == 0.0 and r.entropy == pytest.approx(0.0, abs=1e-15) and r.holds


def test_pinsker_gaussian_shift():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=200_000), rng.normal(size=200_000) + 0.5
    r = V.pinsker_tv(a, b, bins=40)
    assert r.holds
    assert r.tv == pytest.approx(V.gaussian_tv(0.5), abs=0.02)
    assert r.tv <= V.gaussian_tv(0.5) + 0.01


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), shift=st.floats(0.0, 3.0), n=st.integers(20, 400))
def test_pinsker_always_holds(seed, shift, n):
    rng = np.random.default_rng(seed)
    assert V.pinsker_tv(rng.normal(size=n), rng.normal(size=n) + shift, bins=10).holds


def test_pinsker_report_and_record():
    rng = np.random.default_rng(2)
    rep = V.pinsker_report(rng.normal(size=1000), rng.normal(size=1000), bins=np.linspace(-4, 4, 9), seed=2)
    rec = rep.record()
    assert list(rec)[:7] == ["lemma", "params", "lhs", "rhs", "margin", "pass", "seed"]
    assert rec["params"]["bins"] == 8 and rec["pass"]
