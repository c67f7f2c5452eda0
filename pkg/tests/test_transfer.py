import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathgibbs import gibbs_mcmc as G
from pathgibbs import interactions as I
from pathgibbs import paths as P
from pathgibbs import transfer as Tr

DT = 1 / 8


@pytest.fixture(scope="module")
def beta1():
    ens = Tr.sample_block_measure(I.preset("mollifier_product"), 1.0, DT, 600, 0)
    op = Tr.build_operator(ens)
    spec = Tr.perron_eigenpair(op)
    return ens, op, spec, Tr.tilted_chain(spec, op)


@pytest.fixture(scope="module")
def beta0():
    ens = Tr.sample_block_measure(I.preset("mollifier_product", beta=0.0), 1.0, DT, 600, 0)
    op = Tr.build_operator(ens)
    spec = Tr.perron_eigenpair(op)
    return ens, op, spec, Tr.tilted_chain(spec, op)


def _bounded_box(beta=1.0, d=3):
    return I.InteractionKernel(I.CompactBox(half_width=0.5), I.Bounded(d=d, shape="gaussian", width=1.0), beta)


# -- blocks and ensembles


def test_prior_blocks_rounding_and_symmetry():
    b = Tr.prior_blocks(100, 8, 3, DT, seed=1)
    assert b.shape == (96, 8, 3)
    np.testing.assert_allclose(b.reshape(16, 6, 8, 3).sum(axis=1), 0.0, atol=1e-14)
    with pytest.raises(ValueError):
        Tr.prior_blocks(4, 8, 3, DT, seed=1)


def test_prior_blocks_whitened_endpoint_covariance():
    b = Tr.prior_blocks(600, 8, 3, DT, seed=2)
    end = b.sum(axis=1)
    np.testing.assert_allclose(end.T @ end / end.shape[0], np.eye(3), atol=1e-12)


def test_prior_blocks_nested_in_n_and_dt():
    small = Tr.prior_blocks(60, 8, 3, DT, seed=3, whiten=False)
    large = Tr.prior_blocks(120, 8, 3, DT, seed=3, whiten=False)
    np.testing.assert_array_equal(small, large[:60])
    fine = Tr.prior_blocks(60, 16, 3, DT / 2, seed=3, whiten=False)
    np.testing.assert_allclose(fine.reshape(60, 8, 2, 3).sum(axis=2), small, atol=1e-14)


def test_prior_blocks_bridge_variance():
    b = Tr.prior_blocks(6000, 8, 1, DT, seed=4, whiten=False)
    mid = b[:, :4, 0].sum(axis=1)
    assert np.var(mid) == pytest.approx(0.5, rel=0.06)


def test_beta_zero_ensemble_is_untilted(beta0):
    ens, op, _, _ = beta0
    np.testing.assert_allclose(ens.weights, 1 / ens.n, rtol=1e-14)
    assert ens.log_z == 0.0 and ens.z_hat == 1.0
    assert np.all(op.K == 1.0)


def test_block_increment_helpers(beta1):
    ens = beta1[0]
    xi = ens.block(3)
    assert xi.length == pytest.approx(1.0)
    np.testing.assert_array_equal(xi.displacements[0], 0.0)
    np.testing.assert_allclose(xi.displacements[-1], ens.displacement[3])
    np.testing.assert_array_equal((-xi).increments, -xi.increments)


def test_z_hat_monotone_in_beta():
    logs = [Tr.sample_block_measure(I.preset("mollifier_product", beta=b), 1.0, DT, 300, 1).log_z
            for b in (0.0, 0.5, 1.0, 1.5)]
    assert np.all(np.diff(logs) >= 0)


def test_z_hat_two_step_oracle():
    kernel = _bounded_box(beta=1.0, d=1)
    dt = 0.25
    ens = Tr.sample_block_measure(kernel, 2 * dt, dt, 40_000, 6)
    x, w = np.polynomial.hermite_e.hermegauss(60)
    w /= w.sum()
    inc = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1).reshape(-1, 2, 1) * math.sqrt(dt)
    z = np.sum(np.outer(w, w).ravel() * np.exp(Tr.self_energies(kernel, dt, inc)))
    assert ens.z_hat == pytest.approx(z, rel=0.01)
    np.testing.assert_allclose(Tr.self_energies(kernel, dt, inc[:20]),
                               P.hamiltonian_batch(inc[:20], kernel, dt), rtol=1e-12)


def test_mcmc_mode_ensemble():
    kernel = I.preset("mollifier_product")
    ens = Tr.sample_block_measure(kernel, 1.0, DT, 200, 2, mode="mcmc",
                                  mcmc=G.McmcSettings(block_length=4, sweeps=2200, burn_in=200, thin=10))
    assert ens.mode == "mcmc" and ens.ess == 200
    np.testing.assert_allclose(ens.weights, 1 / 200)
    with pytest.raises(ValueError):
        Tr.sample_block_measure(kernel, 1.0, DT, 200, 2, mode="exact")


def test_weight_degeneracy_flagged():
    ens = Tr.sample_block_measure(I.preset("mollifier_product", beta=4.0), 1.0, DT, 120, 0, ess_floor=0.9)
    assert ens.flagged


def test_block_length_must_fit_grid():
    with pytest.raises(ValueError):
        Tr.sample_block_measure(I.preset("mollifier_product"), 1.0, 0.3, 60, 0)


# -- coupling


def test_coupling_scales_with_beta_and_is_nonnegative(beta1):
    ens = beta1[0]
    k0 = Tr.coupling_k(ens.block(0), ens.block(1), I.preset("mollifier_product", beta=0.0))
    assert k0 == 0.0
    assert np.all(beta1[1].k >= 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_coupling_joint_negation(seed):
    kernel = I.preset("poly_bounded")
    b = Tr.prior_blocks(6, 8, 3, DT, seed, whiten=False)
    xi, nxt = Tr.BlockIncrement(b[0], DT), Tr.BlockIncrement(b[3], DT)
    assert Tr.coupling_k(-xi, -nxt, kernel) == pytest.approx(Tr.coupling_k(xi, nxt, kernel), rel=1e-12, abs=1e-300)


def test_coupling_matches_hamiltonian_split():
    kernel = I.preset("mollifier_product")
    b = Tr.prior_blocks(6, 8, 3, DT, 5)
    two = np.concatenate([b[0], b[2]])[None]
    total = P.hamiltonian_batch(two, kernel, DT)[0]
    parts = Tr.self_energies(kernel, DT, b[[0, 2]]).sum()
    k = Tr.coupling_k(Tr.BlockIncrement(b[0], DT), Tr.BlockIncrement(b[2], DT), kernel)
    assert kernel.beta * total == pytest.approx(kernel.beta * parts + k, rel=1e-12)
    assert Tr.coupling_matrix(kernel, DT, b[:1], b[2:3])[0, 0] == pytest.approx(k, rel=1e-14)


def test_coupling_refinement_self_convergence():
    kernel = I.preset("mollifier_product")
    grid = P.PathGrid(2.0, 1 / 4, 3)
    vals = []
    for s in range(6):
        path = P.sample_path(grid, s)
        rng = P.seed_stream(s, 5)
        row = []
        for _ in range(4):
            m = path.grid.n_steps // 2
            dt = path.grid.dt
            row.append(Tr.coupling_k(Tr.BlockIncrement(path.increments[:m], dt),
                                     Tr.BlockIncrement(path.increments[m:], dt), kernel))
            path = P.refine(path, rng)
        vals.append(np.abs(np.diff(row)))
    steps = np.sqrt(np.mean(np.array(vals) ** 2, axis=0))
    assert steps[-1] < steps[0]


def test_neighbour_exactness():
    kernel = I.preset("mollifier_product")
    assert Tr.neighbour_exact(kernel, 1.0, DT)
    assert not Tr.neighbour_exact(kernel, 0.5, DT)


# -- operator and spectrum


def test_operator_entries_at_least_one(beta1):
    op = beta1[1]
    assert np.all(op.K >= 1.0)
    u = np.random.default_rng(0).random(op.n)
    np.testing.assert_allclose(op.apply(u), op.K @ (op.weights * u), rtol=1e-12)


def test_hilbert_schmidt_stable_under_doubling():
    kernel = I.preset("mollifier_product")
    hs = [Tr.build_operator(Tr.sample_block_measure(kernel, 1.0, DT, n, 0)).hilbert_schmidt() for n in (600, 1200)]
    assert hs[1] == pytest.approx(hs[0], rel=0.05)


def test_perron_pair_properties(beta1):
    _, op, spec, _ = beta1
    assert spec.lambda0 >= 1.0
    assert spec.psi.min() > 0 and spec.psi.max() == 1.0
    assert 0 < spec.delta <= 1
    assert spec.delta == spec.psi.min()
    assert spec.residual < 1e-12
    assert spec.lambda0 <= Tr.spectral_radius_bound(op)
    assert 0 < spec.gap < 1
    assert spec.log_lambda0 == pytest.approx(math.log(spec.lambda0), rel=1e-14)


def test_beta_zero_spectrum(beta0):
    _, _, spec, chain = beta0
    assert spec.lambda0 == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(spec.psi, 1.0, atol=1e-12)
    assert spec.delta == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(chain.P, np.tile(chain.weights, (chain.P.shape[0], 1)), atol=1e-14)


def test_lambda0_increases_with_beta():
    lams = []
    for b in (0.0, 0.5, 1.0, 1.5, 2.0):
        ens = Tr.sample_block_measure(I.preset("mollifier_product", beta=b), 1.0, DT, 300, 0)
        lams.append(Tr.perron_eigenpair(Tr.build_operator(ens)).lambda0)
    assert np.all(np.diff(lams) > 0)
    assert lams[2] - 1.0 > 0.01


def test_log_space_shift_handles_large_coupling():
    ens = Tr.sample_block_measure(I.preset("mollifier_product", beta=8.0), 1.0, DT, 60, 0, ess_floor=0.0)
    op = Tr.build_operator(ens)
    spec = Tr.perron_eigenpair(op)
    assert op.shift > 20 and math.isfinite(spec.log_lambda0)
    # the Perron root lies between the smallest and largest row sums
    log_rows = op.shift + np.log(op.scaled @ op.weights)
    assert log_rows.min() - 1e-12 <= spec.log_lambda0 <= log_rows.max() + 1e-12


def test_singular_coupling_is_reported():
    ens = Tr.sample_block_measure(I.preset("compact_coulomb", eta=0.0), 1.0, 1 / 4, 12, 0)
    ens.increments[:] = 0.0
    with pytest.raises(FloatingPointError):
        Tr.build_operator(ens)


# -- tilted chain and contraction


def test_tilted_chain_properties(beta1):
    _, op, spec, chain = beta1
    assert np.all(chain.P > 0)
    assert chain.row_defect <= 1e-6
    assert chain.stationarity_defect <= 1e-6
    assert abs(chain.row_defect - spec.residual) <= 1e-10
    floor = np.min(chain.P / chain.weights[None, :])
    assert floor >= spec.delta / spec.lambda0


def test_tilted_chain_rejects_bad_eigenpair(beta1):
    _, op, spec, _ = beta1
    bad = Tr.SpectralResult(spec.lambda0 * 1.01, spec.log_lambda0, spec.psi, spec.phi, spec.delta,
                            spec.residual, spec.lambda1_abs, spec.iterations, spec.shift)
    with pytest.raises(RuntimeError):
        Tr.tilted_chain(bad, op)


def test_tv_contraction(beta1):
    _, _, spec, chain = beta1
    c = Tr.tv_contraction(chain, 6, spec=spec)
    assert np.all(np.diff(c.spread) <= 1e-15)
    assert c.rate_low > 0
    for n in (1, 2, 3):
        assert c.spread[2 * n - 1] <= (1 - 0.5) * c.spread[n - 1]
    assert 0 < c.doeblin_factor < 1


def test_tv_contraction_beta_zero(beta0):
    c = Tr.tv_contraction(beta0[3], 4)
    assert np.all(c.spread <= 1e-13)


# -- Poisson equation and variance


def test_poisson_constant_observable(beta1):
    chain = beta1[3]
    sol = Tr.solve_poisson(chain, np.full(chain.P.shape[0], 2.5))
    np.testing.assert_allclose(sol.u, 0.0, atol=1e-12)


def test_poisson_beta_zero_returns_observable(beta0):
    ens, _, _, chain = beta0
    sol = Tr.solve_poisson(chain, ens.displacement)
    np.testing.assert_allclose(sol.u, ens.displacement, atol=1e-12)


def test_poisson_solvers_agree(beta1):
    ens, _, _, chain = beta1
    a = Tr.solve_poisson(chain, ens.displacement, "direct")
    b = Tr.solve_poisson(chain, ens.displacement, "neumann")
    np.testing.assert_allclose(a.u, b.u, atol=1e-8)
    assert max(a.residual, b.residual) < 1e-10
    with pytest.raises(ValueError):
        Tr.solve_poisson(chain, ens.displacement, "gmres")


def test_variance_routes_beta_zero(beta0):
    ens, _, _, chain = beta0
    var = Tr.dirichlet_variance(chain, Tr.solve_poisson(chain, ens.displacement), ens.L)
    for route in (var.dirichlet_form, var.classical, var.autocovariance):
        assert route.value == pytest.approx(1.0, abs=1e-10)


def test_variance_routes_beta_one(beta1):
    ens, _, _, chain = beta1
    var = Tr.dirichlet_variance(chain, Tr.solve_poisson(chain, ens.displacement), ens.L)
    assert 0 < var.classical.value < 1
    assert var.autocovariance.value == pytest.approx(var.classical.value, rel=1e-6)
    assert not var.flagged
    assert len(var.per_coordinate["classical"]) == 3


def test_transfer_clt_record():
    res = Tr.transfer_clt(I.preset("mollifier_product"), 1.0, DT, 300, seed=0)
    rec = res.record()
    assert set(rec) == {"beta", "L", "dt", "N", "lambda0", "log_lambda0_shift", "delta", "gap",
                        "sigma2_dirichlet", "sigma2_classical", "sigma2_autocov", "residual", "seed"}
    assert Tr.free_energy_rate(res) == pytest.approx(res.ensemble.log_z + res.spectral.log_lambda0)


# -- free energy and marginals


def test_free_energy_beta_zero(beta0):
    ens, op, spec, _ = beta0
    fe = Tr.free_energy_check(ens, op, spec, 4, particles=500, replicas=2)
    assert fe.estimate == 0.0 and fe.exact == pytest.approx(0.0, abs=1e-14)
    assert fe.log_lambda0 == pytest.approx(0.0, abs=1e-10)


def test_free_energy_one_step_exact(beta1):
    ens, op, spec, _ = beta1
    fe = Tr.free_energy_check(ens, op, spec, 1, particles=5000, replicas=8, seed=3)
    direct = math.log(ens.weights @ op.K @ ens.weights)
    assert fe.exact == pytest.approx(direct, rel=1e-12)
    assert abs(fe.estimate - fe.exact) <= 3 * fe.stderr


def test_chain_characteristic_beta_zero(beta0):
    ens, op, _, _ = beta0
    mean_cos = ens.weights @ np.cos(ens.displacement[:, 0])
    assert Tr.chain_characteristic(ens, op, 4, [1.0, 0.0, 0.0]) == pytest.approx(mean_cos ** 4, rel=1e-10)
    with pytest.raises(ValueError):
        Tr.chain_characteristic(ens, op, 0, [1.0, 0.0, 0.0])


def test_marginal_beta_zero_and_self_test(beta0):
    ens, _, _, chain = beta0
    gib = Tr.prior_blocks(4000, 8, 3, DT, seed=9, whiten=False)
    cmp = Tr.marginal_vs_gibbs(chain, ens, 1, gib)
    assert cmp.tv <= 3 * cmp.noise_floor + 0.05
    other = Tr.prior_blocks(4000, 8, 3, DT, seed=10, whiten=False)
    half = Tr._binned_tv(*(np.histogram(x.sum(axis=1)[:, 0], bins=np.linspace(-4, 4, 13))[0].astype(float)
                           for x in (gib, other)))
    assert half <= 3 * cmp.noise_floor


def test_marginal_decreases_towards_gibbs(beta1):
    ens, _, _, chain = beta1
    settings = G.McmcSettings(block_length=8, sweeps=6200, burn_in=200, thin=3)
    gib = Tr.gibbs_block_samples(ens.kernel, 1.0, DT, 9, 4, settings, seed=1)
    tvs = [Tr.marginal_vs_gibbs(chain, ens, n, gib).tv for n in (1, 2, 4, 8)]
    assert tvs[-1] <= tvs[0]


# -- block approximation


def test_entropy_gap_vanishes_for_short_rho():
    gap = Tr.block_entropy_gap(_bounded_box(), 8.0, L=4.0, dt=0.25)
    assert gap.estimate == 0.0 and gap.envelope == 0.0


def test_entropy_gap_below_envelope():
    kernel = I.preset("poly_bounded", theta=2.5)
    gap = Tr.block_entropy_gap(kernel, 16.0, dt=0.5, settings=G.McmcSettings(block_length=8, sweeps=1200, burn_in=200))
    assert 0 <= gap.estimate <= gap.envelope
    assert gap.tv_bound == pytest.approx(math.sqrt(gap.estimate / 2))
    assert gap.L == pytest.approx(16 / math.log(16))


def test_block_labels():
    lab = Tr.block_labels(10, 0.5, 2.0)
    np.testing.assert_array_equal(lab, [0, 0, 0, 0, 1, 1, 1, 1, 2, 2])


def test_row_mass_ratio_uniform_in_block_length():
    ratios = []
    for L in (1.0, 2.0, 4.0):
        for n in (300, 600):
            rm = Tr.build_operator(Tr.sample_block_measure(_bounded_box(), L, 0.25, n, 0)).row_mass()
            ratios.append(rm.max() / rm.min())
    assert max(ratios) <= 1.2
