import math

import numpy as np
import pytest
from scipy import integrate

from pathgibbs import gibbs_mcmc as G
from pathgibbs import interactions as I
from pathgibbs import paths as P
from pathgibbs import she

PAIR = she.MollifierPair()
FAST = G.McmcSettings(block_length=8, sweeps=10, burn_in=5, thin=2)


def _config(**kw):
    base = dict(beta=1.0, t=1.0, eps=0.5, dt=1 / 8, samples=4000, mcmc=FAST, seed=0)
    base.update(kw)
    return she.SheConfig(**base)


# -- mollifiers


def test_mollifier_masses():
    PAIR.validate()
    assert PAIR.psi_mass() == pytest.approx(1.0, abs=1e-9)
    assert PAIR.phi_mass() == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        she.MollifierPair(radius=0.0)


def test_time_self_convolution_mass_and_support():
    rho = PAIR.rho
    assert rho.support == pytest.approx(2 * PAIR.time_half_width)
    mass = 2 * integrate.quad(lambda t: float(rho(t)), 0, rho.support, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert rho(1.0001) == 0.0


def test_space_self_convolution_at_origin():
    v = PAIR.v
    assert v.radial(np.zeros(1))[0] == pytest.approx(PAIR.phi_square_integral(), rel=1e-8)
    assert v.radius == pytest.approx(2 * PAIR.radius)


def test_effective_kernel():
    k = she.effective_kernel(PAIR, 2.0)
    assert k.beta == pytest.approx(2.0)
    assert k.admissibility_class == I.MOLLIFIER_PRODUCT


def test_time_overlaps_sum_to_square_of_horizon():
    dt, n = 1 / 8, 64
    tm = she.time_overlaps(PAIR, 1.0, dt, 10)
    # sum over all cell pairs of the overlap integrates rho over [0, T]^2 up to edge effects
    total = n * tm[0] + 2 * sum((n - m) * tm[m] for m in range(1, 10))
    assert total == pytest.approx(n * dt, rel=0.05)


# -- Gaussian identity


@pytest.fixture(scope="module")
def frozen_path():
    return P.sample_path(P.PathGrid(1.0, 1 / 32, 3), 17)


def test_identity_beta_zero(frozen_path):
    chk = she.gaussian_identity_check(frozen_path, PAIR, 0.0, 0.5)
    assert chk.lhs == chk.middle == chk.rhs == 1.0


@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_identity_deterministic(frozen_path, eps):
    chk = she.gaussian_identity_check(frozen_path, PAIR, 1.0, eps)
    assert chk.discrepancy <= 1e-8
    assert chk.rhs > 1.0


def test_identity_argument_checks(frozen_path):
    with pytest.raises(ValueError):
        she.gaussian_identity_check(frozen_path, she.MollifierPair(d=4), 1.0, 0.5)
    with pytest.raises(ValueError):
        she.gaussian_identity_check(frozen_path, PAIR, 1.0, 1.5)


def test_noise_oracle_small(frozen_path):
    orc = she.noise_oracle(P.sample_path(P.PathGrid(0.5, 1 / 8, 3), 2), PAIR, 0.5, 1.0,
                           draws=20_000, seed=1)
    assert abs(orc.z_score) <= 3
    assert orc.lattice_variance == pytest.approx(orc.variance, rel=0.1)


# -- initial conditions and reference


def test_initial_condition_family():
    assert she.InitialCondition("constant", 3, amplitude=2.0)(np.zeros((4, 3))).tolist() == [2.0] * 4
    u = she.InitialCondition("cosine", 3)
    assert u(np.array([math.pi, 0, 0])) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        she.InitialCondition("sine", 3)
    with pytest.raises(ValueError):
        she.InitialCondition("cosine", 3, wavevector=(1.0, 0.0))
    q = she.InitialCondition("quadratic", 2, cutoff=1.0)
    assert q(np.array([3.0, 0.0])) == 1.0


@pytest.mark.parametrize("kind", ["cosine", "gaussian", "constant"])
def test_reference_with_unit_sigma_is_heat_semigroup(kind):
    u0 = she.InitialCondition(kind, 3, wavevector=(0.6, -0.3, 0.2), center=(0.1, 0.0, -0.2), width=0.8)
    x = (0.3, -0.4, 0.5)
    assert she.homogenized_reference(0.7, x, u0, 1.0) == pytest.approx(u0.heat(0.7, x), rel=1e-10)


def test_reference_quadratic_closed_form():
    u0 = she.InitialCondition("quadratic", 3, cutoff=math.inf)
    x = np.array([0.5, -1.0, 0.25])
    ref = she.homogenized_reference(2.0, x, u0, 0.8)
    assert ref == pytest.approx(x @ x + 3 * 0.8 * 2.0, rel=1e-12)
    with pytest.raises(ValueError):
        she.InitialCondition("quadratic", 3).heat(1.0, x)


def test_reference_constant_and_bad_sigma():
    assert she.homogenized_reference(1.0, (0, 0, 0), she.InitialCondition("constant", 3), 0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        she.homogenized_reference(1.0, (0, 0, 0), she.InitialCondition("cosine", 3), 0.0)


# -- annealed ratio


def test_she_config_validation():
    with pytest.raises(ValueError):
        _config(d=2)
    with pytest.raises(ValueError):
        _config(eps=1.5)
    with pytest.raises(ValueError):
        _config(dt=0.3)
    assert _config(eps=0.25).horizon == pytest.approx(16.0)
    assert _config().replace(beta=0.0).kernel.beta == 0.0


def test_constant_initial_condition_gives_one():
    est = she.annealed_ratio(_config(u0=she.InitialCondition("constant", 3)))
    assert est.value == 1.0 and est.stderr == 0.0


@pytest.mark.parametrize("method", ["mcmc", "importance"])
def test_beta_zero_matches_heat_semigroup(method):
    x = (0.4, 0.0, 0.0)
    cfg = _config(beta=0.0, x=x)
    est = she.annealed_ratio(cfg, method)
    exact = math.exp(-0.5) * math.cos(0.4)
    assert abs(est.value - exact) <= 3 * est.stderr


def test_ratio_translation_covariant():
    cfg = _config()
    shift = np.array([0.7, -0.2, 1.1])
    a = she.annealed_ratio(cfg)
    b = she.annealed_ratio(cfg.replace(x=tuple(shift), u0=cfg.u0.shifted(shift)))
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)
    assert -1 <= a.value <= 1


def test_mcmc_and_transfer_routes_agree():
    cfg = _config(mcmc=G.McmcSettings(block_length=8, sweeps=300, burn_in=200, thin=4), samples=6000)
    mc = she.annealed_ratio(cfg, "mcmc")
    tr = she.annealed_ratio(cfg, "transfer", L=1.0, N=1200)
    # 0.01 allows for the Nystrom error of the transfer route
    assert abs(mc.value - tr.value) <= 3 * mc.stderr + 0.01


def test_transfer_route_restrictions():
    with pytest.raises(ValueError):
        she.annealed_ratio(_config(u0=she.InitialCondition("gaussian", 3)), "transfer")
    with pytest.raises(ValueError):
        she.annealed_ratio(_config(eps=0.8), "transfer", L=1.0, N=60)
    with pytest.raises(ValueError):
        she.annealed_ratio(_config(), "exact")


def test_effective_sample_floor():
    with pytest.raises(she.InsufficientSamples):
        she.annealed_ratio(_config(samples=300), floor=10_000)


def test_homogenization_sweep_rows():
    rows = she.homogenization_sweep(_config(samples=1000), [1.0, 0.5], 0.9)
    assert [r.eps for r in rows] == [1.0, 0.5]
    row = rows[0].row()
    assert tuple(row) == she.HomogenizationReport.columns(3)
    assert rows[0].reference == pytest.approx(math.exp(-0.45))
    assert rows[0].error == pytest.approx(abs(rows[0].ratio - rows[0].reference))


# -- partition growth


def _growth(beta):
    return she.partition_growth(_config(beta=beta), [1.0, 0.5, 0.25], N=300, particles=2000, replicas=4)


def test_partition_growth_beta_zero():
    g = _growth(0.0)
    assert g.theta0 == 0.0 and g.theta1 == 0.0


def test_partition_growth_positive_and_monotone():
    g1, g2 = _growth(1.0), _growth(1.5)
    assert g1.r_squared >= 0.99 and not g1.flagged
    assert g1.theta0 > 3 * g1.theta0_se
    assert g2.theta0 >= g1.theta0 - 3 * math.hypot(g1.theta0_se, g2.theta0_se)
    assert g1.theta0 == pytest.approx(g1.free_energy_rate, rel=0.05)


def test_partition_growth_needs_three_points():
    with pytest.raises(ValueError):
        she.partition_growth(_config(), [1.0, 0.5])
